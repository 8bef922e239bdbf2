#pragma once

#include <cmath>
#include <vector>

#include "polcolor/nn/layers.hpp"

namespace polcolor::nn {

/// Per-head bin targets, (heads x batch).
using TargetMatrix = Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic>;

template <typename Scalar>
Vector<Scalar> softmax_head(const Vector<Scalar>& logits) {
    return softmax_columns<Scalar>(logits);
}

/// L = -1/(H B K) * sum over pixels and heads of ln p(target), where each
/// head's probabilities are a (K x B) matrix.
template <typename Scalar>
double cross_entropy(const std::vector<Matrix<Scalar>>& probs, const TargetMatrix& targets) {
    const auto heads = static_cast<Eigen::Index>(probs.size());
    if (heads == 0 || targets.rows() != heads) throw InvalidInput("cross_entropy: head count mismatch");
    const Eigen::Index bins = probs.front().rows();
    const Eigen::Index batch = probs.front().cols();
    if (targets.cols() != batch) throw InvalidInput("cross_entropy: batch size mismatch");
    double total = 0.0;
    for (Eigen::Index h = 0; h < heads; ++h) {
        const auto& p = probs[static_cast<std::size_t>(h)];
        if (p.rows() != bins || p.cols() != batch) throw InvalidInput("cross_entropy: head shape mismatch");
        for (Eigen::Index i = 0; i < batch; ++i) {
            const int t = targets(h, i);
            if (t < 0 || t >= bins) throw InvalidInput("cross_entropy: target index out of range");
            total -= std::log(static_cast<double>(p(t, i)));
        }
    }
    return total / static_cast<double>(heads * batch * bins);
}

template <typename Scalar>
struct SoftmaxLoss {
    double loss = 0.0;
    std::vector<Matrix<Scalar>> grad_logits;  // per head, (K x B)
};

/// Fused softmax + cross-entropy over head logits. The logit gradient is
/// (p - onehot) / (H B K).
template <typename Scalar>
SoftmaxLoss<Scalar> softmax_cross_entropy(const std::vector<Matrix<Scalar>>& logits,
                                          const TargetMatrix& targets) {
    std::vector<Matrix<Scalar>> probs;
    probs.reserve(logits.size());
    for (const auto& z : logits) probs.push_back(softmax_columns<Scalar>(z));

    SoftmaxLoss<Scalar> out;
    out.loss = cross_entropy<Scalar>(probs, targets);
    const double scale = 1.0 / static_cast<double>(probs.size() * static_cast<std::size_t>(probs.front().size()));
    for (std::size_t h = 0; h < probs.size(); ++h) {
        Matrix<Scalar> g = probs[h];
        for (Eigen::Index i = 0; i < g.cols(); ++i) g(targets(static_cast<Eigen::Index>(h), i), i) -= Scalar(1);
        out.grad_logits.push_back(g * static_cast<Scalar>(scale));
    }
    return out;
}

}  // namespace polcolor::nn
