#pragma once

#include <cmath>
#include <cstdint>

#include "polcolor/nn/layers.hpp"

namespace polcolor::nn {

struct AdamConfig {
    double learning_rate = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-6;

    bool operator==(const AdamConfig&) const = default;
};

template <typename Scalar>
struct AdamState {
    AdamConfig config;
    NetParams<Scalar> first_moment;
    NetParams<Scalar> second_moment;
    std::uint64_t step_count = 0;

    static AdamState zeros_like(const NetParams<Scalar>& params, const AdamConfig& config = {}) {
        AdamState s;
        s.config = config;
        for (const auto& p : params) {
            s.first_moment.push_back(LayerParams<Scalar>::zeros_like(p));
            s.second_moment.push_back(LayerParams<Scalar>::zeros_like(p));
        }
        return s;
    }
};

namespace detail {

template <typename Scalar, typename Param, typename Grad, typename Moment>
void adam_update(Param& value, const Grad& grad, Moment& m, Moment& v, const AdamConfig& c,
                 double bias1, double bias2) {
    const auto b1 = static_cast<Scalar>(c.beta1);
    const auto b2 = static_cast<Scalar>(c.beta2);
    m = b1 * m + (Scalar(1) - b1) * grad;
    v = b2 * v + (Scalar(1) - b2) * grad.cwiseProduct(grad);
    const auto step = static_cast<Scalar>(c.learning_rate / bias1);
    const auto root_bias2 = static_cast<Scalar>(std::sqrt(bias2));
    const auto eps = static_cast<Scalar>(c.epsilon);
    value.array() -= step * m.array() / ((v.array().sqrt() / root_bias2) + eps);
}

}  // namespace detail

/// One bias-corrected Adam update of every layer; bumps each layer's version.
template <typename Scalar>
void adam_step(NetParams<Scalar>& params, const NetParams<Scalar>& grads, AdamState<Scalar>& state) {
    if (grads.size() != params.size() || state.first_moment.size() != params.size())
        throw InvalidInput("adam_step: parameter/gradient layer count mismatch");
    ++state.step_count;
    const auto t = static_cast<double>(state.step_count);
    const double bias1 = 1.0 - std::pow(state.config.beta1, t);
    const double bias2 = 1.0 - std::pow(state.config.beta2, t);
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto& p = params[i];
        const auto& g = grads[i];
        if (g.weight.rows() != p.weight.rows() || g.weight.cols() != p.weight.cols() ||
            g.bias.size() != p.bias.size())
            throw InvalidInput("adam_step: gradient shape mismatch at layer " + std::to_string(i));
        detail::adam_update<Scalar>(p.weight, g.weight, state.first_moment[i].weight,
                                    state.second_moment[i].weight, state.config, bias1, bias2);
        detail::adam_update<Scalar>(p.bias, g.bias, state.first_moment[i].bias,
                                    state.second_moment[i].bias, state.config, bias1, bias2);
        ++p.version;
    }
}

}  // namespace polcolor::nn
