#pragma once

#include <span>
#include <vector>

#include "polcolor/nn/layers.hpp"

namespace polcolor::nn {

/// Per-layer caches of one forward pass, plus each layer's output when requested.
template <typename Scalar>
struct Tape {
    std::vector<LayerCache<Scalar>> caches;
    std::vector<Tensor<Scalar>> outputs;
};

template <typename Scalar>
Tensor<Scalar> sequential_forward(std::span<const LayerSpec> specs,
                                  std::span<const LayerParams<Scalar>> params, Tensor<Scalar> x,
                                  Tape<Scalar>* tape = nullptr, bool keep_outputs = false) {
    if (specs.size() != params.size()) throw InvalidInput("sequential: spec/param count mismatch");
    if (tape) {
        tape->caches.clear();
        tape->outputs.clear();
    }
    for (std::size_t i = 0; i < specs.size(); ++i) {
        auto r = layer_forward<Scalar>(specs[i], params[i], x);
        if (tape) {
            tape->caches.push_back(std::move(r.cache));
            if (keep_outputs) tape->outputs.push_back(r.output);
        }
        x = std::move(r.output);
    }
    return x;
}

/// Backpropagates through the layers in reverse, writing each layer's
/// parameter gradient into `grads`. Before layer i is processed,
/// `inject(i, grad)` may add gradient arriving at layer i's output from
/// outside the chain (feature taps).
template <typename Scalar, typename Inject>
Tensor<Scalar> sequential_backward(std::span<const LayerSpec> specs,
                                   std::span<const LayerParams<Scalar>> params, const Tape<Scalar>& tape,
                                   Tensor<Scalar> grad, std::span<LayerParams<Scalar>> grads, Inject&& inject) {
    if (tape.caches.size() != specs.size()) throw InvalidInput("sequential: tape does not match network");
    for (std::size_t n = specs.size(); n-- > 0;) {
        inject(n, grad);
        auto r = layer_backward<Scalar>(specs[n], params[n], tape.caches[n], grad);
        grads[n] = std::move(r.grad_params);
        grad = std::move(r.grad_input);
    }
    return grad;
}

template <typename Scalar>
Tensor<Scalar> sequential_backward(std::span<const LayerSpec> specs,
                                   std::span<const LayerParams<Scalar>> params, const Tape<Scalar>& tape,
                                   Tensor<Scalar> grad, std::span<LayerParams<Scalar>> grads) {
    return sequential_backward<Scalar>(specs, params, tape, std::move(grad), grads,
                                       [](std::size_t, Tensor<Scalar>&) {});
}

}  // namespace polcolor::nn
