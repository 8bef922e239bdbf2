#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "polcolor/nn/tensor.hpp"

namespace polcolor::nn {

enum class LayerKind { Conv3x3, Relu, MaxPool2x2, FullyConnected, SoftmaxHead };

inline std::string to_string(LayerKind kind) {
    switch (kind) {
    case LayerKind::Conv3x3: return "conv3x3";
    case LayerKind::Relu: return "relu";
    case LayerKind::MaxPool2x2: return "maxpool2x2";
    case LayerKind::FullyConnected: return "fully_connected";
    case LayerKind::SoftmaxHead: return "softmax_head";
    }
    return "unknown";
}

/// Convolutions are 3x3, stride 1, same-size output with replicated borders;
/// pooling is 2x2, stride 2.
struct LayerSpec {
    LayerKind kind = LayerKind::Relu;
    int in_channels = 0;
    int out_channels = 0;
    int stride = 1;

    static LayerSpec conv3x3(int in, int out) { return {LayerKind::Conv3x3, in, out, 1}; }
    static LayerSpec relu() { return {LayerKind::Relu, 0, 0, 1}; }
    static LayerSpec maxpool2x2() { return {LayerKind::MaxPool2x2, 0, 0, 2}; }
    static LayerSpec fully_connected(int in, int out) { return {LayerKind::FullyConnected, in, out, 1}; }
    static LayerSpec softmax_head() { return {LayerKind::SoftmaxHead, 0, 0, 1}; }

    bool has_params() const { return kind == LayerKind::Conv3x3 || kind == LayerKind::FullyConnected; }
    int fan_in() const { return kind == LayerKind::Conv3x3 ? 9 * in_channels : in_channels; }
    bool operator==(const LayerSpec&) const = default;
};

/// Weights and bias of one layer. Conv weights are (out x 9*in) with column
/// index in*9 + ky*3 + kx; fully connected weights are (out x in).
/// `version` is bumped on every optimizer update so stale caches are detected.
template <typename Scalar>
struct LayerParams {
    Matrix<Scalar> weight;
    Vector<Scalar> bias;
    std::uint64_t version = 0;

    Eigen::Index size() const { return weight.size() + bias.size(); }

    static LayerParams zeros_like(const LayerParams& other) {
        LayerParams z;
        z.weight = Matrix<Scalar>::Zero(other.weight.rows(), other.weight.cols());
        z.bias = Vector<Scalar>::Zero(other.bias.size());
        return z;
    }

    template <typename Other>
    LayerParams<Other> cast() const {
        LayerParams<Other> out;
        out.weight = weight.template cast<Other>();
        out.bias = bias.template cast<Other>();
        out.version = version;
        return out;
    }
};

template <typename Scalar>
using NetParams = std::vector<LayerParams<Scalar>>;

template <typename Scalar>
struct LayerCache {
    LayerSpec spec;
    Shape input_shape;
    std::uint64_t version = 0;
    std::vector<Matrix<Scalar>> saved;  // im2col blocks, inputs or outputs
    std::vector<int> argmax;            // maxpool winners
    bool valid = false;
};

/// He-style uniform fan-in initialization, zero bias.
template <typename Scalar>
LayerParams<Scalar> init_layer(const LayerSpec& spec, std::mt19937_64& rng) {
    LayerParams<Scalar> p;
    if (!spec.has_params()) return p;
    const int cols = spec.fan_in();
    const double limit = std::sqrt(6.0 / static_cast<double>(cols));
    std::uniform_real_distribution<double> dist(-limit, limit);
    p.weight.resize(spec.out_channels, cols);
    for (Eigen::Index j = 0; j < p.weight.cols(); ++j)
        for (Eigen::Index i = 0; i < p.weight.rows(); ++i) p.weight(i, j) = static_cast<Scalar>(dist(rng));
    p.bias = Vector<Scalar>::Zero(spec.out_channels);
    return p;
}

namespace detail {

[[noreturn]] inline void shape_error(const LayerSpec& spec, const Shape& got, const std::string& expected) {
    throw InvalidInput(to_string(spec.kind) + ": input shape " + got.str() + " incompatible, expected " + expected);
}

// Same-size 3x3 windows with edge-replicated borders, so a constant image
// stays constant through the convolution.
inline int clamp_index(int i, int n) { return i < 0 ? 0 : (i >= n ? n - 1 : i); }

template <typename Scalar>
Matrix<Scalar> im2col(const Eigen::Map<const Matrix<Scalar>>& item, int height, int width) {
    const int channels = static_cast<int>(item.cols());
    Matrix<Scalar> cols(static_cast<Eigen::Index>(height) * width, 9 * channels);
    for (int c = 0; c < channels; ++c) {
        const Scalar* src = item.col(c).data();
        for (int ky = 0; ky < 3; ++ky) {
            for (int kx = 0; kx < 3; ++kx) {
                Scalar* dst = cols.col(c * 9 + ky * 3 + kx).data();
                for (int y = 0; y < height; ++y) {
                    const Scalar* row = src + clamp_index(y + ky - 1, height) * width;
                    for (int x = 0; x < width; ++x) dst[y * width + x] = row[clamp_index(x + kx - 1, width)];
                }
            }
        }
    }
    return cols;
}

template <typename Scalar>
void col2im_add(const Matrix<Scalar>& cols, Eigen::Map<Matrix<Scalar>> item, int height, int width) {
    const int channels = static_cast<int>(item.cols());
    for (int c = 0; c < channels; ++c) {
        Scalar* dst = item.col(c).data();
        for (int ky = 0; ky < 3; ++ky) {
            for (int kx = 0; kx < 3; ++kx) {
                const Scalar* src = cols.col(c * 9 + ky * 3 + kx).data();
                for (int y = 0; y < height; ++y) {
                    Scalar* row = dst + clamp_index(y + ky - 1, height) * width;
                    for (int x = 0; x < width; ++x) row[clamp_index(x + kx - 1, width)] += src[y * width + x];
                }
            }
        }
    }
}

}  // namespace detail

/// Column-wise softmax with max shift.
template <typename Scalar>
Matrix<Scalar> softmax_columns(const Matrix<Scalar>& logits) {
    Matrix<Scalar> probs(logits.rows(), logits.cols());
    for (Eigen::Index j = 0; j < logits.cols(); ++j) {
        const Scalar peak = logits.col(j).maxCoeff();
        probs.col(j) = (logits.col(j).array() - peak).exp().matrix();
        probs.col(j) /= probs.col(j).sum();
    }
    return probs;
}

template <typename Scalar>
struct ForwardResult {
    Tensor<Scalar> output;
    LayerCache<Scalar> cache;
};

template <typename Scalar>
ForwardResult<Scalar> layer_forward(const LayerSpec& spec, const LayerParams<Scalar>& params,
                                    const Tensor<Scalar>& input) {
    const Shape& in = input.shape;
    ForwardResult<Scalar> r;
    r.cache.spec = spec;
    r.cache.input_shape = in;
    r.cache.version = params.version;
    r.cache.valid = true;

    switch (spec.kind) {
    case LayerKind::Conv3x3: {
        if (in.channels != spec.in_channels)
            detail::shape_error(spec, in, "channels = " + std::to_string(spec.in_channels));
        if (params.weight.rows() != spec.out_channels || params.weight.cols() != 9 * spec.in_channels)
            throw InvalidInput("conv3x3: weight shape does not match layer spec");
        r.output = Tensor<Scalar>({in.batch, spec.out_channels, in.height, in.width});
        r.cache.saved.reserve(static_cast<std::size_t>(in.batch));
        for (int b = 0; b < in.batch; ++b) {
            Matrix<Scalar> cols = detail::im2col<Scalar>(input.item(b), in.height, in.width);
            auto out = r.output.item(b);
            out.noalias() = cols * params.weight.transpose();
            out.rowwise() += params.bias.transpose();
            r.cache.saved.push_back(std::move(cols));
        }
        break;
    }
    case LayerKind::Relu:
        r.output = Tensor<Scalar>(in, input.data.cwiseMax(Scalar(0)));
        r.cache.saved.push_back(input.data);
        break;
    case LayerKind::MaxPool2x2: {
        if (in.height % 2 || in.width % 2) detail::shape_error(spec, in, "even spatial dims");
        const int oh = in.height / 2;
        const int ow = in.width / 2;
        r.output = Tensor<Scalar>({in.batch, in.channels, oh, ow});
        r.cache.argmax.resize(static_cast<std::size_t>(r.output.data.size()));
        std::size_t n = 0;
        for (int b = 0; b < in.batch; ++b)
            for (int c = 0; c < in.channels; ++c)
                for (int y = 0; y < oh; ++y)
                    for (int x = 0; x < ow; ++x, ++n) {
                        int best = (2 * y) * in.width + 2 * x;
                        Scalar best_v = input.at(b, c, 2 * y, 2 * x);
                        for (int dy = 0; dy < 2; ++dy)
                            for (int dx = 0; dx < 2; ++dx) {
                                const Scalar v = input.at(b, c, 2 * y + dy, 2 * x + dx);
                                if (v > best_v) {
                                    best_v = v;
                                    best = (2 * y + dy) * in.width + 2 * x + dx;
                                }
                            }
                        r.output.at(b, c, y, x) = best_v;
                        r.cache.argmax[n] = best;
                    }
        break;
    }
    case LayerKind::FullyConnected: {
        if (in.per_item() != spec.in_channels)
            detail::shape_error(spec, in, "features = " + std::to_string(spec.in_channels));
        if (params.weight.rows() != spec.out_channels || params.weight.cols() != spec.in_channels)
            throw InvalidInput("fully_connected: weight shape does not match layer spec");
        Matrix<Scalar> out = params.weight * input.data;
        out.colwise() += params.bias;
        r.output = Tensor<Scalar>({in.batch, spec.out_channels, 1, 1}, std::move(out));
        r.cache.saved.push_back(input.data);
        break;
    }
    case LayerKind::SoftmaxHead:
        r.output = Tensor<Scalar>(in, softmax_columns<Scalar>(input.data));
        r.cache.saved.push_back(r.output.data);
        break;
    }
    return r;
}

template <typename Scalar>
struct BackwardResult {
    Tensor<Scalar> grad_input;
    LayerParams<Scalar> grad_params;
};

template <typename Scalar>
BackwardResult<Scalar> layer_backward(const LayerSpec& spec, const LayerParams<Scalar>& params,
                                      const LayerCache<Scalar>& cache, const Tensor<Scalar>& grad_out) {
    if (!cache.valid || !(cache.spec == spec) || cache.version != params.version)
        throw InvalidInput(to_string(spec.kind) + ": stale cache");
    const Shape& in = cache.input_shape;
    BackwardResult<Scalar> r;
    r.grad_input = Tensor<Scalar>(in);

    switch (spec.kind) {
    case LayerKind::Conv3x3: {
        r.grad_params = LayerParams<Scalar>::zeros_like(params);
        for (int b = 0; b < in.batch; ++b) {
            const Matrix<Scalar>& cols = cache.saved[static_cast<std::size_t>(b)];
            const auto g = grad_out.item(b);
            r.grad_params.weight.noalias() += g.transpose() * cols;
            r.grad_params.bias += g.colwise().sum().transpose();
            Matrix<Scalar> dcols = g * params.weight;
            detail::col2im_add<Scalar>(dcols, r.grad_input.item(b), in.height, in.width);
        }
        break;
    }
    case LayerKind::Relu:
        r.grad_input.data = (cache.saved[0].array() > Scalar(0)).select(grad_out.data.array(), Scalar(0)).matrix();
        break;
    case LayerKind::MaxPool2x2: {
        const Shape& out = grad_out.shape;
        std::size_t n = 0;
        for (int b = 0; b < out.batch; ++b)
            for (int c = 0; c < out.channels; ++c)
                for (int y = 0; y < out.height; ++y)
                    for (int x = 0; x < out.width; ++x, ++n)
                        r.grad_input.data(static_cast<Eigen::Index>(c) * in.pixels() + cache.argmax[n], b) +=
                            grad_out.at(b, c, y, x);
        break;
    }
    case LayerKind::FullyConnected:
        r.grad_params.weight = grad_out.data * cache.saved[0].transpose();
        r.grad_params.bias = grad_out.data.rowwise().sum();
        r.grad_input.data = params.weight.transpose() * grad_out.data;
        break;
    case LayerKind::SoftmaxHead: {
        const Matrix<Scalar>& p = cache.saved[0];
        const Eigen::Matrix<Scalar, 1, Eigen::Dynamic> dot = (grad_out.data.array() * p.array()).colwise().sum();
        r.grad_input.data = (p.array() * (grad_out.data.array().rowwise() - dot.array())).matrix();
        break;
    }
    }
    return r;
}

/// Align-corners bilinear interpolation matrix mapping `source` samples onto `target`.
template <typename Scalar>
Matrix<Scalar> interpolation_matrix(int target, int source) {
    Matrix<Scalar> m = Matrix<Scalar>::Zero(target, source);
    for (int t = 0; t < target; ++t) {
        const double pos = target > 1 ? static_cast<double>(t) * (source - 1) / (target - 1) : 0.0;
        const int i0 = std::min(static_cast<int>(std::floor(pos)), source - 1);
        const int i1 = std::min(i0 + 1, source - 1);
        const double w = pos - i0;
        m(t, i0) += static_cast<Scalar>(1.0 - w);
        m(t, i1) += static_cast<Scalar>(w);
    }
    return m;
}

template <typename Scalar>
Tensor<Scalar> bilinear_upsample(const Tensor<Scalar>& input, int target_h, int target_w) {
    const Shape& in = input.shape;
    if (target_h < in.height || target_w < in.width)
        throw InvalidInput("bilinear_upsample: target " + std::to_string(target_h) + "x" +
                           std::to_string(target_w) + " smaller than input " + in.str());
    if (target_h == in.height && target_w == in.width) return input;
    const Matrix<Scalar> ry = interpolation_matrix<Scalar>(target_h, in.height);
    const Matrix<Scalar> rx_t = interpolation_matrix<Scalar>(target_w, in.width).transpose();
    Tensor<Scalar> out({in.batch, in.channels, target_h, target_w});
    for (int b = 0; b < in.batch; ++b)
        for (int c = 0; c < in.channels; ++c) out.plane(b, c).noalias() = ry * input.plane(b, c) * rx_t;
    return out;
}

/// Adjoint of bilinear_upsample: maps a gradient at target size back to `source`.
template <typename Scalar>
Tensor<Scalar> bilinear_upsample_backward(const Tensor<Scalar>& grad_out, const Shape& source) {
    const Shape& g = grad_out.shape;
    if (g.height == source.height && g.width == source.width) return grad_out;
    const Matrix<Scalar> ry_t = interpolation_matrix<Scalar>(g.height, source.height).transpose();
    const Matrix<Scalar> rx = interpolation_matrix<Scalar>(g.width, source.width);
    Tensor<Scalar> out(source);
    for (int b = 0; b < g.batch; ++b)
        for (int c = 0; c < g.channels; ++c) out.plane(b, c).noalias() = ry_t * grad_out.plane(b, c) * rx;
    return out;
}

}  // namespace polcolor::nn
