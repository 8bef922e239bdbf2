#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>

#include "polcolor/nn/layers.hpp"

namespace polcolor::nn {

struct GradCheckResult {
    double max_relative_error = 0.0;
    std::size_t checked = 0;
    bool finite = true;
};

/// Gradients smaller than this are compared in absolute terms. The loss is
/// O(0.1) and carries ~1e-17 of rounding noise per evaluation, so central
/// differences at h = 1e-5 are only accurate to a few 1e-12 absolute.
inline constexpr double kGradCheckFloor = 1e-5;

inline double relative_error(double analytic, double numeric) {
    const double scale = std::max({std::abs(analytic), std::abs(numeric), kGradCheckFloor});
    return std::abs(analytic - numeric) / scale;
}

/// Compares `analytic` against central differences of `loss()` for up to
/// `per_layer` randomly chosen entries of every parameterized layer.
/// `loss` must read the current values in `params`.
template <typename LossFn>
GradCheckResult finite_difference_check(NetParams<double>& params, const NetParams<double>& analytic,
                                        LossFn&& loss, double h = 1e-5, int per_layer = 100,
                                        std::uint64_t seed = 7) {
    GradCheckResult result;
    std::mt19937_64 rng(seed);
    for (std::size_t layer = 0; layer < params.size(); ++layer) {
        auto& p = params[layer];
        const Eigen::Index total = p.size();
        if (total == 0) continue;
        std::vector<Eigen::Index> picks(static_cast<std::size_t>(total));
        std::iota(picks.begin(), picks.end(), Eigen::Index{0});
        std::shuffle(picks.begin(), picks.end(), rng);
        picks.resize(std::min<std::size_t>(picks.size(), static_cast<std::size_t>(per_layer)));

        for (Eigen::Index flat : picks) {
            const bool is_weight = flat < p.weight.size();
            double& value = is_weight ? p.weight.data()[flat] : p.bias.data()[flat - p.weight.size()];
            const double a = is_weight ? analytic[layer].weight.data()[flat]
                                       : analytic[layer].bias.data()[flat - p.weight.size()];
            const double saved = value;
            value = saved + h;
            const double up = loss();
            value = saved - h;
            const double down = loss();
            value = saved;
            const double numeric = (up - down) / (2.0 * h);
            if (!std::isfinite(a) || !std::isfinite(numeric)) result.finite = false;
            result.max_relative_error = std::max(result.max_relative_error, relative_error(a, numeric));
            ++result.checked;
        }
    }
    return result;
}

}  // namespace polcolor::nn
