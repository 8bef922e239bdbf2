#pragma once

#include <array>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "polcolor/polmath.hpp"

namespace polcolor {

inline constexpr int kDefaultBins = 32;

enum class DecodeRule { Mode, Mean };

/// Scalar quantizer for one of the nine feature parameters.
///
/// Bin i covers [edges[i], edges[i+1]); the last bin is closed on the right.
/// Values outside [lo, hi] are clamped before lookup.
struct QuantizerTable {
    int param_id = 0;
    int k = kDefaultBins;
    double lo = 0.0;
    double hi = 1.0;
    Eigen::VectorXd edges;    // k + 1, strictly increasing
    Eigen::VectorXd centers;  // k
    bool uniform_fallback = false;

    double bin_width(int bin) const { return edges[bin + 1] - edges[bin]; }
    double max_half_width() const;

    bool operator==(const QuantizerTable&) const = default;
};

/// Value range of a parameter: [0,1] for the delta ratios, [-1,1] for the
/// real/imaginary parts of the correlations.
std::pair<double, double> param_range(int param_id);
std::string param_name(int param_id);

/// Histogram-equalized table. Edges sit on lower empirical quantiles of the
/// clamped samples; centers are per-bin medians. Falls back to uniform bins
/// (uniform_fallback = true) when there are fewer than k distinct values.
QuantizerTable fit_quantizer(std::span<const double> samples, int k, double lo, double hi,
                             int param_id = 0);

QuantizerTable uniform_quantizer(int k, double lo, double hi, int param_id = 0);

int encode(double value, const QuantizerTable& table);

/// Throws InvalidInput("invalid distribution") unless probs has k nonnegative
/// entries summing to 1 within 1e-6.
double decode(std::span<const double> probs, const QuantizerTable& table,
              DecodeRule rule = DecodeRule::Mode);

using QuantizerSet = std::array<QuantizerTable, kNumParams>;

/// Fits the nine parameter tables on a set of features.
QuantizerSet fit_quantizers(std::span<const PolFeature> features, int k = kDefaultBins);
QuantizerSet uniform_quantizers(int k = kDefaultBins);

}  // namespace polcolor
