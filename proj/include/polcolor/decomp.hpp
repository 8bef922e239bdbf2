#pragma once

#include <Eigen/Dense>

#include "polcolor/polmath.hpp"

namespace polcolor {

struct PauliRgb {
    double r = 0.0;  // |Shh - Svv|^2 / 2
    double g = 0.0;  // 2 |Shv|^2
    double b = 0.0;  // |Shh + Svv|^2 / 2
};

PauliRgb pauli_rgb(const CovarianceMatrix& c);

struct FreemanPowers {
    double ps = 0.0;  // surface
    double pd = 0.0;  // double bounce
    double pv = 0.0;  // volume
};

/// Three-component model fit: volume from the cross-pol power, then a rank-2
/// co-pol solve with alpha = -1 when Re(C13) of the remainder is nonnegative
/// and beta = 1 otherwise. Negative components are clamped to zero and their
/// deficit moved to the other co-pol component, so ps + pd + pv = span.
FreemanPowers freeman_durden(const CovarianceMatrix& c);

struct HAlpha {
    double entropy = 0.0;
    double alpha_deg = 0.0;
    Eigen::Vector3d probabilities = Eigen::Vector3d::Zero();  // descending
};

/// Entropy and mean alpha angle of a coherency matrix.
HAlpha cloude_pottier(const CovarianceMatrix& t);

/// Zones of the H/alpha plane:
///   H < 0.5:        1 (alpha < 42.5), 2 (< 47.5), 3
///   0.5 <= H < 0.9: 4 (alpha < 40),   5 (< 50),   6
///   H >= 0.9:       7 (alpha < 55, including the unreachable low-alpha corner), 8
int h_alpha_classify(double entropy, double alpha_deg);

inline constexpr int kNumZones = 8;

}  // namespace polcolor
