#pragma once

#include <complex>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "polcolor/errors.hpp"

namespace polcolor {

using Complex = std::complex<double>;

/// Lexicographic scattering vector (Shh, sqrt(2) Shv, Svv).
using ScatteringVector = Eigen::Vector3cd;

/// 3x3 Hermitian polarimetric covariance (or coherency) matrix.
using CovarianceMatrix = Eigen::Matrix3cd;

enum class Channel { HH = 0, HV = 1, VV = 2 };

/// Power-normalized polarimetric feature: diagonal ratios plus the three
/// correlation coefficients, ordered (rho13, rho23, rho12).
struct PolFeature {
    Eigen::Vector3d delta = Eigen::Vector3d::Constant(1.0 / 3.0);
    Eigen::Vector3cd rho = Eigen::Vector3cd::Zero();

    Complex& rho13() { return rho[0]; }
    Complex& rho23() { return rho[1]; }
    Complex& rho12() { return rho[2]; }
    const Complex& rho13() const { return rho[0]; }
    const Complex& rho23() const { return rho[1]; }
    const Complex& rho12() const { return rho[2]; }

    bool operator==(const PolFeature& other) const {
        return delta == other.delta && rho == other.rho;
    }
};

/// Number of real parameters predicted per pixel:
/// delta1..3, Re/Im rho13, Re/Im rho23, Re/Im rho12.
inline constexpr int kNumParams = 9;

using ParamVector = Eigen::Matrix<double, kNumParams, 1>;

ParamVector to_params(const PolFeature& feat);
PolFeature from_params(const ParamVector& params);

struct PsdReport {
    double margin = 1.0;
    bool satisfied = true;
    double eta = 1.0;
    double delta_phi = 0.0;
};

inline constexpr double kPsdTolerance = 1e-9;
inline constexpr double kDeltaFloor = 1e-6;

/// Mirrors the upper triangle onto the lower one and zeroes imaginary parts
/// of the diagonal.
CovarianceMatrix hermitize(const CovarianceMatrix& c);

CovarianceMatrix covariance_from_looks(std::span<const ScatteringVector> looks);

double span(const CovarianceMatrix& c);

struct NormalizedCovariance {
    PolFeature feature;
    double power = 0.0;
};

/// Splits C into its power-free feature and P = trace(C). Correlations whose
/// denominator vanishes are defined as 0.
NormalizedCovariance normalize(const CovarianceMatrix& c);

CovarianceMatrix reconstruct(const PolFeature& feat, double power);

/// Total power recovered from one measured channel intensity (P = I / delta).
/// Throws NumericalFailure when the channel's delta is at or below kDeltaFloor.
double power_from_channel(double channel_intensity, const PolFeature& feat, Channel channel);

/// Third leading minor of C/P, i.e. det of the unit-diagonal correlation matrix.
double psd_margin(const PolFeature& feat);

PsdReport psd_check(const PolFeature& feat, double tolerance = kPsdTolerance);

struct PsdCorrection {
    PolFeature feature;
    PsdReport report;
};

/// Shrinks |rho12|, |rho23| and then rotates their phases until the
/// correlation matrix is PSD. rho13 is never touched. Inputs that already
/// pass psd_check are returned unchanged.
PsdCorrection psd_correct(const PolFeature& feat);

/// Lexicographic covariance to Pauli coherency, T = U C U^H.
CovarianceMatrix covariance_to_coherency(const CovarianceMatrix& c);

/// Smallest eigenvalue of a Hermitian matrix.
double min_eigenvalue(const CovarianceMatrix& c);

}  // namespace polcolor
