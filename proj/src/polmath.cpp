#include "polcolor/polmath.hpp"

#include <algorithm>
#include <cmath>

namespace polcolor {

namespace {

Complex correlation(const Complex& cross, double power_a, double power_b) {
    const double denom_sq = power_a * power_b;
    if (!(denom_sq > 0.0)) return {0.0, 0.0};
    return cross / std::sqrt(denom_sq);
}

double safe_sqrt(double x) { return std::sqrt(std::max(0.0, x)); }

}  // namespace

ParamVector to_params(const PolFeature& feat) {
    ParamVector p;
    p << feat.delta[0], feat.delta[1], feat.delta[2],
         feat.rho13().real(), feat.rho13().imag(),
         feat.rho23().real(), feat.rho23().imag(),
         feat.rho12().real(), feat.rho12().imag();
    return p;
}

PolFeature from_params(const ParamVector& p) {
    PolFeature feat;
    feat.delta << p[0], p[1], p[2];
    feat.rho13() = {p[3], p[4]};
    feat.rho23() = {p[5], p[6]};
    feat.rho12() = {p[7], p[8]};
    return feat;
}

CovarianceMatrix hermitize(const CovarianceMatrix& c) {
    CovarianceMatrix out = c;
    for (int i = 0; i < 3; ++i) {
        out(i, i) = {c(i, i).real(), 0.0};
        for (int j = i + 1; j < 3; ++j) out(j, i) = std::conj(c(i, j));
    }
    return out;
}

CovarianceMatrix covariance_from_looks(std::span<const ScatteringVector> looks) {
    if (looks.empty()) throw InvalidInput("no looks");
    CovarianceMatrix acc = CovarianceMatrix::Zero();
    for (const auto& k : looks) acc.noalias() += k * k.adjoint();
    return hermitize(acc / static_cast<double>(looks.size()));
}

double span(const CovarianceMatrix& c) { return c.trace().real(); }

NormalizedCovariance normalize(const CovarianceMatrix& c) {
    const double power = span(c);
    if (!(power > 0.0)) throw NumericalFailure("zero-power pixel");

    const double c11 = c(0, 0).real();
    const double c22 = c(1, 1).real();
    const double c33 = c(2, 2).real();

    NormalizedCovariance out;
    out.power = power;
    out.feature.delta << c11 / power, c22 / power, c33 / power;
    out.feature.rho13() = correlation(c(0, 2), c11, c33);
    out.feature.rho23() = correlation(c(1, 2), c22, c33);
    out.feature.rho12() = correlation(c(0, 1), c11, c22);
    return out;
}

CovarianceMatrix reconstruct(const PolFeature& feat, double power) {
    const auto& d = feat.delta;
    CovarianceMatrix c = CovarianceMatrix::Zero();
    c(0, 0) = d[0];
    c(1, 1) = d[1];
    c(2, 2) = d[2];
    c(0, 1) = feat.rho12() * safe_sqrt(d[0] * d[1]);
    c(0, 2) = feat.rho13() * safe_sqrt(d[0] * d[2]);
    c(1, 2) = feat.rho23() * safe_sqrt(d[1] * d[2]);
    return hermitize(c) * power;
}

double power_from_channel(double channel_intensity, const PolFeature& feat, Channel channel) {
    const double ratio = feat.delta[static_cast<int>(channel)];
    if (!(ratio > kDeltaFloor)) throw NumericalFailure("unrecoverable power");
    return channel_intensity / ratio;
}

double psd_margin(const PolFeature& feat) {
    const Complex& r13 = feat.rho13();
    const Complex& r23 = feat.rho23();
    const Complex& r12 = feat.rho12();
    return 1.0 + 2.0 * (r12 * r23 * std::conj(r13)).real()
         - std::norm(r13) - std::norm(r23) - std::norm(r12);
}

PsdReport psd_check(const PolFeature& feat, double tolerance) {
    PsdReport report;
    report.margin = psd_margin(feat);
    report.satisfied = report.margin >= -tolerance;
    return report;
}

PsdCorrection psd_correct(const PolFeature& feat) {
    PsdCorrection out{feat, psd_check(feat)};
    if (out.report.satisfied) return out;

    const double r13 = std::abs(feat.rho13());
    const double phi13 = std::arg(feat.rho13());
    double r23 = std::abs(feat.rho23());
    double phi23 = std::arg(feat.rho23());
    double r12 = std::abs(feat.rho12());
    double phi12 = std::arg(feat.rho12());

    // Amplitude step, written without dividing by r12 r13 r23.
    double eta = 1.0;
    if (r13 * r13 + r23 * r23 + r12 * r12 - 1.0 > 2.0 * r12 * r13 * r23) {
        const double denom = r23 * r23 + r12 * r12 - 2.0 * r13 * r23 * r12;
        eta = denom > 0.0 ? std::min(1.0, safe_sqrt((1.0 - r13 * r13) / denom)) : 0.0;
        r23 *= eta;
        r12 *= eta;
    }

    // Phase step; with a zero amplitude the amplitude step already suffices.
    double delta_phi = 0.0;
    const double triple = 2.0 * r12 * r13 * r23;
    if (triple > 0.0) {
        const double bound =
            std::clamp((r13 * r13 + r23 * r23 + r12 * r12 - 1.0) / triple, -1.0, 1.0);
        const double closure = phi12 + phi23 - phi13;
        if (std::cos(closure) < bound) {
            delta_phi = std::acos(bound) - closure;
            phi12 += delta_phi / 2.0;
            phi23 += delta_phi / 2.0;
        }
    }

    out.feature.rho23() = std::polar(r23, phi23);
    out.feature.rho12() = std::polar(r12, phi12);
    out.report = psd_check(out.feature);
    out.report.eta = eta;
    out.report.delta_phi = delta_phi;
    return out;
}

CovarianceMatrix covariance_to_coherency(const CovarianceMatrix& c) {
    const double s = 1.0 / std::sqrt(2.0);
    Eigen::Matrix3cd u;
    u << s, 0.0, s,
         s, 0.0, -s,
         0.0, 1.0, 0.0;
    return hermitize(u * c * u.adjoint());
}

double min_eigenvalue(const CovarianceMatrix& c) {
    Eigen::SelfAdjointEigenSolver<CovarianceMatrix> solver(c, Eigen::EigenvaluesOnly);
    return solver.eigenvalues()[0];
}

}  // namespace polcolor
