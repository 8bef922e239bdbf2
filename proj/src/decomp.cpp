#include "polcolor/decomp.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

#include "polcolor/errors.hpp"

namespace polcolor {

PauliRgb pauli_rgb(const CovarianceMatrix& c) {
    const double c11 = c(0, 0).real();
    const double c33 = c(2, 2).real();
    const double re13 = c(0, 2).real();
    return {std::max(0.0, (c11 + c33 - 2.0 * re13) / 2.0), std::max(0.0, c(1, 1).real()),
            std::max(0.0, (c11 + c33 + 2.0 * re13) / 2.0)};
}

FreemanPowers freeman_durden(const CovarianceMatrix& c) {
    const double total = span(c);
    if (!(total > 0.0)) return {};

    const double fv = 1.5 * std::max(0.0, c(1, 1).real());
    const double c11 = c(0, 0).real() - fv;
    const double c33 = c(2, 2).real() - fv;
    const Complex c13 = c(0, 2) - fv / 3.0;
    const double remainder = c11 + c33;

    FreemanPowers p;
    p.pv = 8.0 * fv / 3.0;
    if (c11 <= 0.0 || c33 <= 0.0 || remainder <= 1e-12 * total) {
        p.pv = total;
        return p;
    }

    const double det = c11 * c33 - std::norm(c13);
    if (c13.real() >= 0.0) {
        const double fd = det / (c11 + c33 + 2.0 * c13.real());
        const double fs = c33 - fd;
        if (fd <= 0.0) {
            p.ps = remainder;
        } else if (fs <= 0.0) {
            p.pd = remainder;
        } else {
            const Complex beta = (c13 + fd) / fs;
            p.ps = fs * (1.0 + std::norm(beta));
            p.pd = 2.0 * fd;
        }
    } else {
        const double fs = det / (c11 + c33 - 2.0 * c13.real());
        const double fd = c33 - fs;
        if (fs <= 0.0) {
            p.pd = remainder;
        } else if (fd <= 0.0) {
            p.ps = remainder;
        } else {
            const Complex alpha = (c13 - fs) / fd;
            p.ps = 2.0 * fs;
            p.pd = fd * (1.0 + std::norm(alpha));
        }
    }
    return p;
}

HAlpha cloude_pottier(const CovarianceMatrix& t) {
    const double trace = t.trace().real();
    if (!(trace > 0.0)) throw NumericalFailure("zero-power pixel");
    Eigen::SelfAdjointEigenSolver<CovarianceMatrix> es(hermitize(t));
    if (es.info() != Eigen::Success) throw NumericalFailure("eigen decomposition failed");

    std::array<int, 3> order{2, 1, 0};
    const Eigen::Vector3d values = es.eigenvalues().cwiseMax(0.0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return values[a] > values[b]; });
    const double sum = values.sum();
    if (!(sum > 0.0)) throw NumericalFailure("zero-power pixel");

    HAlpha out;
    double entropy = 0.0;
    double alpha = 0.0;
    for (int i = 0; i < 3; ++i) {
        const int idx = order[static_cast<std::size_t>(i)];
        const double p = values[idx] / sum;
        out.probabilities[i] = p;
        if (p > 0.0) entropy -= p * std::log(p) / std::log(3.0);
        const double first = std::min(1.0, std::abs(es.eigenvectors()(0, idx)));
        alpha += p * std::acos(first);
    }
    out.entropy = std::clamp(entropy, 0.0, 1.0);
    out.alpha_deg = std::clamp(alpha * 180.0 / std::numbers::pi, 0.0, 90.0);
    return out;
}

int h_alpha_classify(double entropy, double alpha_deg) {
    if (!(entropy >= 0.0 && entropy <= 1.0)) throw InvalidInput("entropy outside [0, 1]");
    if (!(alpha_deg >= 0.0 && alpha_deg <= 90.0)) throw InvalidInput("alpha outside [0, 90] degrees");
    if (entropy < 0.5) return alpha_deg < 42.5 ? 1 : (alpha_deg < 47.5 ? 2 : 3);
    if (entropy < 0.9) return alpha_deg < 40.0 ? 4 : (alpha_deg < 50.0 ? 5 : 6);
    return alpha_deg < 55.0 ? 7 : 8;
}

}  // namespace polcolor
