#include "polcolor/evalmetrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>

#include "polcolor/errors.hpp"

namespace polcolor {

namespace {

void require_same_dims(Eigen::Index ar, Eigen::Index ac, Eigen::Index br, Eigen::Index bc) {
    if (ar != br || ac != bc)
        throw InvalidInput("dimension mismatch: " + std::to_string(ac) + "x" + std::to_string(ar) + " vs " +
                           std::to_string(bc) + "x" + std::to_string(br));
}

// Eigenvalues below the noise of float32 storage are treated as zero; a
// matrix with a (numerically) zero eigenvalue gets the ridge.
CovarianceMatrix regularized(const CovarianceMatrix& m) {
    const double trace = m.trace().real();
    if (!(trace > 0.0)) throw NumericalFailure("bartlett: zero-power matrix");
    Eigen::SelfAdjointEigenSolver<CovarianceMatrix> es(m);
    const Eigen::Vector3d lambda = es.eigenvalues();
    if (!lambda.allFinite()) throw NumericalFailure("bartlett: non-finite matrix");
    if (lambda.minCoeff() < -kBartlettNegativeTolerance * trace)
        throw NumericalFailure("bartlett: matrix not positive semi-definite");
    if (lambda.minCoeff() > 1e-12 * trace) return m;
    const Eigen::Vector3d fixed = lambda.cwiseMax(0.0).array() + kBartlettRidge * trace;
    return es.eigenvectors() * fixed.cast<Complex>().asDiagonal() * es.eigenvectors().adjoint();
}

double log_det(const CovarianceMatrix& m) {
    Eigen::SelfAdjointEigenSolver<CovarianceMatrix> es(m, Eigen::EigenvaluesOnly);
    const Eigen::Vector3d lambda = es.eigenvalues();
    if (!(lambda.minCoeff() > 0.0)) throw NumericalFailure("bartlett: matrix not positive definite");
    return lambda.array().log().sum();
}

}  // namespace

double mae(const Plane& a, const Plane& b) {
    require_same_dims(a.rows(), a.cols(), b.rows(), b.cols());
    if (a.size() == 0) throw InvalidInput("mae of empty planes");
    return (a - b).abs().mean();
}

Complex coi(const ComplexPlane& a, const ComplexPlane& b) {
    require_same_dims(a.rows(), a.cols(), b.rows(), b.cols());
    const double na = a.abs2().sum();
    const double nb = b.abs2().sum();
    if (!(na > 0.0) || !(nb > 0.0)) throw InvalidInput("undefined coherency");
    const Complex inner = (a * b.conjugate()).sum();
    return inner / std::sqrt(na * nb);
}

double bartlett(const CovarianceMatrix& a, const CovarianceMatrix& b) {
    const CovarianceMatrix ra = regularized(hermitize(a));
    const CovarianceMatrix rb = regularized(hermitize(b));
    return 2.0 * (log_det((ra + rb) / 2.0) - 0.5 * (log_det(ra) + log_det(rb)));
}

ComplexPlane channel_plane(const CovarianceImage& image, int channel) {
    static constexpr int rows[6] = {0, 1, 2, 0, 0, 1};
    static constexpr int cols[6] = {0, 1, 2, 1, 2, 2};
    if (channel < 0 || channel >= 6) throw InvalidInput("covariance channel out of range");
    ComplexPlane p(image.height, image.width);
    for (int y = 0; y < image.height; ++y)
        for (int x = 0; x < image.width; ++x) p(y, x) = image.at(y, x)(rows[channel], cols[channel]);
    return p;
}

const char* channel_name(int channel) {
    static constexpr const char* names[6] = {"C11", "C22", "C33", "C12", "C13", "C23"};
    if (channel < 0 || channel >= 6) throw InvalidInput("covariance channel out of range");
    return names[channel];
}

std::array<Plane, kNumParams> parameter_planes(const CovarianceImage& image) {
    std::array<Plane, kNumParams> planes;
    for (auto& p : planes) p.resize(image.height, image.width);
    for (int y = 0; y < image.height; ++y)
        for (int x = 0; x < image.width; ++x) {
            const ParamVector v = to_params(normalize(image.at(y, x)).feature);
            for (int k = 0; k < kNumParams; ++k) planes[static_cast<std::size_t>(k)](y, x) = v[k];
        }
    return planes;
}

void BartlettHistogram::add(double d) {
    const int bin = d < 0.0 ? 0 : static_cast<int>(std::floor(d / kBinWidth));
    ++counts[static_cast<std::size_t>(std::min(bin, kBins))];
}

long BartlettHistogram::total() const { return std::accumulate(counts.begin(), counts.end(), 0L); }

double median(std::vector<double> values) {
    if (values.empty()) throw InvalidInput("median of empty set");
    const auto mid = values.begin() + static_cast<std::ptrdiff_t>(values.size() / 2);
    std::nth_element(values.begin(), mid, values.end());
    if (values.size() % 2) return *mid;
    const double upper = *mid;
    const double lower = *std::max_element(values.begin(), mid);
    return 0.5 * (lower + upper);
}

MetricReport evaluate(const CovarianceImage& reconstructed, const CovarianceImage& truth,
                      const QuantizerSet* quantizers) {
    if (reconstructed.width != truth.width || reconstructed.height != truth.height)
        throw InvalidInput("dimension mismatch: reconstruction " + std::to_string(reconstructed.width) + "x" +
                           std::to_string(reconstructed.height) + " vs truth " + std::to_string(truth.width) + "x" +
                           std::to_string(truth.height));
    MetricReport r;
    const auto rec_params = parameter_planes(reconstructed);
    const auto true_params = parameter_planes(truth);

    QuantizerSet fitted;
    if (!quantizers) {
        std::vector<PolFeature> feats;
        feats.reserve(truth.pixels.size());
        for (const auto& c : truth.pixels) feats.push_back(normalize(c).feature);
        fitted = fit_quantizers(feats);
        quantizers = &fitted;
    }
    const QuantizerSet uniform = uniform_quantizers((*quantizers)[0].k);

    for (int k = 0; k < kNumParams; ++k) {
        const auto ks = static_cast<std::size_t>(k);
        r.mae_total[ks] = mae(rec_params[ks], true_params[ks]);
        auto roundtrip = [&](const QuantizerTable& t) {
            return true_params[ks].unaryExpr([&t](double v) { return t.centers[encode(v, t)]; });
        };
        r.mae_quant[ks] = mae(roundtrip((*quantizers)[ks]), true_params[ks]);
        r.mae_quant_uniform[ks] = mae(roundtrip(uniform[ks]), true_params[ks]);
    }
    for (int c = 0; c < 6; ++c) r.coi[static_cast<std::size_t>(c)] = coi(channel_plane(reconstructed, c), channel_plane(truth, c));

    r.bartlett_map.resize(truth.height, truth.width);
    std::vector<double> all;
    all.reserve(truth.pixels.size());
    for (int y = 0; y < truth.height; ++y)
        for (int x = 0; x < truth.width; ++x) {
            const double d = bartlett(reconstructed.at(y, x), truth.at(y, x));
            r.bartlett_map(y, x) = d;
            r.histogram.add(d);
            all.push_back(d);
        }
    r.bartlett_mean = std::accumulate(all.begin(), all.end(), 0.0) / static_cast<double>(all.size());
    r.bartlett_median = median(std::move(all));
    return r;
}

void write_metrics_csv(const MetricReport& report, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw InvalidInput("cannot write " + path.string());
    out << std::setprecision(17);
    out << "indicator,channel,value\n";
    for (int k = 0; k < kNumParams; ++k) {
        const auto ks = static_cast<std::size_t>(k);
        const std::string name = param_name(k);
        out << "mae_eps_q_uniform," << name << ',' << report.mae_quant_uniform[ks] << '\n';
        out << "mae_eps_q," << name << ',' << report.mae_quant[ks] << '\n';
        out << "mae_eps," << name << ',' << report.mae_total[ks] << '\n';
    }
    for (int c = 0; c < 6; ++c) {
        const Complex v = report.coi[static_cast<std::size_t>(c)];
        out << "coi_abs," << channel_name(c) << ',' << std::abs(v) << '\n';
        out << "coi_re," << channel_name(c) << ',' << v.real() << '\n';
        out << "coi_im," << channel_name(c) << ',' << v.imag() << '\n';
    }
    out << "bartlett_median,all," << report.bartlett_median << '\n';
    out << "bartlett_mean,all," << report.bartlett_mean << '\n';
    for (int b = 0; b <= BartlettHistogram::kBins; ++b) {
        out << "bartlett_hist,";
        if (b < BartlettHistogram::kBins)
            out << std::fixed << std::setprecision(1) << b * BartlettHistogram::kBinWidth << '-'
                << (b + 1) * BartlettHistogram::kBinWidth;
        else
            out << ">=10.0";
        out << std::defaultfloat << std::setprecision(17) << ',' << report.histogram.counts[static_cast<std::size_t>(b)]
            << '\n';
    }
    if (!out) throw InvalidInput("failed writing " + path.string());
}

}  // namespace polcolor
