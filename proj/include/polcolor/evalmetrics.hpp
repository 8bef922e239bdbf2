#pragma once

#include <array>
#include <filesystem>
#include <vector>

#include "polcolor/image.hpp"
#include "polcolor/quantizer.hpp"

namespace polcolor {

using ComplexPlane = Eigen::Array<Complex, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

double mae(const Plane& a, const Plane& b);

/// Normalized complex inner product of two planes; |coi| <= 1.
Complex coi(const ComplexPlane& a, const ComplexPlane& b);

inline constexpr double kBartlettRidge = 1e-10;
inline constexpr double kBartlettNegativeTolerance = 1e-6;

/// 2 ln(det((A+B)/2) / sqrt(det A det B)). A matrix whose smallest eigenvalue
/// is at most 1e-12 * trace has negative eigenvalues zeroed and gets a
/// kBartlettRidge * trace ridge; eigenvalues below
/// -kBartlettNegativeTolerance * trace are an error.
double bartlett(const CovarianceMatrix& a, const CovarianceMatrix& b);

/// Covariance channel plane: 0..2 are the diagonal, 3 = C12, 4 = C13, 5 = C23.
ComplexPlane channel_plane(const CovarianceImage& image, int channel);
const char* channel_name(int channel);

/// Parameter planes of the normalized features, one per parameter.
std::array<Plane, kNumParams> parameter_planes(const CovarianceImage& image);

struct BartlettHistogram {
    static constexpr double kBinWidth = 0.1;
    static constexpr int kBins = 100;  // [0, 10), plus one overflow bin
    std::array<long, kBins + 1> counts{};

    void add(double d);
    long total() const;
};

struct MetricReport {
    std::array<double, kNumParams> mae_total{};
    std::array<double, kNumParams> mae_quant{};
    std::array<double, kNumParams> mae_quant_uniform{};
    std::array<Complex, 6> coi{};
    Plane bartlett_map;
    BartlettHistogram histogram;
    double bartlett_median = 0.0;
    double bartlett_mean = 0.0;
};

/// Error of `reconstructed` against `truth`. The quantization-only errors
/// encode and decode the true parameters with `quantizers` (mode rule) and
/// with uniform bins; when no quantizers are given they are fitted on the truth.
MetricReport evaluate(const CovarianceImage& reconstructed, const CovarianceImage& truth,
                      const QuantizerSet* quantizers = nullptr);

/// Long-format CSV: indicator,channel,value.
void write_metrics_csv(const MetricReport& report, const std::filesystem::path& path);

double median(std::vector<double> values);

}  // namespace polcolor
