#include "polcolor/quantizer.hpp"

#include <algorithm>
#include <cmath>
#include <iterator>

namespace polcolor {

namespace {

// Merges coincident quantile edges, then splits the widest bins at their
// midpoint until k bins remain.
Eigen::VectorXd make_strictly_increasing(std::vector<double> edges, int k) {
    edges.erase(std::unique(edges.begin(), edges.end(),
                            [](double a, double b) { return !(b > a); }),
                edges.end());
    while (static_cast<int>(edges.size()) < k + 1) {
        std::size_t widest = 0;
        for (std::size_t i = 1; i + 1 < edges.size(); ++i)
            if (edges[i + 1] - edges[i] > edges[widest + 1] - edges[widest]) widest = i;
        edges.insert(edges.begin() + static_cast<std::ptrdiff_t>(widest) + 1,
                     0.5 * (edges[widest] + edges[widest + 1]));
    }
    return Eigen::Map<const Eigen::VectorXd>(edges.data(), static_cast<Eigen::Index>(edges.size()));
}

double median_of_sorted(std::span<const double> sorted) {
    const std::size_t n = sorted.size();
    return n % 2 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
}

}  // namespace

double QuantizerTable::max_half_width() const {
    double widest = 0.0;
    for (int i = 0; i < k; ++i) widest = std::max(widest, bin_width(i));
    return 0.5 * widest;
}

std::pair<double, double> param_range(int param_id) {
    if (param_id < 0 || param_id >= kNumParams) throw InvalidInput("param id out of range");
    return param_id < 3 ? std::pair{0.0, 1.0} : std::pair{-1.0, 1.0};
}

std::string param_name(int param_id) {
    static const std::array<const char*, kNumParams> names = {
        "delta1", "delta2", "delta3", "Re(rho13)", "Im(rho13)",
        "Re(rho23)", "Im(rho23)", "Re(rho12)", "Im(rho12)"};
    if (param_id < 0 || param_id >= kNumParams) throw InvalidInput("param id out of range");
    return names[static_cast<std::size_t>(param_id)];
}

QuantizerTable uniform_quantizer(int k, double lo, double hi, int param_id) {
    if (k < 2) throw InvalidInput("quantizer needs k >= 2");
    if (!(hi > lo)) throw InvalidInput("quantizer range is empty");
    QuantizerTable t;
    t.param_id = param_id;
    t.k = k;
    t.lo = lo;
    t.hi = hi;
    t.edges = Eigen::VectorXd::LinSpaced(k + 1, lo, hi);
    t.edges[k] = hi;
    t.centers = 0.5 * (t.edges.head(k) + t.edges.tail(k));
    return t;
}

QuantizerTable fit_quantizer(std::span<const double> samples, int k, double lo, double hi,
                             int param_id) {
    if (k < 2) throw InvalidInput("quantizer needs k >= 2");
    if (!(hi > lo)) throw InvalidInput("quantizer range is empty");

    std::vector<double> sorted;
    sorted.reserve(samples.size());
    for (double v : samples)
        if (std::isfinite(v)) sorted.push_back(std::clamp(v, lo, hi));
    std::sort(sorted.begin(), sorted.end());

    std::size_t distinct = sorted.empty() ? 0 : 1;
    for (std::size_t i = 1; i < sorted.size() && distinct < static_cast<std::size_t>(k); ++i)
        if (sorted[i] != sorted[i - 1]) ++distinct;
    if (distinct < static_cast<std::size_t>(k)) {
        QuantizerTable t = uniform_quantizer(k, lo, hi, param_id);
        t.uniform_fallback = true;
        return t;
    }

    const std::size_t n = sorted.size();
    std::vector<double> edges(static_cast<std::size_t>(k) + 1);
    edges.front() = lo;
    edges.back() = hi;
    for (int i = 1; i < k; ++i) edges[static_cast<std::size_t>(i)] = sorted[static_cast<std::size_t>(i) * n / static_cast<std::size_t>(k)];

    QuantizerTable t;
    t.param_id = param_id;
    t.k = k;
    t.lo = lo;
    t.hi = hi;
    t.edges = make_strictly_increasing(std::move(edges), k);
    t.centers.resize(k);

    for (int i = 0; i < k; ++i) {
        const double a = t.edges[i];
        const double b = t.edges[i + 1];
        const auto first = std::lower_bound(sorted.begin(), sorted.end(), a);
        const auto last = (i == k - 1) ? sorted.end() : std::lower_bound(first, sorted.end(), b);
        double center = 0.5 * (a + b);
        if (first != last) {
            const double med = median_of_sorted(std::span<const double>(&*first, static_cast<std::size_t>(last - first)));
            if (med > a && med < b) center = med;
        }
        t.centers[i] = center;
    }
    return t;
}

int encode(double value, const QuantizerTable& table) {
    const double v = std::clamp(value, table.lo, table.hi);
    const double* begin = table.edges.data();
    const double* end = begin + table.edges.size();
    const auto bin = static_cast<int>(std::upper_bound(begin, end, v) - begin) - 1;
    return std::clamp(bin, 0, table.k - 1);
}

double decode(std::span<const double> probs, const QuantizerTable& table, DecodeRule rule) {
    if (static_cast<int>(probs.size()) != table.k) throw InvalidInput("invalid distribution");
    double total = 0.0;
    for (double p : probs) {
        if (!(p >= 0.0)) throw InvalidInput("invalid distribution");
        total += p;
    }
    if (std::abs(total - 1.0) > 1e-6) throw InvalidInput("invalid distribution");

    if (rule == DecodeRule::Mode) {
        const auto best = std::max_element(probs.begin(), probs.end());  // first maximum
        return table.centers[best - probs.begin()];
    }
    double mean = 0.0;
    for (int i = 0; i < table.k; ++i) mean += probs[static_cast<std::size_t>(i)] * table.centers[i];
    return mean;
}

QuantizerSet fit_quantizers(std::span<const PolFeature> features, int k) {
    QuantizerSet set;
    std::vector<double> plane(features.size());
    for (int p = 0; p < kNumParams; ++p) {
        std::transform(features.begin(), features.end(), plane.begin(),
                       [p](const PolFeature& f) { return to_params(f)[p]; });
        const auto [lo, hi] = param_range(p);
        set[static_cast<std::size_t>(p)] = fit_quantizer(plane, k, lo, hi, p);
    }
    return set;
}

QuantizerSet uniform_quantizers(int k) {
    QuantizerSet set;
    for (int p = 0; p < kNumParams; ++p) {
        const auto [lo, hi] = param_range(p);
        set[static_cast<std::size_t>(p)] = uniform_quantizer(k, lo, hi, p);
    }
    return set;
}

}  // namespace polcolor
