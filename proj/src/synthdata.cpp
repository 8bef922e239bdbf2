#include "polcolor/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "polcolor/errors.hpp"
#include "polcolor/rng.hpp"

namespace polcolor {

namespace {

ClassArchetype make_archetype(std::string name, Eigen::Vector3d delta, Complex rho13, double power,
                              double texture_scale, double texture_db) {
    ClassArchetype a;
    a.name = std::move(name);
    a.feature.delta = delta;
    a.feature.rho13() = rho13;
    a.power = power;
    a.texture_scale = texture_scale;
    a.texture_db = texture_db;
    return a;
}

void check_archetype(const ClassArchetype& a) {
    if (!(a.power > 0.0) || !std::isfinite(a.power)) throw InvalidInput("archetype '" + a.name + "' needs power > 0");
    if (!(a.texture_scale > 0.0) || a.texture_db < 0.0)
        throw InvalidInput("archetype '" + a.name + "' has an invalid texture");
    if (!psd_check(a.feature).satisfied) throw InvalidInput("archetype '" + a.name + "' is not PSD");
}

int default_regions(const SceneSpec& spec) {
    switch (spec.model) {
    case RegionModel::Voronoi: return 2 * spec.classes;
    case RegionModel::Stripes: return spec.classes;
    case RegionModel::Blobs: return 2 * (spec.classes - 1);
    }
    return spec.classes;
}

// Smooth Gaussian field: unit-variance lattice values at `scale` spacing,
// bilinearly interpolated.
Plane value_noise(int width, int height, double scale, std::uint64_t seed) {
    const int gw = static_cast<int>(std::ceil(width / scale)) + 2;
    const int gh = static_cast<int>(std::ceil(height / scale)) + 2;
    Plane lattice(gh, gw);
    for (int i = 0; i < gh; ++i)
        for (int j = 0; j < gw; ++j) {
            std::mt19937_64 rng(derive_seed(seed, {static_cast<std::uint64_t>(i), static_cast<std::uint64_t>(j)}));
            lattice(i, j) = std::normal_distribution<double>(0.0, 1.0)(rng);
        }
    Plane out(height, width);
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x) {
            const double fy = y / scale;
            const double fx = x / scale;
            const int iy = static_cast<int>(fy);
            const int ix = static_cast<int>(fx);
            const double wy = fy - iy;
            const double wx = fx - ix;
            const double v = (1 - wy) * ((1 - wx) * lattice(iy, ix) + wx * lattice(iy, ix + 1)) +
                             wy * ((1 - wx) * lattice(iy + 1, ix) + wx * lattice(iy + 1, ix + 1));
            // Bilinear blending shrinks the variance; rescale back to one.
            const double norm = std::sqrt(((1 - wy) * (1 - wy) + wy * wy) * ((1 - wx) * (1 - wx) + wx * wx));
            out(y, x) = v / norm;
        }
    return out;
}

}  // namespace

std::vector<ClassArchetype> default_archetypes() {
    return {
        make_archetype("sea", {0.45, 0.02, 0.53}, {0.9, 0.0}, 0.01, 1.0, 1.0),
        make_archetype("vegetation", {0.25, 0.15, 0.60}, {0.3, 0.0}, 0.08, 3.0, 1.0),
        make_archetype("urban", {0.50, 0.12, 0.38}, std::polar(0.55, std::numbers::pi), 0.4, 6.0, 1.0),
    };
}

void validate(const SceneSpec& spec) {
    if (spec.width <= 0 || spec.height <= 0 || spec.width % 4 || spec.height % 4)
        throw InvalidInput("scene dimensions must be positive multiples of 4, got " + std::to_string(spec.width) +
                           "x" + std::to_string(spec.height));
    if (spec.looks < 1) throw InvalidInput("looks must be >= 1");
    if (spec.classes < 1) throw InvalidInput("scene needs at least one class");
    if (spec.regions < 0) throw InvalidInput("region count must be nonnegative");
    if (spec.regions > 0 && spec.model != RegionModel::Blobs && spec.regions < spec.classes)
        throw InvalidInput("region count must be at least the class count");
}

LabelPlane generate_class_map(const SceneSpec& spec) {
    validate(spec);
    const int w = spec.width;
    const int h = spec.height;
    const int n = spec.regions > 0 ? spec.regions : default_regions(spec);
    std::mt19937_64 rng(derive_seed(spec.seed, {0x6d6170}));
    LabelPlane labels(h, w);

    switch (spec.model) {
    case RegionModel::Stripes:
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) labels(y, x) = (static_cast<long>(x) * n / w) % spec.classes;
        break;
    case RegionModel::Voronoi: {
        std::uniform_real_distribution<double> ux(0.0, w), uy(0.0, h);
        std::vector<Eigen::Vector2d> sites;
        for (int i = 0; i < n; ++i) sites.emplace_back(ux(rng), uy(rng));
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                const Eigen::Vector2d p(x + 0.5, y + 0.5);
                int best = 0;
                for (int i = 1; i < n; ++i)
                    if ((sites[i] - p).squaredNorm() < (sites[best] - p).squaredNorm()) best = i;
                labels(y, x) = best % spec.classes;
            }
        break;
    }
    case RegionModel::Blobs: {
        labels.setZero();
        if (spec.classes == 1) break;
        const double side = std::min(w, h);
        std::uniform_real_distribution<double> ux(0.0, w), uy(0.0, h), ur(side / 8.0, side / 4.0);
        const int blobs = std::max(n, spec.classes - 1);
        for (int b = 0; b < blobs; ++b) {
            const int cls = 1 + b % (spec.classes - 1);
            const double cx = ux(rng), cy = uy(rng), r = ur(rng);
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x)
                    if (std::hypot(x + 0.5 - cx, y + 0.5 - cy) <= r) labels(y, x) = cls;
        }
        break;
    }
    }

    for (int c = 0; c < spec.classes; ++c)
        if (!(labels == c).any())
            throw InvalidInput("class map lost class " + std::to_string(c) + "; use more regions or a larger scene");
    return labels;
}

Eigen::Matrix3cd covariance_factor(const CovarianceMatrix& c) {
    const CovarianceMatrix hc = hermitize(c);
    const double scale = std::max(span(hc), 1e-300);
    Eigen::LLT<Eigen::Matrix3cd> llt(hc);
    if (llt.info() == Eigen::Success) {
        const Eigen::Matrix3cd l = llt.matrixL();
        if (l.diagonal().real().minCoeff() > 1e-7 * std::sqrt(scale)) return l;
    }
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3cd> es(hc);
    const Eigen::Vector3d root = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    return es.eigenvectors() * root.cast<Complex>().asDiagonal();
}

std::vector<ScatteringVector> sample_looks(const CovarianceMatrix& c, int n_looks, std::mt19937_64& rng) {
    if (n_looks < 1) throw InvalidInput("looks must be >= 1");
    const Eigen::Matrix3cd a = covariance_factor(c);
    std::normal_distribution<double> normal(0.0, std::sqrt(0.5));
    std::vector<ScatteringVector> looks;
    looks.reserve(static_cast<std::size_t>(n_looks));
    for (int i = 0; i < n_looks; ++i) {
        ScatteringVector z;
        for (int k = 0; k < 3; ++k) {
            const double re = normal(rng);
            const double im = normal(rng);
            z[k] = Complex(re, im);
        }
        looks.push_back(a * z);
    }
    return looks;
}

std::vector<ScatteringVector> sample_looks(const ClassArchetype& archetype, int n_looks, std::mt19937_64& rng) {
    check_archetype(archetype);
    return sample_looks(archetype.covariance(), n_looks, rng);
}

const Plane& Scene::intensity(Channel channel) const {
    switch (channel) {
    case Channel::HH: return hh;
    case Channel::HV: return hv;
    case Channel::VV: return vv;
    }
    return vv;
}

Scene render_scene(const SceneSpec& spec, const std::vector<ClassArchetype>& archetypes) {
    validate(spec);
    if (archetypes.size() < static_cast<std::size_t>(spec.classes))
        throw InvalidInput("scene has " + std::to_string(spec.classes) + " classes but only " +
                           std::to_string(archetypes.size()) + " archetypes");
    for (int c = 0; c < spec.classes; ++c) check_archetype(archetypes[static_cast<std::size_t>(c)]);

    const int w = spec.width;
    const int h = spec.height;
    Scene scene;
    scene.classes = generate_class_map(spec);
    scene.covariance = CovarianceImage(w, h);

    std::vector<Eigen::Matrix3cd> factors;
    std::vector<Plane> textures;
    for (int c = 0; c < spec.classes; ++c) {
        const auto& a = archetypes[static_cast<std::size_t>(c)];
        factors.push_back(covariance_factor(a.covariance()));
        if (a.texture_db > 0.0) {
            Plane field = value_noise(w, h, a.texture_scale, derive_seed(spec.seed, {0x746578, static_cast<std::uint64_t>(c)}));
            // Lognormal power factor with unit mean.
            const double s = a.texture_db * std::log(10.0) / 10.0;
            textures.push_back((field * s - 0.5 * s * s).exp());
        } else {
            textures.push_back(Plane::Ones(h, w));
        }
    }

    std::vector<ScatteringVector> looks(static_cast<std::size_t>(spec.looks));
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const int c = scene.classes(y, x);
            std::mt19937_64 rng(derive_seed(spec.seed, {static_cast<std::uint64_t>(y), static_cast<std::uint64_t>(x)}));
            std::normal_distribution<double> normal(0.0, std::sqrt(0.5));
            const Eigen::Matrix3cd a = factors[static_cast<std::size_t>(c)] *
                                       std::sqrt(textures[static_cast<std::size_t>(c)](y, x));
            for (auto& k : looks) {
                ScatteringVector z;
                for (int i = 0; i < 3; ++i) {
                    const double re = normal(rng);
                    const double im = normal(rng);
                    z[i] = Complex(re, im);
                }
                k = a * z;
            }
            scene.covariance.at(y, x) = covariance_from_looks(looks);
        }
    scene.hh = scene.covariance.intensity(Channel::HH);
    scene.hv = scene.covariance.intensity(Channel::HV);
    scene.vv = scene.covariance.intensity(Channel::VV);
    return scene;
}

Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> interior_mask(const LabelPlane& labels,
                                                                                  int margin) {
    const auto h = static_cast<int>(labels.rows());
    const auto w = static_cast<int>(labels.cols());
    Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> mask(h, w);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            bool inside = true;
            for (int dy = -margin; dy <= margin && inside; ++dy)
                for (int dx = -margin; dx <= margin && inside; ++dx) {
                    const int yy = y + dy, xx = x + dx;
                    if (yy < 0 || yy >= h || xx < 0 || xx >= w) continue;
                    inside = labels(yy, xx) == labels(y, x);
                }
            mask(y, x) = inside;
        }
    return mask;
}

}  // namespace polcolor
