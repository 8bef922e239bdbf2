#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "polcolor/image.hpp"
#include "polcolor/polmath.hpp"

namespace polcolor {

/// One terrain class: its normalized covariance, mean span and a smooth
/// multiplicative power texture (lognormal, `texture_db` standard deviation in
/// dB, correlation length `texture_scale` pixels).
struct ClassArchetype {
    std::string name;
    PolFeature feature;
    double power = 1.0;
    double texture_scale = 1.0;
    double texture_db = 0.0;

    CovarianceMatrix covariance() const { return reconstruct(feature, power); }
};

/// Sea (surface), vegetation (volume) and urban (double bounce) archetypes.
std::vector<ClassArchetype> default_archetypes();

enum class RegionModel { Voronoi, Blobs, Stripes };

struct SceneSpec {
    int width = 128;
    int height = 128;
    std::uint64_t seed = 1;
    RegionModel model = RegionModel::Voronoi;
    int classes = 3;
    int looks = 9;
    /// Voronoi sites, stripes or blobs; 0 picks a default from the class count.
    int regions = 0;
};

void validate(const SceneSpec& spec);

/// Class label per pixel in [0, classes); every class occurs.
LabelPlane generate_class_map(const SceneSpec& spec);

/// Matrix A with A A^H = c: Cholesky when c is numerically positive definite,
/// otherwise the eigenvalue square root.
Eigen::Matrix3cd covariance_factor(const CovarianceMatrix& c);

/// Looks k = A z with z standard circular complex Gaussian, so E[k k^H] = c.
std::vector<ScatteringVector> sample_looks(const CovarianceMatrix& c, int n_looks, std::mt19937_64& rng);
std::vector<ScatteringVector> sample_looks(const ClassArchetype& archetype, int n_looks, std::mt19937_64& rng);

struct Scene {
    CovarianceImage covariance;
    Plane hh, hv, vv;
    LabelPlane classes;

    const Plane& intensity(Channel channel) const;
};

/// Multilooked covariance per pixel drawn from the pixel's class archetype.
Scene render_scene(const SceneSpec& spec, const std::vector<ClassArchetype>& archetypes);

/// True where every pixel within `margin` (Chebyshev distance) has the same label.
Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> interior_mask(const LabelPlane& labels,
                                                                                  int margin);

}  // namespace polcolor
