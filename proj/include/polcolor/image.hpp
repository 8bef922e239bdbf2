#pragma once

#include <vector>

#include <Eigen/Dense>

#include "polcolor/polmath.hpp"

namespace polcolor {

/// Real-valued image plane, (height x width), row-major.
using Plane = Eigen::Array<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using LabelPlane = Eigen::Array<int, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Per-pixel covariance matrices, row-major.
struct CovarianceImage {
    int width = 0;
    int height = 0;
    std::vector<CovarianceMatrix> pixels;

    CovarianceImage() = default;
    CovarianceImage(int w, int h) : width(w), height(h), pixels(static_cast<std::size_t>(w) * h, CovarianceMatrix::Zero()) {}

    CovarianceMatrix& at(int y, int x) { return pixels[static_cast<std::size_t>(y) * width + x]; }
    const CovarianceMatrix& at(int y, int x) const { return pixels[static_cast<std::size_t>(y) * width + x]; }

    /// Diagonal entry of one channel as an intensity plane.
    Plane intensity(Channel channel) const {
        Plane p(height, width);
        const int c = static_cast<int>(channel);
        for (int y = 0; y < height; ++y)
            for (int x = 0; x < width; ++x) p(y, x) = at(y, x)(c, c).real();
        return p;
    }

    CovarianceImage crop(int x0, int y0, int w, int h) const {
        CovarianceImage out(w, h);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) out.at(y, x) = at(y0 + y, x0 + x);
        return out;
    }
};

}  // namespace polcolor
