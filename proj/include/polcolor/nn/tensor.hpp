#pragma once

#include <sstream>
#include <string>

#include <Eigen/Dense>

#include "polcolor/errors.hpp"

namespace polcolor::nn {

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using RowMajorMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/// (batch, channels, height, width); dense feature vectors use height = width = 1.
struct Shape {
    int batch = 1;
    int channels = 1;
    int height = 1;
    int width = 1;

    int pixels() const { return height * width; }
    int per_item() const { return channels * height * width; }
    bool operator==(const Shape&) const = default;

    std::string str() const {
        std::ostringstream os;
        os << '(' << batch << ", " << channels << ", " << height << ", " << width << ')';
        return os.str();
    }
};

/// Batch of feature maps. Column b of `data` holds item b channel-major, each
/// channel plane stored row-major, so a column reshapes to a (pixels x channels)
/// column-major matrix without copying.
template <typename Scalar>
struct Tensor {
    Shape shape;
    Matrix<Scalar> data;

    Tensor() = default;
    explicit Tensor(const Shape& s) : shape(s), data(Matrix<Scalar>::Zero(s.per_item(), s.batch)) {}
    Tensor(const Shape& s, Matrix<Scalar> values) : shape(s), data(std::move(values)) {
        if (data.rows() != s.per_item() || data.cols() != s.batch)
            throw InvalidInput("tensor data does not match shape " + s.str());
    }

    Scalar& at(int b, int c, int y, int x) {
        return data(static_cast<Eigen::Index>(c) * shape.pixels() + y * shape.width + x, b);
    }
    Scalar at(int b, int c, int y, int x) const {
        return data(static_cast<Eigen::Index>(c) * shape.pixels() + y * shape.width + x, b);
    }

    /// Item b as a (pixels x channels) matrix.
    Eigen::Map<Matrix<Scalar>> item(int b) {
        return {data.col(b).data(), shape.pixels(), shape.channels};
    }
    Eigen::Map<const Matrix<Scalar>> item(int b) const {
        return {data.col(b).data(), shape.pixels(), shape.channels};
    }

    /// One channel plane as a (height x width) matrix.
    Eigen::Map<RowMajorMatrix<Scalar>> plane(int b, int c) {
        return {data.col(b).data() + static_cast<Eigen::Index>(c) * shape.pixels(), shape.height, shape.width};
    }
    Eigen::Map<const RowMajorMatrix<Scalar>> plane(int b, int c) const {
        return {data.col(b).data() + static_cast<Eigen::Index>(c) * shape.pixels(), shape.height, shape.width};
    }

    template <typename Other>
    Tensor<Other> cast() const {
        return Tensor<Other>(shape, data.template cast<Other>());
    }
};

}  // namespace polcolor::nn
