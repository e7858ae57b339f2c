#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <string>

#include "corrstyle/error.hpp"

namespace corrstyle {

using Index = Eigen::Index;

// Dense (channels, height, width) array. Each row of `data` is one channel
// plane stored row-major, so column `y * width + x` is the feature vector at
// pixel (x, y).
template <typename Scalar>
struct Tensor3 {
    using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

    Matrix data;
    Index height = 0;
    Index width = 0;

    Tensor3() = default;
    Tensor3(Index channels, Index h, Index w)
        : data(Matrix::Zero(channels, h * w)), height(h), width(w) {}
    Tensor3(Matrix values, Index h, Index w) : data(std::move(values)), height(h), width(w) {
        if (data.cols() != h * w) {
            throw DimensionError("tensor data has " + std::to_string(data.cols()) +
                                 " columns, expected " + std::to_string(h * w));
        }
    }

    Index channels() const { return data.rows(); }
    Index pixels() const { return height * width; }
    bool empty() const { return data.size() == 0; }

    Scalar& operator()(Index c, Index y, Index x) { return data(c, y * width + x); }
    Scalar operator()(Index c, Index y, Index x) const { return data(c, y * width + x); }

    bool same_shape(const Tensor3& other) const {
        return channels() == other.channels() && height == other.height && width == other.width;
    }

    bool all_finite() const { return data.allFinite(); }
};

using Tensor3d = Tensor3<double>;
using Tensor3f = Tensor3<float>;

template <typename Scalar>
std::string shape_string(const Tensor3<Scalar>& t) {
    return "(" + std::to_string(t.channels()) + ", " + std::to_string(t.height) + ", " +
           std::to_string(t.width) + ")";
}

// Index reflection without repeating the edge sample (numpy "reflect").
inline Index reflect_index(Index i, Index n) {
    if (n == 1) return 0;
    while (i < 0 || i >= n) {
        if (i < 0) i = -i;
        if (i >= n) i = 2 * (n - 1) - i;
    }
    return i;
}

// Mean over non-overlapping factor x factor cells.
template <typename Scalar>
Tensor3<Scalar> average_pool(const Tensor3<Scalar>& in, Index factor) {
    if (factor == 1) return in;
    if (in.height % factor != 0 || in.width % factor != 0) {
        throw DimensionError("average_pool: " + shape_string(in) + " not divisible by " +
                             std::to_string(factor));
    }
    const Index h = in.height / factor, w = in.width / factor;
    Tensor3<Scalar> out(in.channels(), h, w);
    const Scalar norm = Scalar(1) / Scalar(factor * factor);
    for (Index c = 0; c < in.channels(); ++c) {
        for (Index y = 0; y < in.height; ++y) {
            for (Index x = 0; x < in.width; ++x) {
                out(c, y / factor, x / factor) += in(c, y, x) * norm;
            }
        }
    }
    return out;
}

template <typename Scalar>
Tensor3<Scalar> upsample_nearest(const Tensor3<Scalar>& in, Index out_h, Index out_w) {
    Tensor3<Scalar> out(in.channels(), out_h, out_w);
    for (Index y = 0; y < out_h; ++y) {
        const Index sy = std::min(in.height - 1, y * in.height / out_h);
        for (Index x = 0; x < out_w; ++x) {
            const Index sx = std::min(in.width - 1, x * in.width / out_w);
            out.data.col(y * out_w + x) = in.data.col(sy * in.width + sx);
        }
    }
    return out;
}

// Bilinear resampling with half-pixel centers (align_corners = false).
template <typename Scalar>
Tensor3<Scalar> resize_bilinear(const Tensor3<Scalar>& in, Index out_h, Index out_w) {
    if (in.height == out_h && in.width == out_w) return in;
    Tensor3<Scalar> out(in.channels(), out_h, out_w);
    const double sy = double(in.height) / double(out_h);
    const double sx = double(in.width) / double(out_w);
    for (Index y = 0; y < out_h; ++y) {
        double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, double(in.height - 1));
        const Index y0 = Index(std::floor(fy));
        const Index y1 = std::min(y0 + 1, in.height - 1);
        const double ty = fy - double(y0);
        for (Index x = 0; x < out_w; ++x) {
            double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, double(in.width - 1));
            const Index x0 = Index(std::floor(fx));
            const Index x1 = std::min(x0 + 1, in.width - 1);
            const double tx = fx - double(x0);
            out.data.col(y * out_w + x) =
                (in.data.col(y0 * in.width + x0) * Scalar((1 - ty) * (1 - tx)) +
                 in.data.col(y0 * in.width + x1) * Scalar((1 - ty) * tx) +
                 in.data.col(y1 * in.width + x0) * Scalar(ty * (1 - tx)) +
                 in.data.col(y1 * in.width + x1) * Scalar(ty * tx));
        }
    }
    return out;
}

}  // namespace corrstyle
