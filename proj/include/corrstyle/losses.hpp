#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <string>
#include <vector>

#include "corrstyle/image.hpp"
#include "corrstyle/tensor.hpp"

namespace corrstyle {

// Gradient magnitude map, one channel.
template <typename Scalar>
using EdgeMap = Tensor3<Scalar>;

template <typename Scalar>
struct GramMatrix {
    Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> data;
    Scalar normalization = Scalar(1);
};

// Magnitude of the 3x3 Sobel gradient with reflect padding.
template <typename Scalar>
EdgeMap<Scalar> sobel_edges(const Tensor3<Scalar>& gray) {
    if (gray.channels() != 1) throw DimensionError("sobel_edges: expected one channel, got " + shape_string(gray));
    if (gray.height < 3 || gray.width < 3) {
        throw DimensionError("sobel_edges: image " + shape_string(gray) + " is smaller than the 3x3 kernel");
    }
    EdgeMap<Scalar> out(1, gray.height, gray.width);
    auto at = [&](Index y, Index x) { return gray(0, reflect_index(y, gray.height), reflect_index(x, gray.width)); };
    for (Index y = 0; y < gray.height; ++y) {
        for (Index x = 0; x < gray.width; ++x) {
            const Scalar right = at(y - 1, x + 1) + Scalar(2) * at(y, x + 1) + at(y + 1, x + 1);
            const Scalar left = at(y - 1, x - 1) + Scalar(2) * at(y, x - 1) + at(y + 1, x - 1);
            const Scalar bottom = at(y + 1, x - 1) + Scalar(2) * at(y + 1, x) + at(y + 1, x + 1);
            const Scalar top = at(y - 1, x - 1) + Scalar(2) * at(y - 1, x) + at(y - 1, x + 1);
            const Scalar gx = right - left, gy = bottom - top;
            out(0, y, x) = std::sqrt(gx * gx + gy * gy);
        }
    }
    return out;
}

// Mean absolute difference of Sobel edge maps; RGB inputs go through luma.
inline double content_loss(const Image& generated, const Image& content) {
    if (generated.height != content.height || generated.width != content.width ||
        generated.channels() != content.channels()) {
        throw DimensionError("content_loss: " + shape_string(generated) + " vs " + shape_string(content));
    }
    auto gray = [](const Image& im) { return im.channels() == 1 ? im : luminance(im); };
    const auto a = sobel_edges(gray(generated));
    const auto b = sobel_edges(gray(content));
    return (a.data - b.data).cwiseAbs().mean();
}

// F F^T of the (k, h*w) flattening, divided by k*h*w when `normalize` is set.
template <typename Scalar>
GramMatrix<Scalar> gram_matrix(const Tensor3<Scalar>& features, bool normalize = true) {
    if (features.empty()) throw DimensionError("gram_matrix: empty features");
    GramMatrix<Scalar> g;
    g.normalization = normalize ? Scalar(features.channels() * features.pixels()) : Scalar(1);
    g.data.resize(features.channels(), features.channels());
    g.data.setZero();
    g.data.template selfadjointView<Eigen::Lower>().rankUpdate(features.data);
    g.data.template triangularView<Eigen::StrictlyUpper>() = g.data.transpose();
    g.data /= g.normalization;
    return g;
}

// Sum over layers of ||G(gen) - G(style)||_F^2.
template <typename Scalar>
Scalar style_loss(const std::vector<Tensor3<Scalar>>& generated, const std::vector<Tensor3<Scalar>>& style,
                  bool normalize = true) {
    if (generated.size() != style.size() || generated.empty()) {
        throw DimensionError("style_loss: layer sets of size " + std::to_string(generated.size()) + " and " +
                             std::to_string(style.size()));
    }
    Scalar total = 0;
    for (std::size_t l = 0; l < generated.size(); ++l) {
        if (generated[l].channels() != style[l].channels()) {
            throw DimensionError("style_loss: layer " + std::to_string(l) + " channel counts differ");
        }
        total += (gram_matrix(generated[l], normalize).data - gram_matrix(style[l], normalize).data).squaredNorm();
    }
    return total;
}

}  // namespace corrstyle
