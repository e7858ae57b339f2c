#pragma once

#include <Eigen/Dense>

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "corrstyle/backbone/backbone.hpp"
#include "corrstyle/tensor.hpp"

namespace corrstyle {

// Cosine of the angle between a and b, clamped to [-1, 1]. A zero vector on
// either side yields 0.
template <typename DerivedA, typename DerivedB>
typename DerivedA::Scalar cosine_similarity(const Eigen::MatrixBase<DerivedA>& a,
                                            const Eigen::MatrixBase<DerivedB>& b) {
    using Scalar = typename DerivedA::Scalar;
    if (a.size() != b.size()) {
        throw DimensionError("cosine_similarity: dimensions " + std::to_string(a.size()) + " and " +
                             std::to_string(b.size()) + " differ");
    }
    const Scalar na = a.norm(), nb = b.norm();
    if (na == Scalar(0) || nb == Scalar(0)) return Scalar(0);
    const Scalar c = a.dot(b) / (na * nb);
    return std::clamp(c, Scalar(-1), Scalar(1));
}

// Total assignment from every source grid cell to one target grid cell.
struct CorrespondenceMap {
    Index source_height = 0, source_width = 0;
    Index target_height = 0, target_width = 0;
    std::vector<Index> target;  // flat row-major target index per source cell
    Eigen::VectorXd score;      // cosine similarity of each match
    FeatureLocator locator;

    Index size() const { return Index(target.size()); }
    Index target_x(Index source) const { return target[std::size_t(source)] % target_width; }
    Index target_y(Index source) const { return target[std::size_t(source)] / target_width; }

    void validate() const;

    // Nearest-neighbour transfer onto other source/target grids.
    CorrespondenceMap resampled(Index src_h, Index src_w, Index dst_h, Index dst_w) const;
};

namespace detail {

template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> unit_columns(
    const typename Tensor3<Scalar>::Matrix& features) {
    Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> out = features;
    for (Index j = 0; j < out.cols(); ++j) {
        const Scalar n = out.col(j).norm();
        if (n > Scalar(0)) out.col(j) /= n;
    }
    return out;
}

}  // namespace detail

// For every source cell, the target cell of maximal cosine similarity. Ties
// resolve to the first maximum in row-major scan order.
template <typename Scalar>
CorrespondenceMap dense_match(const Tensor3<Scalar>& source, const Tensor3<Scalar>& target) {
    if (source.empty() || target.empty()) throw DimensionError("dense_match: empty feature map");
    if (source.channels() != target.channels()) {
        throw DimensionError("dense_match: feature dimensions " + std::to_string(source.channels()) +
                             " and " + std::to_string(target.channels()) + " differ");
    }
    using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
    const Matrix src = detail::unit_columns<Scalar>(source.data);
    const Matrix dst = detail::unit_columns<Scalar>(target.data);

    CorrespondenceMap map;
    map.source_height = source.height;
    map.source_width = source.width;
    map.target_height = target.height;
    map.target_width = target.width;
    map.target.resize(std::size_t(source.pixels()));
    map.score.resize(source.pixels());

    constexpr Index kChunk = 256;
    for (Index begin = 0; begin < src.cols(); begin += kChunk) {
        const Index count = std::min(kChunk, src.cols() - begin);
        // (target cells) x (source cells in this chunk)
        const Matrix sims = dst.transpose() * src.middleCols(begin, count);
        for (Index j = 0; j < count; ++j) {
            Index best = 0;
            Scalar best_value = sims(0, j);
            for (Index i = 1; i < sims.rows(); ++i) {
                if (sims(i, j) > best_value) {
                    best_value = sims(i, j);
                    best = i;
                }
            }
            map.target[std::size_t(begin + j)] = best;
            map.score(begin + j) = double(std::clamp(best_value, Scalar(-1), Scalar(1)));
        }
    }
    return map;
}

// Feature maps must come from the same locator.
CorrespondenceMap dense_match(const FeatureMap& source, const FeatureMap& target);

struct Keypoint {
    double x = 0, y = 0;
};

struct KeypointPair {
    Keypoint source;
    Keypoint target;
    std::string pair_id;
};

// One annotated image pair of a correspondence benchmark.
struct BenchmarkPair {
    std::string id;
    std::filesystem::path source_path, target_path;
    Index source_height = 0, source_width = 0;
    Index target_height = 0, target_width = 0;
    std::vector<KeypointPair> keypoints;
};

// Image -> grid by nearest cell, grid -> image by cell centre.
std::vector<Keypoint> predict_keypoints(const CorrespondenceMap& map, const BenchmarkPair& pair);

// Fraction of predictions within alpha * max(height, width) of the ground
// truth target keypoint (inclusive).
double pck_score(const std::vector<Keypoint>& predicted, const std::vector<KeypointPair>& keypoints,
                 double alpha, Index image_height, Index image_width);

struct GridSearchResult {
    std::map<FeatureLocator, double> scores;  // M(t, l); missing cells absent
    std::set<FeatureLocator> missing;
    FeatureLocator best;
    double best_score = 0;
};

// Supplies (source, target) feature maps for pair `index` at one timestep for
// each requested layer, in order.
using FeaturePairSource = std::function<std::vector<std::pair<FeatureMap, FeatureMap>>(
    std::size_t index, int timestep, const std::vector<std::string>& layers)>;

// M(t, l) is the mean over pairs of per-pair PCK. A cell whose extraction
// throws is recorded as missing. Ties go to the smaller t, then the
// lexicographically smaller layer.
GridSearchResult grid_search(const std::vector<BenchmarkPair>& pairs, const FeaturePairSource& source,
                             const std::vector<int>& timesteps, const std::vector<std::string>& layers,
                             double alpha);

// Feature source backed by a backbone; images are loaded lazily from the
// pair paths.
FeaturePairSource backbone_feature_source(const Backbone& backbone, const std::vector<BenchmarkPair>& pairs);

// Line-delimited JSON: {"id", "source", "target", "source_keypoints",
// "target_keypoints"}; image paths are relative to the manifest directory.
std::vector<BenchmarkPair> load_keypoint_manifest(const std::filesystem::path& path);

struct LocatorCache {
    std::string checkpoint;
    FeatureLocator best;
    double alpha = 0.1;
    GridSearchResult result;
};

void save_locator_cache(const std::filesystem::path& path, const LocatorCache& cache);
LocatorCache load_locator_cache(const std::filesystem::path& path);

}  // namespace corrstyle
