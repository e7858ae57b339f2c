#pragma once

#include <Eigen/Dense>

#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "corrstyle/error.hpp"
#include "corrstyle/tensor.hpp"

namespace corrstyle {

// Token-major attention operands: one row per token, heads * head_dim columns.
using TokenMatrix = Eigen::MatrixXd;

namespace detail {

// Column-stochastic transpose of the attention weights: column j holds the
// softmax over keys for query j. Column storage keeps the normalization
// contiguous.
template <typename DerivedQ, typename DerivedK>
Eigen::Matrix<typename DerivedQ::Scalar, Eigen::Dynamic, Eigen::Dynamic> key_major_weights(
    const Eigen::MatrixBase<DerivedQ>& q, const Eigen::MatrixBase<DerivedK>& k,
    typename DerivedQ::Scalar temperature) {
    using Scalar = typename DerivedQ::Scalar;
    using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
    if (q.cols() != k.cols()) throw DimensionError("attention: query/key head dimensions differ");
    if (q.cols() == 0) throw DimensionError("attention: head dimension must be positive");
    if (k.rows() == 0) throw DimensionError("attention: no key tokens");
    const Scalar scale = Scalar(1) / (temperature * std::sqrt(Scalar(q.cols())));
    Matrix logits(k.rows(), q.rows());
    logits.noalias() = (k * scale) * q.transpose();
    for (Index j = 0; j < logits.cols(); ++j) {
        auto col = logits.col(j);
        const Scalar m = col.maxCoeff();
        col = (col.array() - m).exp();
        col /= col.sum();
    }
    return logits;
}

}  // namespace detail

// Row-stochastic weights softmax(Q K^T / (temperature * sqrt(d))) for one
// head, one row per query. Rows are stabilized by subtracting their maximum.
template <typename DerivedQ, typename DerivedK>
Eigen::Matrix<typename DerivedQ::Scalar, Eigen::Dynamic, Eigen::Dynamic> attention_weights(
    const Eigen::MatrixBase<DerivedQ>& q, const Eigen::MatrixBase<DerivedK>& k,
    typename DerivedQ::Scalar temperature) {
    return detail::key_major_weights(q, k, temperature).transpose();
}

// Multi-head scaled dot-product attention; heads split the columns evenly.
template <typename DerivedQ, typename DerivedK, typename DerivedV>
Eigen::Matrix<typename DerivedQ::Scalar, Eigen::Dynamic, Eigen::Dynamic> multi_head_attention(
    const Eigen::MatrixBase<DerivedQ>& q, const Eigen::MatrixBase<DerivedK>& k,
    const Eigen::MatrixBase<DerivedV>& v, int heads, typename DerivedQ::Scalar temperature) {
    using Scalar = typename DerivedQ::Scalar;
    using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
    if (heads <= 0) throw DimensionError("attention: head count must be positive");
    if (q.cols() != k.cols() || k.cols() != v.cols()) {
        throw DimensionError("attention: Q/K/V widths differ");
    }
    if (k.rows() != v.rows()) throw DimensionError("attention: key/value token counts differ");
    if (q.cols() % heads != 0) throw DimensionError("attention: width not divisible by heads");
    if (!(temperature > 0)) throw ConfigError("attention: temperature must be positive");
    const Index d = q.cols() / heads;
    Matrix out(q.rows(), q.cols());
    for (int h = 0; h < heads; ++h) {
        const Matrix weights = detail::key_major_weights(q.middleCols(h * d, d), k.middleCols(h * d, d), temperature);
        out.middleCols(h * d, d).noalias() = weights.transpose() * v.middleCols(h * d, d);
    }
    return out;
}

// Location of an attention evaluation inside a U-Net forward pass.
// `step` is the 1-based count of the denoising step being computed inside a
// sampling loop, and 0 for forward passes outside sampling.
struct AttentionSite {
    std::string_view block;
    int timestep = 0;
    int step = 0;
};

// Mutable operands handed to hooks before the softmax. Query grid geometry is
// attached so hooks can address spatial locations.
struct AttentionTensors {
    TokenMatrix q, k, v;
    int heads = 1;
    double temperature = 1.0;
    Index grid_height = 0;
    Index grid_width = 0;
};

struct AttentionRecord {
    std::string block;
    int heads = 1;
    Index head_dim = 0;
    Index grid_height = 0;
    Index grid_width = 0;
    TokenMatrix q, k, v, output;
};

struct AttentionBundle {
    int timestep = 0;
    std::vector<AttentionRecord> records;

    const AttentionRecord* find(std::string_view block) const {
        for (const auto& r : records) {
            if (r.block == block) return &r;
        }
        return nullptr;
    }
    const AttentionRecord& at(std::string_view block) const {
        const auto* r = find(block);
        if (!r) throw ConfigError("attention bundle has no block " + std::string(block));
        return *r;
    }
    void validate() const;
};

// Hooks observe or rewrite self-attention. The model calls, for every block a
// hook registered via blocks() and for which active() holds, before_softmax
// exactly once and then after_output exactly once.
class AttentionHook {
public:
    virtual ~AttentionHook() = default;
    virtual std::vector<std::string> blocks() const = 0;
    virtual bool active(const AttentionSite& site) const {
        (void)site;
        return true;
    }
    virtual void before_softmax(const AttentionSite& site, AttentionTensors& tensors) {
        (void)site;
        (void)tensors;
    }
    virtual void after_output(const AttentionSite& site, const AttentionTensors& tensors,
                              TokenMatrix& output) {
        (void)site;
        (void)tensors;
        (void)output;
    }
};

using HookSet = std::vector<std::shared_ptr<AttentionHook>>;

// Pure observer storing one record per block it sees, keyed by timestep.
class RecordingHook : public AttentionHook {
public:
    explicit RecordingHook(std::vector<std::string> blocks, bool keep_inputs = true)
        : blocks_(std::move(blocks)), keep_inputs_(keep_inputs) {}

    std::vector<std::string> blocks() const override { return blocks_; }
    void after_output(const AttentionSite& site, const AttentionTensors& tensors,
                      TokenMatrix& output) override;

    const std::vector<AttentionBundle>& bundles() const { return bundles_; }
    // Bundle recorded at `timestep`, or nullptr.
    const AttentionBundle* at_timestep(int timestep) const;

private:
    std::vector<std::string> blocks_;
    bool keep_inputs_;
    std::vector<AttentionBundle> bundles_;
};

}  // namespace corrstyle
