#pragma once

#include <Eigen/Dense>

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "corrstyle/backbone/attention.hpp"
#include "corrstyle/correspondence.hpp"

namespace corrstyle {

struct InjectionConfig {
    double w = 0.6;
    double gamma = 0.7;
    int start_step = 49;
    std::vector<std::string> target_blocks;
    // Scale w by the cosine score of each match.
    bool score_modulated = false;

    void validate(int total_steps) const;
};

// softmax(Q_c K_s^T / (gamma * sqrt(d))) V_s per head.
template <typename DerivedQ, typename DerivedK, typename DerivedV>
Eigen::Matrix<typename DerivedQ::Scalar, Eigen::Dynamic, Eigen::Dynamic> kv_swap_attention(
    const Eigen::MatrixBase<DerivedQ>& q_content, const Eigen::MatrixBase<DerivedK>& k_style,
    const Eigen::MatrixBase<DerivedV>& v_style, typename DerivedQ::Scalar gamma, int heads = 1) {
    if (!(gamma > 0)) throw ConfigError("kv_swap_attention: gamma must be positive");
    return multi_head_attention(q_content, k_style, v_style, heads, gamma);
}

// Channel-major operands: column p of `feat` is the feature at source cell p,
// column q of `attn` the attention output at target cell q.
// out[:, p] = feat[:, p] + w * attn[:, map(p)].
template <typename DerivedF, typename DerivedA>
Eigen::Matrix<typename DerivedF::Scalar, Eigen::Dynamic, Eigen::Dynamic> inject_correspondence(
    const Eigen::MatrixBase<DerivedF>& feat, const Eigen::MatrixBase<DerivedA>& attn,
    const CorrespondenceMap& map, typename DerivedF::Scalar w, bool score_modulated = false) {
    using Scalar = typename DerivedF::Scalar;
    if (feat.cols() != map.size()) {
        throw DimensionError("inject_correspondence: map covers " + std::to_string(map.size()) +
                             " source cells, features have " + std::to_string(feat.cols()));
    }
    if (attn.cols() != map.target_height * map.target_width) {
        throw DimensionError("inject_correspondence: attention grid has " + std::to_string(attn.cols()) +
                             " cells, map targets " + std::to_string(map.target_height * map.target_width));
    }
    if (feat.rows() != attn.rows()) {
        throw DimensionError("inject_correspondence: channel counts " + std::to_string(feat.rows()) + " and " +
                             std::to_string(attn.rows()) + " differ");
    }
    Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> out = feat;
    if (w == Scalar(0)) return out;
    for (Index p = 0; p < out.cols(); ++p) {
        const Scalar weight = score_modulated ? w * Scalar(map.score(p)) : w;
        out.col(p) += weight * attn.col(map.target[std::size_t(p)]);
    }
    return out;
}

template <typename Scalar>
Tensor3<Scalar> inject_correspondence(const Tensor3<Scalar>& feat, const Tensor3<Scalar>& attn,
                                      const CorrespondenceMap& map, Scalar w, bool score_modulated = false) {
    if (feat.height != map.source_height || feat.width != map.source_width ||
        attn.height != map.target_height || attn.width != map.target_width) {
        throw DimensionError("inject_correspondence: map grids do not match " + shape_string(feat) + " / " +
                             shape_string(attn));
    }
    return Tensor3<Scalar>(inject_correspondence(feat.data, attn.data, map, w, score_modulated), feat.height,
                           feat.width);
}

// `current_step` is the 1-based index of the denoising step in the sampling loop.
inline bool injection_active(int current_step, const InjectionConfig& config) {
    return current_step >= config.start_step;
}

// Attention records of one stream keyed by timestep.
using AttentionBank = std::map<int, AttentionBundle>;

AttentionBank make_bank(const std::vector<AttentionBundle>& bundles);

// Replaces K and V with the style stream's at the same timestep and block and
// sets the attention temperature to gamma.
class KvSwapHook : public AttentionHook {
public:
    KvSwapHook(std::vector<std::string> blocks, std::shared_ptr<const AttentionBank> style, double gamma);

    std::vector<std::string> blocks() const override { return blocks_; }
    bool active(const AttentionSite& site) const override;
    void before_softmax(const AttentionSite& site, AttentionTensors& tensors) override;

private:
    std::vector<std::string> blocks_;
    std::shared_ptr<const AttentionBank> style_;
    double gamma_;
};

// Adds w * attn[map(p)] to the attention output at every query cell p while
// injection_active holds. `source` provides attn per timestep; the map is
// rescaled by nearest neighbour when block grids differ from its own.
class CorrespondenceInjectionHook : public AttentionHook {
public:
    CorrespondenceInjectionHook(InjectionConfig config, CorrespondenceMap map,
                                std::shared_ptr<const AttentionBank> source);

    std::vector<std::string> blocks() const override { return config_.target_blocks; }
    bool active(const AttentionSite& site) const override;
    void after_output(const AttentionSite& site, const AttentionTensors& tensors, TokenMatrix& output) override;

private:
    InjectionConfig config_;
    CorrespondenceMap map_;
    std::shared_ptr<const AttentionBank> source_;
};

}  // namespace corrstyle
