#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "corrstyle/backbone/model.hpp"

namespace corrstyle {

struct PatchAttentionConfig {
    Index downsample = 8;      // codec factor
    double bandwidth = 0.12;   // base kernel width, latent units per dimension
    double noise_coupling = 0.05;  // widens the kernel with the noise level
    double relaxation = 0.3;  // eps = relaxation * sum_l weight_l * residual_l
    std::array<double, 3> level_weights{0.25, 0.25, 0.5};
    unsigned texture_seed = 1234;
};

// Built-in checkpoint. The codec stores per-cell luma, two chroma-difference
// channels and luma contrast (4 latent channels). The noise predictor is a
// four-block decoder (latent strides 8, 4, 2, 1); blocks 1..3 run
// single-head self-attention whose logits equal the negative squared
// distance between multi-scale 3x3 patch descriptors, so attention is a
// non-local means estimate of the clean latent and eps is the residual.
class PatchAttentionModel final : public LatentDiffusionModel {
public:
    static constexpr const char* kId = "builtin:patch-attention-ldm";

    explicit PatchAttentionModel(PatchAttentionConfig config = {});

    std::string id() const override { return kId; }
    Index latent_channels() const override { return 4; }
    Index downsample_factor() const override { return config_.downsample; }
    Index resolution_multiple() const override { return config_.downsample * 8; }

    Tensor3d encode(const Image& image) const override;
    Image decode(const Tensor3d& latent) const override;

    std::vector<LayerInfo> decoder_layers() const override;
    std::vector<std::string> attention_blocks() const override;

    Tensor3d predict_noise(const Tensor3d& latent, const StepContext& ctx, const HookSet& hooks,
                           FeatureSink* features = nullptr) const override;

    const PatchAttentionConfig& config() const { return config_; }

private:
    PatchAttentionConfig config_;
    static constexpr std::size_t kTextureTiles = 64;
    const Eigen::MatrixXd& texture_tile(Index cy, Index cx) const;
    std::vector<Eigen::MatrixXd> texture_tiles_;  // zero-mean, unit-variance downsample x downsample
};

}  // namespace corrstyle
