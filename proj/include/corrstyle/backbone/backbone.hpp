#pragma once

#include <compare>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "corrstyle/backbone/model.hpp"
#include "corrstyle/backbone/schedule.hpp"

namespace corrstyle {

// Latent plus the pixel resolution it was encoded from.
struct LatentTensor {
    Tensor3d data;
    Index image_height = 0;
    Index image_width = 0;
};

struct FeatureLocator {
    int timestep = 0;
    std::string layer;

    auto operator<=>(const FeatureLocator&) const = default;
    std::string to_string() const { return "t=" + std::to_string(timestep) + ",l=" + layer; }
};

struct FeatureMap {
    FeatureLocator locator;
    Tensor3d data;  // (feature_dim, h, w)
    std::string source;
};

// Checkpoint + schedule + feature-mining settings. All operations are const
// and deterministic in (inputs, checkpoint, seed).
class Backbone {
public:
    Backbone(std::shared_ptr<const LatentDiffusionModel> model, DiffusionSchedule schedule,
             std::uint64_t seed = 0, std::vector<std::string> candidate_layers = {});

    const LatentDiffusionModel& model() const { return *model_; }
    std::shared_ptr<const LatentDiffusionModel> model_ptr() const { return model_; }
    const DiffusionSchedule& schedule() const { return schedule_; }
    int total_steps() const { return schedule_.total_steps; }
    std::uint64_t seed() const { return seed_; }
    // The candidate layer set; defaults to every decoder block.
    const std::vector<std::string>& candidate_layers() const { return layers_; }
    const LayerInfo& layer_info(const std::string& layer) const;

    LatentTensor encode_image(const Image& image) const;
    Image decode_latent(const LatentTensor& latent) const;

    // Trajectory x_0 .. x_T; element 0 is the input latent.
    std::vector<LatentTensor> ddim_invert(const LatentTensor& latent) const;
    // Denoises an x_T latent to x_0. Hooks are validated before the first step.
    LatentTensor ddim_sample(const LatentTensor& start, const HookSet& hooks = {}) const;

    FeatureMap extract_features(const Image& image, const FeatureLocator& locator,
                                std::string source = {}) const;
    // Every requested layer at one timestep from a single noised forward pass.
    std::vector<FeatureMap> extract_features_at(const Image& image, int timestep,
                                                const std::vector<std::string>& layers,
                                                std::string source = {}) const;

    // One record per self-attention block for `latent` evaluated at `timestep`.
    AttentionBundle capture_attention(const LatentTensor& latent, int timestep) const;

    void validate_locator(const FeatureLocator& locator) const;
    void validate_hooks(const HookSet& hooks) const;
    void validate_latent(const LatentTensor& latent) const;

    StepContext context(int timestep, int step = 0) const;

    // Plain "key = value" description of the decoder blocks for an image size.
    std::string inspect(Index image_height, Index image_width) const;

private:
    std::shared_ptr<const LatentDiffusionModel> model_;
    DiffusionSchedule schedule_;
    std::uint64_t seed_;
    std::vector<std::string> layers_;
    std::vector<LayerInfo> layer_table_;
};

}  // namespace corrstyle
