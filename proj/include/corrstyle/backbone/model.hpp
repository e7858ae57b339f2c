#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "corrstyle/backbone/attention.hpp"
#include "corrstyle/image.hpp"
#include "corrstyle/tensor.hpp"

namespace corrstyle {

// One enumerable decoder block. `downsample` is relative to the latent grid.
struct LayerInfo {
    std::string name;
    Index channels = 0;
    Index downsample = 1;
    std::string attention_block;  // empty when the block has no self-attention
};

struct StepContext {
    int timestep = 0;  // DDIM step index k (1..T)
    int step = 0;      // 1-based sampling step, 0 outside sampling
    int model_timestep = 0;
    double alpha_bar = 1.0;
};

// Per-layer activations collected during a forward pass, keyed by layer name.
using FeatureSink = std::map<std::string, Tensor3d>;

// A pretrained latent-diffusion checkpoint: VAE-style codec plus a noise
// predictor whose self-attention blocks accept hooks. Implementations are
// immutable after construction, so concurrent const calls are safe.
class LatentDiffusionModel {
public:
    virtual ~LatentDiffusionModel() = default;

    virtual std::string id() const = 0;
    virtual Index latent_channels() const = 0;
    // Pixels per latent cell along each axis.
    virtual Index downsample_factor() const = 0;
    // Image sides must be multiples of this (codec factor times U-Net depth).
    virtual Index resolution_multiple() const = 0;

    virtual Tensor3d encode(const Image& image) const = 0;
    virtual Image decode(const Tensor3d& latent) const = 0;

    virtual std::vector<LayerInfo> decoder_layers() const = 0;
    virtual std::vector<std::string> attention_blocks() const = 0;

    virtual Tensor3d predict_noise(const Tensor3d& latent, const StepContext& ctx,
                                   const HookSet& hooks, FeatureSink* features = nullptr) const = 0;
};

// Resolves a checkpoint identifier. Only built-in identifiers are bound in
// this build; anything else raises CheckpointError.
std::shared_ptr<const LatentDiffusionModel> load_checkpoint(const std::string& id,
                                                             const std::map<std::string, std::string>& options = {});

}  // namespace corrstyle
