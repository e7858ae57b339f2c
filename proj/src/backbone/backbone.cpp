#include "corrstyle/backbone/backbone.hpp"

#include <algorithm>
#include <random>
#include <set>
#include <sstream>

namespace corrstyle {

namespace {

// FNV-1a over the pixel values, so each image draws its own noise.
std::uint64_t content_hash(const Image& image) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    const auto* bytes = reinterpret_cast<const unsigned char*>(image.data.data());
    for (std::size_t i = 0; i < std::size_t(image.data.size()) * sizeof(double); ++i) {
        h ^= bytes[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

}  // namespace

Backbone::Backbone(std::shared_ptr<const LatentDiffusionModel> model, DiffusionSchedule schedule,
                   std::uint64_t seed, std::vector<std::string> candidate_layers)
    : model_(std::move(model)), schedule_(std::move(schedule)), seed_(seed), layers_(std::move(candidate_layers)) {
    if (!model_) throw CheckpointError("backbone: no checkpoint");
    schedule_.validate();
    layer_table_ = model_->decoder_layers();
    if (layers_.empty()) {
        for (const auto& info : layer_table_) layers_.push_back(info.name);
    }
    for (const auto& name : layers_) {
        const bool known = std::any_of(layer_table_.begin(), layer_table_.end(),
                                       [&](const LayerInfo& info) { return info.name == name; });
        if (!known) throw ConfigError("backbone: layer '" + name + "' is not a decoder block of " + model_->id());
    }
}

const LayerInfo& Backbone::layer_info(const std::string& layer) const {
    for (const auto& info : layer_table_) {
        if (info.name == layer) return info;
    }
    throw ConfigError("unknown decoder layer '" + layer + "'");
}

StepContext Backbone::context(int timestep, int step) const {
    return StepContext{timestep, step, schedule_.model_timestep(timestep), schedule_.alpha_bar(timestep)};
}

LatentTensor Backbone::encode_image(const Image& image) const {
    require_rgb(image, "encode_image");
    const Index multiple = model_->resolution_multiple();
    if (image.height == 0 || image.width == 0 || image.height % multiple != 0 || image.width % multiple != 0) {
        throw DimensionError("encode_image: resolution " + std::to_string(image.width) + "x" +
                             std::to_string(image.height) + " is not a multiple of " + std::to_string(multiple));
    }
    if (!in_unit_range(image)) throw ValidationError("encode_image: pixel values must be finite and in [0, 1]");
    LatentTensor latent{model_->encode(image), image.height, image.width};
    if (!latent.data.all_finite()) throw NonFiniteError("encode_image: checkpoint produced non-finite latent");
    return latent;
}

void Backbone::validate_latent(const LatentTensor& latent) const {
    const Index f = model_->downsample_factor();
    if (latent.data.channels() != model_->latent_channels() || latent.data.height * f != latent.image_height ||
        latent.data.width * f != latent.image_width) {
        throw DimensionError("latent " + shape_string(latent.data) + " does not match checkpoint geometry for " +
                             std::to_string(latent.image_width) + "x" + std::to_string(latent.image_height));
    }
    if (!latent.data.all_finite()) throw NonFiniteError("latent contains non-finite entries");
}

Image Backbone::decode_latent(const LatentTensor& latent) const {
    validate_latent(latent);
    Image image = model_->decode(latent.data);
    if (image.height != latent.image_height || image.width != latent.image_width) {
        throw DimensionError("decode_latent: checkpoint returned " + shape_string(image));
    }
    image.data = image.data.cwiseMax(0.0).cwiseMin(1.0);
    return image;
}

std::vector<LatentTensor> Backbone::ddim_invert(const LatentTensor& latent) const {
    validate_latent(latent);
    std::vector<LatentTensor> trajectory;
    trajectory.reserve(std::size_t(total_steps()) + 1);
    trajectory.push_back(latent);
    const HookSet none;
    for (int k = 1; k <= total_steps(); ++k) {
        const Tensor3d& prev = trajectory.back().data;
        const Tensor3d eps = model_->predict_noise(prev, context(k), none);
        const double ab_prev = schedule_.alpha_bar(k - 1), ab = schedule_.alpha_bar(k);
        Tensor3d next(prev.channels(), prev.height, prev.width);
        next.data = std::sqrt(ab) * ((prev.data - std::sqrt(1.0 - ab_prev) * eps.data) / std::sqrt(ab_prev)) +
                    std::sqrt(1.0 - ab) * eps.data;
        if (!next.all_finite()) {
            throw NonFiniteError("ddim_invert: non-finite latent at timestep " + std::to_string(k));
        }
        trajectory.push_back(LatentTensor{std::move(next), latent.image_height, latent.image_width});
    }
    return trajectory;
}

void Backbone::validate_hooks(const HookSet& hooks) const {
    const auto blocks = model_->attention_blocks();
    for (const auto& hook : hooks) {
        if (!hook) throw ConfigError("hook set contains a null hook");
        for (const auto& b : hook->blocks()) {
            if (std::find(blocks.begin(), blocks.end(), b) == blocks.end()) {
                throw ConfigError("hook targets unknown attention block '" + b + "'");
            }
        }
    }
}

LatentTensor Backbone::ddim_sample(const LatentTensor& start, const HookSet& hooks) const {
    validate_latent(start);
    validate_hooks(hooks);
    Tensor3d x = start.data;
    const int T = total_steps();
    for (int step = 1; step <= T; ++step) {
        const int k = T - step + 1;
        const Tensor3d eps = model_->predict_noise(x, context(k, step), hooks);
        if (!eps.same_shape(x)) throw DimensionError("ddim_sample: noise prediction has the wrong shape");
        const double ab = schedule_.alpha_bar(k), ab_prev = schedule_.alpha_bar(k - 1);
        x.data = std::sqrt(ab_prev) * ((x.data - std::sqrt(1.0 - ab) * eps.data) / std::sqrt(ab)) +
                 std::sqrt(1.0 - ab_prev) * eps.data;
        if (!x.all_finite()) {
            throw NonFiniteError("ddim_sample: non-finite latent at timestep " + std::to_string(k - 1));
        }
    }
    return LatentTensor{std::move(x), start.image_height, start.image_width};
}

void Backbone::validate_locator(const FeatureLocator& locator) const {
    if (locator.timestep < 1 || locator.timestep > total_steps()) {
        throw ConfigError("locator timestep " + std::to_string(locator.timestep) + " outside [1, " +
                          std::to_string(total_steps()) + "]");
    }
    if (std::find(layers_.begin(), layers_.end(), locator.layer) == layers_.end()) {
        throw ConfigError("locator layer '" + locator.layer + "' is not in the candidate layer set");
    }
}

std::vector<FeatureMap> Backbone::extract_features_at(const Image& image, int timestep,
                                                      const std::vector<std::string>& layers,
                                                      std::string source) const {
    for (const auto& l : layers) validate_locator(FeatureLocator{timestep, l});
    const LatentTensor latent = encode_image(image);
    std::mt19937_64 rng(seed_ ^ content_hash(image));
    std::normal_distribution<double> normal(0.0, 1.0);
    Tensor3d noised(latent.data.channels(), latent.data.height, latent.data.width);
    const double ab = schedule_.alpha_bar(timestep);
    for (Index i = 0; i < noised.data.size(); ++i) {
        noised.data.data()[i] = std::sqrt(ab) * latent.data.data.data()[i] + std::sqrt(1.0 - ab) * normal(rng);
    }
    FeatureSink sink;
    model_->predict_noise(noised, context(timestep), {}, &sink);
    std::vector<FeatureMap> maps;
    for (const auto& l : layers) {
        auto it = sink.find(l);
        if (it == sink.end()) throw CheckpointError("checkpoint did not expose layer '" + l + "'");
        if (!it->second.all_finite()) {
            throw NonFiniteError("extract_features: non-finite activations at " + FeatureLocator{timestep, l}.to_string());
        }
        maps.push_back(FeatureMap{FeatureLocator{timestep, l}, it->second, source});
    }
    return maps;
}

FeatureMap Backbone::extract_features(const Image& image, const FeatureLocator& locator, std::string source) const {
    return std::move(extract_features_at(image, locator.timestep, {locator.layer}, std::move(source)).front());
}

AttentionBundle Backbone::capture_attention(const LatentTensor& latent, int timestep) const {
    if (timestep < 1 || timestep > total_steps()) {
        throw ConfigError("capture_attention: timestep " + std::to_string(timestep) + " outside [1, " +
                          std::to_string(total_steps()) + "]");
    }
    validate_latent(latent);
    auto recorder = std::make_shared<RecordingHook>(model_->attention_blocks());
    model_->predict_noise(latent.data, context(timestep), HookSet{recorder});
    AttentionBundle bundle = recorder->bundles().empty() ? AttentionBundle{timestep, {}} : recorder->bundles().front();
    bundle.timestep = timestep;
    bundle.validate();
    return bundle;
}

std::string Backbone::inspect(Index image_height, Index image_width) const {
    const Index f = model_->downsample_factor();
    const Index lh = image_height / f, lw = image_width / f;
    std::ostringstream out;
    out << "checkpoint = " << model_->id() << "\n";
    out << "image_size = " << image_width << "x" << image_height << "\n";
    out << "latent_shape = " << model_->latent_channels() << "x" << lh << "x" << lw << "\n";
    out << "total_steps = " << total_steps() << "\n";
    for (const auto& info : layer_table_) {
        out << "layer." << info.name << ".channels = " << info.channels << "\n";
        out << "layer." << info.name << ".spatial = " << lh / info.downsample << "x" << lw / info.downsample << "\n";
        out << "layer." << info.name << ".attention = "
            << (info.attention_block.empty() ? std::string("none") : info.attention_block) << "\n";
    }
    out << "attention_blocks = " << model_->attention_blocks().size() << "\n";
    return out.str();
}

}  // namespace corrstyle
