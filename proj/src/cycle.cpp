#include "corrstyle/cycle.hpp"

#include <functional>

#include "corrstyle/losses.hpp"

namespace corrstyle {

std::string to_string(Comparator c) {
    return c == Comparator::paper_as_written ? "paper-as-written" : "conventional";
}

std::string to_string(StopReason r) {
    switch (r) {
        case StopReason::threshold: return "threshold";
        case StopReason::max_iters: return "max_iters";
        default: return "none";
    }
}

Comparator parse_comparator(const std::string& text) {
    if (text == "paper-as-written" || text == "paper") return Comparator::paper_as_written;
    if (text == "conventional") return Comparator::conventional;
    throw ConfigError("cycle.comparator must be 'paper-as-written' or 'conventional', got '" + text + "'");
}

void CycleConfig::validate() const {
    if (max_iters < 1) throw ConfigError("cycle.max_iters must be >= 1");
    if (!std::isfinite(tau_c) || !std::isfinite(tau_s) || tau_c < 0 || tau_s < 0) {
        throw ConfigError("cycle thresholds must be finite and >= 0");
    }
}

StopDecision should_stop(double content_loss, double style_loss, const CycleConfig& config, int z) {
    if (z >= config.max_iters) return {true, StopReason::max_iters};
    if (!config.adaptive) return {false, StopReason::none};
    const bool content_ok = !config.content_criterion || (config.comparator == Comparator::paper_as_written
                                                               ? content_loss > config.tau_c
                                                               : content_loss < config.tau_c);
    const bool style_ok = !config.style_criterion || style_loss < config.tau_s;
    if (content_ok && style_ok) return {true, StopReason::threshold};
    return {false, StopReason::none};
}

LatentTensor adain(const LatentTensor& content, const LatentTensor& style) {
    return LatentTensor{adain(content.data, style.data), content.image_height, content.image_width};
}

namespace {

template <typename Fn>
auto stage(const std::string& name, int z, Fn&& fn) -> decltype(fn()) {
    const std::string where = z > 0 ? name + " (iteration " + std::to_string(z) + ")" : name;
    try {
        return fn();
    } catch (const ValidationError& e) {
        throw ValidationError(where + ": " + e.what());
    } catch (const NonFiniteError& e) {
        throw NonFiniteError(where + ": " + e.what());
    } catch (const std::exception& e) {
        throw Error(where + ": " + e.what());
    }
}

std::vector<std::string> all_blocks(const Backbone& backbone, const std::vector<std::string>& blocks) {
    return blocks.empty() ? backbone.model().attention_blocks() : blocks;
}

}  // namespace

AttentionBank capture_trajectory(const Backbone& backbone, const std::vector<LatentTensor>& trajectory) {
    AttentionBank bank;
    for (int k = 1; k < int(trajectory.size()); ++k) {
        bank[k] = backbone.capture_attention(trajectory[std::size_t(k)], k);
    }
    return bank;
}

namespace {

Image reverse_from(const Backbone& backbone, const std::vector<LatentTensor>& style_trajectory,
                   std::shared_ptr<const AttentionBank> content_bank, double gamma,
                   const std::vector<std::string>& blocks, AttentionBank* recorded) {
    auto swap = std::make_shared<KvSwapHook>(blocks, std::move(content_bank), gamma);
    HookSet hooks{swap};
    std::shared_ptr<RecordingHook> recorder;
    if (recorded) {
        recorder = std::make_shared<RecordingHook>(blocks, false);
        hooks.push_back(recorder);
    }
    const LatentTensor out = backbone.ddim_sample(style_trajectory.back(), hooks);
    if (recorded) *recorded = make_bank(recorder->bundles());
    return backbone.decode_latent(out);
}

}  // namespace

Image reverse_stylize(const Backbone& backbone, const Image& content, const Image& style, double gamma,
                      const std::vector<std::string>& blocks, AttentionBank* recorded) {
    const auto traj_c = backbone.ddim_invert(backbone.encode_image(content));
    const auto traj_s = backbone.ddim_invert(backbone.encode_image(style));
    auto bank = std::make_shared<const AttentionBank>(capture_trajectory(backbone, traj_c));
    return reverse_from(backbone, traj_s, bank, gamma, all_blocks(backbone, blocks), recorded);
}

StageA run_stage_a(const Backbone& backbone, const Image& content, const Image& style, const CycleSettings& settings) {
    StageA a;
    const auto blocks = all_blocks(backbone, settings.swap_blocks);
    stage("stage A: inversion", 0, [&] {
        a.content_trajectory = backbone.ddim_invert(backbone.encode_image(content));
        a.style_trajectory = backbone.ddim_invert(backbone.encode_image(style));
        return 0;
    });
    stage("stage A: attention capture", 0, [&] {
        a.content_bank = std::make_shared<const AttentionBank>(capture_trajectory(backbone, a.content_trajectory));
        a.style_bank = std::make_shared<const AttentionBank>(capture_trajectory(backbone, a.style_trajectory));
        return 0;
    });
    stage("stage A: reverse stylization", 0, [&] {
        a.reverse_stylized =
            reverse_from(backbone, a.style_trajectory, a.content_bank, settings.injection.gamma, blocks, nullptr);
        return 0;
    });
    stage("stage A: correspondence", 0, [&] {
        backbone.validate_locator(settings.locator);
        const FeatureMap fc = backbone.extract_features(content, settings.locator, "content");
        const FeatureMap fs = backbone.extract_features(a.reverse_stylized, settings.locator, "reverse-stylized");
        a.map = dense_match(fc, fs);
        return 0;
    });
    return a;
}

LossPair evaluate_losses(const Image& generated, const Image& content, const Image& style,
                         const PerceptualExtractor& extractor, const CycleSettings& settings) {
    LossPair out;
    out.content = content_loss(generated, content);
    const auto fg = extractor.features(generated);
    const auto fs = extractor.features(style);
    std::vector<Tensor3d> gen, sty;
    for (const auto& name : settings.style_layers) {
        const std::size_t l = extractor.layer_index(name);
        gen.push_back(fg[l]);
        sty.push_back(fs[l]);
    }
    out.style = style_loss(gen, sty, settings.gram_normalize);
    return out;
}

CycleResult run_cycle(const Backbone& backbone, const PerceptualExtractor& extractor, const Image& content,
                      const Image& style, const CycleSettings& settings, const StageA* precomputed) {
    settings.cycle.validate();
    settings.injection.validate(backbone.total_steps());
    backbone.validate_hooks(HookSet{std::make_shared<RecordingHook>(settings.injection.target_blocks)});

    StageA local;
    if (!precomputed) {
        local = run_stage_a(backbone, content, style, settings);
        precomputed = &local;
    }
    const StageA& a = *precomputed;
    const auto blocks = all_blocks(backbone, settings.swap_blocks);

    CycleResult result;
    CycleState& state = result.state;
    std::vector<LatentTensor> trajectory = a.content_trajectory;
    for (int z = 1; z <= settings.cycle.max_iters; ++z) {
        if (z > 1) {
            trajectory = stage("stage B: inversion", z, [&] {
                return backbone.ddim_invert(backbone.encode_image(state.current_output));
            });
        }
        LatentTensor start = trajectory.back();
        if (settings.cycle.adain_enabled) {
            start = stage("stage B: adain", z, [&] { return adain(start, a.style_trajectory.back()); });
        }
        state.current_output = stage("stage B: sampling", z, [&] {
            HookSet hooks{std::make_shared<KvSwapHook>(blocks, a.style_bank, settings.injection.gamma),
                          std::make_shared<CorrespondenceInjectionHook>(settings.injection, a.map, a.style_bank)};
            return backbone.decode_latent(backbone.ddim_sample(start, hooks));
        });
        const LossPair losses = stage("stage B: losses", z, [&] {
            return evaluate_losses(state.current_output, content, style, extractor, settings);
        });
        if (!std::isfinite(losses.content) || !std::isfinite(losses.style)) {
            throw NonFiniteError("stage B: losses (iteration " + std::to_string(z) + "): non-finite loss");
        }
        state.z = z;
        state.content_loss = losses.content;
        state.style_loss = losses.style;
        state.history.push_back(CycleRecord{z, losses.content, losses.style});
        const StopDecision d = should_stop(losses.content, losses.style, settings.cycle, z);
        if (d.stop) {
            state.stop_reason = d.reason;
            break;
        }
    }
    result.output = state.current_output;
    return result;
}

LossPair calibrate_thresholds(const Backbone& backbone, const PerceptualExtractor& extractor, const Image& content,
                              const Image& style, const CycleSettings& settings, const StageA* precomputed) {
    CycleSettings fixed = settings;
    fixed.cycle.adaptive = false;
    fixed.cycle.max_iters = 3;
    fixed.cycle.tau_c = fixed.cycle.tau_s = 0;
    const CycleResult r = run_cycle(backbone, extractor, content, style, fixed, precomputed);
    return LossPair{r.state.history[2].content_loss, r.state.history[2].style_loss};
}

std::vector<std::string> default_injection_blocks(const Backbone& backbone, const std::string& layer) {
    const LayerInfo& info = backbone.layer_info(layer);
    if (!info.attention_block.empty()) return {info.attention_block};
    return backbone.model().attention_blocks();
}

}  // namespace corrstyle
