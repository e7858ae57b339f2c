#pragma once

#include <cmath>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "corrstyle/backbone/backbone.hpp"
#include "corrstyle/correspondence.hpp"
#include "corrstyle/injection.hpp"
#include "corrstyle/metrics.hpp"

namespace corrstyle {

enum class Comparator { paper_as_written, conventional };
enum class StopReason { none, threshold, max_iters };

std::string to_string(Comparator c);
std::string to_string(StopReason r);
Comparator parse_comparator(const std::string& text);

struct CycleConfig {
    double tau_c = 0;
    double tau_s = 0;
    int max_iters = 5;
    Comparator comparator = Comparator::paper_as_written;
    bool adain_enabled = true;
    // A disabled criterion is treated as satisfied.
    bool content_criterion = true;
    bool style_criterion = true;
    // When false only max_iters ends the cycle.
    bool adaptive = true;

    void validate() const;
};

struct CycleRecord {
    int z = 0;
    double content_loss = 0;
    double style_loss = 0;
};

struct CycleState {
    int z = 0;
    double content_loss = 0;
    double style_loss = 0;
    Image current_output;
    std::vector<CycleRecord> history;
    StopReason stop_reason = StopReason::none;
};

struct StopDecision {
    bool stop = false;
    StopReason reason = StopReason::none;
};

StopDecision should_stop(double content_loss, double style_loss, const CycleConfig& config, int z);

// Per channel sigma(s) * (c - mu(c)) / sigma(c) + mu(s) with population
// statistics. Channels with sigma(c) <= eps become mu(s).
template <typename Scalar>
Tensor3<Scalar> adain(const Tensor3<Scalar>& content, const Tensor3<Scalar>& style, Scalar eps = Scalar(1e-5)) {
    if (content.channels() != style.channels()) {
        throw DimensionError("adain: channel counts " + std::to_string(content.channels()) + " and " +
                             std::to_string(style.channels()) + " differ");
    }
    if (content.empty() || style.empty()) throw DimensionError("adain: empty tensor");
    Tensor3<Scalar> out(content.channels(), content.height, content.width);
    for (Index c = 0; c < content.channels(); ++c) {
        const Scalar mc = content.data.row(c).mean();
        const Scalar ms = style.data.row(c).mean();
        const Scalar sc = std::sqrt((content.data.row(c).array() - mc).square().mean());
        const Scalar ss = std::sqrt((style.data.row(c).array() - ms).square().mean());
        if (sc <= eps) {
            out.data.row(c).setConstant(ms);
        } else {
            out.data.row(c) = ((content.data.row(c).array() - mc) * (ss / sc) + ms).matrix();
        }
    }
    return out;
}

LatentTensor adain(const LatentTensor& content, const LatentTensor& style);

// Everything run_cycle needs besides the two images.
struct CycleSettings {
    FeatureLocator locator;
    InjectionConfig injection;
    CycleConfig cycle;
    std::vector<std::string> swap_blocks;  // blocks receiving KV swap; empty = all
    std::vector<std::string> style_layers{"conv1", "conv2", "conv3", "conv4", "conv5"};
    bool gram_normalize = true;
};

// Inversion trajectories and attention captured once per pair.
struct StageA {
    std::vector<LatentTensor> content_trajectory;
    std::vector<LatentTensor> style_trajectory;
    std::shared_ptr<const AttentionBank> content_bank;
    // Also the injection source: attn[map(p)] reads the style stream.
    std::shared_ptr<const AttentionBank> style_bank;
    Image reverse_stylized;
    CorrespondenceMap map;
};

// Captures every attention block along a trajectory, one bundle per timestep.
AttentionBank capture_trajectory(const Backbone& backbone, const std::vector<LatentTensor>& trajectory);

// Inverts the style image and samples it with K, V taken from the content
// trajectory. `recorded` receives the attention outputs of that stream.
Image reverse_stylize(const Backbone& backbone, const Image& content, const Image& style, double gamma,
                      const std::vector<std::string>& blocks = {}, AttentionBank* recorded = nullptr);

StageA run_stage_a(const Backbone& backbone, const Image& content, const Image& style, const CycleSettings& settings);

struct CycleResult {
    Image output;
    CycleState state;
};

// Losses of one candidate against the pair.
struct LossPair {
    double content = 0;
    double style = 0;
};

LossPair evaluate_losses(const Image& generated, const Image& content, const Image& style,
                         const PerceptualExtractor& extractor, const CycleSettings& settings);

CycleResult run_cycle(const Backbone& backbone, const PerceptualExtractor& extractor, const Image& content,
                      const Image& style, const CycleSettings& settings, const StageA* precomputed = nullptr);

// Runs three fixed iterations and returns the z = 3 losses as (tau_c, tau_s).
LossPair calibrate_thresholds(const Backbone& backbone, const PerceptualExtractor& extractor, const Image& content,
                              const Image& style, const CycleSettings& settings, const StageA* precomputed = nullptr);

// Blocks at the resolution of `layer`, or every attention block when the
// layer has none.
std::vector<std::string> default_injection_blocks(const Backbone& backbone, const std::string& layer);

}  // namespace corrstyle
