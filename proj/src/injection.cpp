#include "corrstyle/injection.hpp"

#include <cmath>

namespace corrstyle {

void InjectionConfig::validate(int total_steps) const {
    if (!(w >= 0) || !std::isfinite(w)) throw ConfigError("injection.w must be finite and >= 0");
    if (!(gamma > 0 && gamma <= 1)) throw ConfigError("injection.gamma must lie in (0, 1]");
    if (start_step < 1 || start_step > total_steps) {
        throw ConfigError("injection.start_step must lie in [1, " + std::to_string(total_steps) + "]");
    }
    if (target_blocks.empty()) throw ConfigError("injection.blocks must not be empty");
}

AttentionBank make_bank(const std::vector<AttentionBundle>& bundles) {
    AttentionBank bank;
    for (const auto& b : bundles) bank[b.timestep] = b;
    return bank;
}

namespace {

const AttentionRecord& lookup(const AttentionBank& bank, const AttentionSite& site, const char* what) {
    auto it = bank.find(site.timestep);
    if (it == bank.end()) {
        throw ConfigError(std::string(what) + ": no recorded attention at timestep " + std::to_string(site.timestep));
    }
    return it->second.at(site.block);
}

}  // namespace

KvSwapHook::KvSwapHook(std::vector<std::string> blocks, std::shared_ptr<const AttentionBank> style, double gamma)
    : blocks_(std::move(blocks)), style_(std::move(style)), gamma_(gamma) {
    if (!style_) throw ConfigError("kv swap: no style attention bank");
    if (!(gamma_ > 0 && gamma_ <= 1)) throw ConfigError("kv swap: gamma must lie in (0, 1]");
}

bool KvSwapHook::active(const AttentionSite& site) const { return site.step > 0; }

void KvSwapHook::before_softmax(const AttentionSite& site, AttentionTensors& tensors) {
    const AttentionRecord& rec = lookup(*style_, site, "kv swap");
    if (rec.k.cols() != tensors.q.cols() || rec.heads != tensors.heads) {
        throw DimensionError("kv swap: style head layout differs at block " + std::string(site.block));
    }
    tensors.k = rec.k;
    tensors.v = rec.v;
    tensors.temperature = gamma_;
}

CorrespondenceInjectionHook::CorrespondenceInjectionHook(InjectionConfig config, CorrespondenceMap map,
                                                         std::shared_ptr<const AttentionBank> source)
    : config_(std::move(config)), map_(std::move(map)), source_(std::move(source)) {
    if (!source_) throw ConfigError("injection: no source attention bank");
    if (config_.target_blocks.empty()) throw ConfigError("injection.blocks must not be empty");
    map_.validate();
}

bool CorrespondenceInjectionHook::active(const AttentionSite& site) const {
    return site.step > 0 && injection_active(site.step, config_);
}

void CorrespondenceInjectionHook::after_output(const AttentionSite& site, const AttentionTensors& tensors,
                                               TokenMatrix& output) {
    const AttentionRecord& rec = lookup(*source_, site, "injection");
    const CorrespondenceMap map =
        map_.resampled(tensors.grid_height, tensors.grid_width, rec.grid_height, rec.grid_width);
    output = inject_correspondence(output.transpose(), rec.output.transpose(), map, config_.w,
                                   config_.score_modulated)
                 .transpose();
}

}  // namespace corrstyle
