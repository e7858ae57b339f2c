#pragma once

#include <memory>
#include <string>
#include <vector>

#include "corrstyle/backbone/backbone.hpp"
#include "corrstyle/metrics.hpp"
#include "oracles.hpp"

namespace testing {

inline std::shared_ptr<const corrstyle::Backbone> default_backbone(int steps = 50, std::uint64_t seed = 0) {
    return std::make_shared<const corrstyle::Backbone>(
        corrstyle::load_checkpoint("builtin:patch-attention-ldm"),
        corrstyle::DiffusionSchedule::scaled_linear(steps), seed);
}

inline const corrstyle::PerceptualExtractor& extractor() {
    static const auto ex = corrstyle::load_extractor("builtin:oriented-pyramid");
    return *ex;
}

inline std::vector<std::string> content_names() { return {"boat", "flower", "house", "mountains", "still_life"}; }
inline std::vector<std::string> style_names() { return {"dots", "facets", "halftone", "ink", "swirls"}; }

inline corrstyle::Image content(const std::string& name) {
    return corrstyle::load_png(oracle::fixtures() / "content" / (name + ".png"));
}
inline corrstyle::Image style(const std::string& name) {
    return corrstyle::load_png(oracle::fixtures() / "style" / (name + ".png"));
}

}  // namespace testing
