#include "corrstyle/backbone/attention.hpp"

namespace corrstyle {

void AttentionBundle::validate() const {
    for (const auto& r : records) {
        if (r.head_dim <= 0) throw DimensionError("attention record " + r.block + ": head_dim must be > 0");
        const Index width = r.head_dim * r.heads;
        if (r.q.cols() != width || r.k.cols() != width || r.v.cols() != width) {
            throw DimensionError("attention record " + r.block + ": Q/K/V head dimensions disagree");
        }
        if (r.k.rows() != r.v.rows()) {
            throw DimensionError("attention record " + r.block + ": K/V token counts disagree");
        }
        if (r.q.rows() != r.grid_height * r.grid_width) {
            throw DimensionError("attention record " + r.block + ": query tokens do not fill the grid");
        }
    }
}

void RecordingHook::after_output(const AttentionSite& site, const AttentionTensors& tensors,
                                 TokenMatrix& output) {
    if (bundles_.empty() || bundles_.back().timestep != site.timestep) {
        bundles_.push_back(AttentionBundle{site.timestep, {}});
    }
    AttentionRecord rec;
    rec.block = std::string(site.block);
    rec.heads = tensors.heads;
    rec.head_dim = tensors.q.cols() / tensors.heads;
    rec.grid_height = tensors.grid_height;
    rec.grid_width = tensors.grid_width;
    if (keep_inputs_) {
        rec.q = tensors.q;
        rec.k = tensors.k;
        rec.v = tensors.v;
    }
    rec.output = output;
    bundles_.back().records.push_back(std::move(rec));
}

const AttentionBundle* RecordingHook::at_timestep(int timestep) const {
    for (const auto& b : bundles_) {
        if (b.timestep == timestep) return &b;
    }
    return nullptr;
}

}  // namespace corrstyle
