#include "corrstyle/backbone/patch_attention_model.hpp"

#include <cmath>
#include <random>

namespace corrstyle {

namespace {

constexpr Index kLevels = 4;
constexpr std::array<Index, kLevels> kStride{8, 4, 2, 1};
constexpr Index kLatentChannels = 4;
constexpr Index kPatchTaps = 9;
constexpr Index kPatchDim = kLatentChannels * kPatchTaps;
constexpr Index kCenterTap = 4;

constexpr double kLumaScale = 2.0;
constexpr double kCbScale = 1.2;
constexpr double kCrScale = 1.4;
constexpr double kContrastScale = 4.0;

std::string layer_name(Index level) { return "up_blocks." + std::to_string(level); }
std::string block_name(Index level) { return layer_name(level) + ".attn1"; }

// 3x3 neighbourhood descriptors with reflect padding; row tap * 4 + c.
Tensor3d patch_descriptors(const Tensor3d& x) {
    Tensor3d out(kPatchDim, x.height, x.width);
    for (Index dy = -1; dy <= 1; ++dy) {
        for (Index dx = -1; dx <= 1; ++dx) {
            const Index tap = (dy + 1) * 3 + (dx + 1);
            for (Index y = 0; y < x.height; ++y) {
                const Index sy = reflect_index(y + dy, x.height);
                for (Index xx = 0; xx < x.width; ++xx) {
                    const Index sx = reflect_index(xx + dx, x.width);
                    for (Index c = 0; c < kLatentChannels; ++c) {
                        out(tap * kLatentChannels + c, y, xx) = x(c, sy, sx);
                    }
                }
            }
        }
    }
    return out;
}

}  // namespace

PatchAttentionModel::PatchAttentionModel(PatchAttentionConfig config) : config_(config) {
    if (config_.downsample < 1) throw ConfigError("patch-attention model: downsample must be >= 1");
    if (!(config_.bandwidth > 0) || config_.noise_coupling < 0 || config_.relaxation < 0) {
        throw ConfigError("patch-attention model: bandwidth > 0, coupling >= 0, relaxation >= 0 required");
    }
    const Index f = config_.downsample;
    std::mt19937 rng(config_.texture_seed);
    std::uniform_real_distribution<double> uni(-1.0, 1.0);
    texture_tiles_.resize(kTextureTiles);
    for (auto& tile : texture_tiles_) {
        tile.resize(f, f);
        for (Index i = 0; i < f * f; ++i) tile(i / f, i % f) = uni(rng);
        if (f > 1) {
            tile.array() -= tile.mean();
            tile /= std::sqrt(tile.squaredNorm() / double(f * f));
        } else {
            tile.setZero();
        }
    }
}

const Eigen::MatrixXd& PatchAttentionModel::texture_tile(Index cy, Index cx) const {
    std::uint64_t h = std::uint64_t(cy) * 0x9E3779B97F4A7C15ull ^ (std::uint64_t(cx) + 0x632BE59BD9B4E019ull);
    h ^= h >> 31;
    h *= 0xBF58476D1CE4E5B9ull;
    h ^= h >> 29;
    return texture_tiles_[std::size_t(h % texture_tiles_.size())];
}

Tensor3d PatchAttentionModel::encode(const Image& image) const {
    require_rgb(image, "encode");
    const Index f = config_.downsample;
    if (image.height % f != 0 || image.width % f != 0) {
        throw DimensionError("encode: image " + shape_string(image) + " not divisible by " + std::to_string(f));
    }
    const Index h = image.height / f, w = image.width / f;
    Tensor3d latent(kLatentChannels, h, w);
    const double n = double(f * f);
    for (Index cy = 0; cy < h; ++cy) {
        for (Index cx = 0; cx < w; ++cx) {
            double sy = 0, syy = 0, scb = 0, scr = 0;
            for (Index y = cy * f; y < (cy + 1) * f; ++y) {
                for (Index x = cx * f; x < (cx + 1) * f; ++x) {
                    const double r = image(0, y, x), g = image(1, y, x), b = image(2, y, x);
                    const double luma = 0.299 * r + 0.587 * g + 0.114 * b;
                    sy += luma;
                    syy += luma * luma;
                    scb += b - luma;
                    scr += r - luma;
                }
            }
            const double mean = sy / n;
            const double var = std::max(0.0, syy / n - mean * mean);
            latent(0, cy, cx) = kLumaScale * (mean - 0.5);
            latent(1, cy, cx) = kCbScale * scb / n;
            latent(2, cy, cx) = kCrScale * scr / n;
            latent(3, cy, cx) = kContrastScale * std::sqrt(var);
        }
    }
    return latent;
}

Image PatchAttentionModel::decode(const Tensor3d& latent) const {
    if (latent.channels() != kLatentChannels) {
        throw DimensionError("decode: expected 4 latent channels, got " + shape_string(latent));
    }
    const Index f = config_.downsample;
    const Index H = latent.height * f, W = latent.width * f;
    const Tensor3d up = resize_bilinear(latent, H, W);
    // Contrast not already explained by the interpolated luma is re-synthesized
    // from a tile picked per cell out of a fixed bank.
    Eigen::MatrixXd detail = Eigen::MatrixXd::Zero(H, W);
    const double n = double(f * f);
    for (Index cy = 0; cy < latent.height; ++cy) {
        for (Index cx = 0; cx < latent.width; ++cx) {
            double s = 0, ss = 0;
            for (Index y = cy * f; y < (cy + 1) * f; ++y) {
                for (Index x = cx * f; x < (cx + 1) * f; ++x) {
                    const double v = up(0, y, x) / kLumaScale;
                    s += v;
                    ss += v * v;
                }
            }
            const double have = std::max(0.0, ss / n - (s / n) * (s / n));
            const double want = std::max(0.0, latent(3, cy, cx)) / kContrastScale;
            const double amp = std::sqrt(std::max(0.0, want * want - have));
            const Eigen::MatrixXd& tile = texture_tile(cy, cx);
            for (Index y = cy * f; y < (cy + 1) * f; ++y) {
                for (Index x = cx * f; x < (cx + 1) * f; ++x) detail(y, x) = amp * tile(y % f, x % f);
            }
        }
    }
    Image out(3, H, W);
    for (Index y = 0; y < H; ++y) {
        for (Index x = 0; x < W; ++x) {
            const double luma = up(0, y, x) / kLumaScale + 0.5 + detail(y, x);
            const double cb = up(1, y, x) / kCbScale;
            const double cr = up(2, y, x) / kCrScale;
            const double r = luma + cr;
            const double b = luma + cb;
            const double g = (luma - 0.299 * r - 0.114 * b) / 0.587;
            out(0, y, x) = std::clamp(r, 0.0, 1.0);
            out(1, y, x) = std::clamp(g, 0.0, 1.0);
            out(2, y, x) = std::clamp(b, 0.0, 1.0);
        }
    }
    return out;
}

std::vector<LayerInfo> PatchAttentionModel::decoder_layers() const {
    std::vector<LayerInfo> layers;
    for (Index l = 0; l < kLevels; ++l) {
        layers.push_back(LayerInfo{layer_name(l), l == 0 ? kPatchDim : 2 * kPatchDim, kStride[std::size_t(l)],
                                   l == 0 ? std::string{} : block_name(l)});
    }
    return layers;
}

std::vector<std::string> PatchAttentionModel::attention_blocks() const {
    std::vector<std::string> blocks;
    for (Index l = 1; l < kLevels; ++l) blocks.push_back(block_name(l));
    return blocks;
}

Tensor3d PatchAttentionModel::predict_noise(const Tensor3d& latent, const StepContext& ctx,
                                            const HookSet& hooks, FeatureSink* features) const {
    if (latent.channels() != kLatentChannels) {
        throw DimensionError("predict_noise: expected 4 latent channels, got " + shape_string(latent));
    }
    if (latent.height % kStride[0] != 0 || latent.width % kStride[0] != 0) {
        throw DimensionError("predict_noise: latent grid " + shape_string(latent) + " not divisible by 8");
    }
    if (!(ctx.alpha_bar > 0.0 && ctx.alpha_bar <= 1.0)) {
        throw ConfigError("predict_noise: alpha_bar outside (0, 1]");
    }
    const double sqrt_ab = std::sqrt(ctx.alpha_bar);
    const double sigma_bar2 = (1.0 - ctx.alpha_bar) / ctx.alpha_bar;
    Tensor3d clean(latent.data / sqrt_ab, latent.height, latent.width);

    Tensor3d eps(kLatentChannels, latent.height, latent.width);
    Tensor3d context;  // aggregated descriptors handed to the next finer block

    for (Index l = 0; l < kLevels; ++l) {
        const Index stride = kStride[std::size_t(l)];
        const Tensor3d pooled = average_pool(clean, stride);
        const Tensor3d patches = patch_descriptors(pooled);
        if (l == 0) {
            if (features) (*features)[layer_name(l)] = patches;
            context = patches;
            continue;
        }
        const Index n = pooled.pixels();
        const Tensor3d up_context = upsample_nearest(context, pooled.height, pooled.width);
        const Index m = 2 * kPatchDim;
        const Index d = m + 1;
        Eigen::MatrixXd feat(n, m);
        feat.leftCols(kPatchDim) = patches.data.transpose();
        feat.rightCols(kPatchDim) = up_context.data.transpose();

        const double h2 = config_.bandwidth * config_.bandwidth +
                          config_.noise_coupling * 2.0 * sigma_bar2 / double(stride * stride);
        const double a2 = std::sqrt(double(d)) / (double(m) * h2);
        const double a = std::sqrt(a2);

        AttentionTensors t;
        t.heads = 1;
        t.grid_height = pooled.height;
        t.grid_width = pooled.width;
        t.q.resize(n, d);
        t.k.resize(n, d);
        t.v.resize(n, d);
        t.q.leftCols(m) = a * feat;
        t.q.col(m).setOnes();
        t.k.leftCols(m) = a * feat;
        t.k.col(m) = -0.5 * a2 * feat.rowwise().squaredNorm();
        t.v.leftCols(m) = feat;
        t.v.col(m).setOnes();

        const std::string block = block_name(l);
        const AttentionSite site{block, ctx.timestep, ctx.step};
        std::vector<AttentionHook*> active;
        for (const auto& hook : hooks) {
            if (!hook) continue;
            const auto targets = hook->blocks();
            if (std::find(targets.begin(), targets.end(), block) != targets.end() && hook->active(site)) {
                active.push_back(hook.get());
            }
        }
        for (auto* hook : active) hook->before_softmax(site, t);
        TokenMatrix out = multi_head_attention(t.q, t.k, t.v, t.heads, t.temperature);
        for (auto* hook : active) hook->after_output(site, t, out);
        if (out.rows() != n || out.cols() != d) {
            throw DimensionError("hook changed the output shape of " + block);
        }

        Tensor3d aggregated(Tensor3d::Matrix(out.leftCols(m).transpose()), pooled.height, pooled.width);
        if (features) (*features)[layer_name(l)] = aggregated;
        context = Tensor3d(aggregated.data.topRows(kPatchDim), pooled.height, pooled.width);

        Tensor3d residual(kLatentChannels, pooled.height, pooled.width);
        residual.data = pooled.data - aggregated.data.middleRows(kCenterTap * kLatentChannels, kLatentChannels);
        const Tensor3d up = resize_bilinear(residual, latent.height, latent.width);
        eps.data += config_.level_weights[std::size_t(l - 1)] * up.data;
    }
    eps.data *= config_.relaxation * sqrt_ab;
    return eps;
}

std::shared_ptr<const LatentDiffusionModel> load_checkpoint(const std::string& id,
                                                             const std::map<std::string, std::string>& options) {
    if (id == PatchAttentionModel::kId) {
        PatchAttentionConfig cfg;
        auto number = [&](const char* key, double& target) {
            if (auto it = options.find(key); it != options.end()) target = std::stod(it->second);
        };
        double downsample = double(cfg.downsample);
        number("downsample", downsample);
        cfg.downsample = Index(downsample);
        number("bandwidth", cfg.bandwidth);
        number("noise_coupling", cfg.noise_coupling);
        number("relaxation", cfg.relaxation);
        return std::make_shared<PatchAttentionModel>(cfg);
    }
    throw CheckpointError("checkpoint '" + id + "' is not available: this build binds only '" +
                          std::string(PatchAttentionModel::kId) + "'");
}

}  // namespace corrstyle
