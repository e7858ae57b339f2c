#include "corrstyle/metrics.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <numbers>
#include <sstream>

#include "corrstyle/io.hpp"

namespace corrstyle {

Eigen::VectorXd PerceptualExtractor::lpips_weights(std::size_t layer) const {
    const auto& ls = layers();
    if (layer >= ls.size()) throw ConfigError("lpips_weights: layer index out of range");
    return Eigen::VectorXd::Constant(ls[layer].channels, 1.0 / (2.0 * double(ls.size())));
}

Eigen::VectorXd PerceptualExtractor::embedding(const Image& rgb) const {
    const auto feats = features(rgb);
    Index dims = 0;
    for (const auto& f : feats) dims += 2 * f.channels();
    Eigen::VectorXd out(dims);
    Index at = 0;
    for (const auto& f : feats) {
        for (Index c = 0; c < f.channels(); ++c) {
            const double m = f.data.row(c).mean();
            out(at++) = m;
            out(at++) = std::sqrt((f.data.row(c).array() - m).square().mean());
        }
    }
    return out;
}

std::size_t PerceptualExtractor::layer_index(const std::string& name) const {
    const auto& ls = layers();
    for (std::size_t i = 0; i < ls.size(); ++i) {
        if (ls[i].name == name) return i;
    }
    throw ConfigError("extractor " + id() + " has no layer '" + name + "'");
}

std::vector<Tensor3d> PerceptualExtractor::features(const Image& rgb) const {
    require_rgb(rgb, "perceptual features");
    const Index s = canonical_size();
    return extract(s > 0 ? resize_bilinear(rgb, s, s) : rgb);
}

namespace {

constexpr int kOrientations = 4;
constexpr Index kStages = 5;
constexpr Index kPyramidChannels = 4 * kOrientations + 3;
constexpr double kLumaMean = 0.458;
constexpr double kInputStd = 0.226;

Tensor3d filter5(const Tensor3d& plane, const Eigen::Matrix<double, 5, 5>& k) {
    Tensor3d out(1, plane.height, plane.width);
    for (Index y = 0; y < plane.height; ++y) {
        for (Index x = 0; x < plane.width; ++x) {
            double acc = 0;
            for (int dy = -2; dy <= 2; ++dy) {
                const Index yy = reflect_index(y + dy, plane.height);
                for (int dx = -2; dx <= 2; ++dx) {
                    acc += k(dy + 2, dx + 2) * plane(0, yy, reflect_index(x + dx, plane.width));
                }
            }
            out(0, y, x) = acc;
        }
    }
    return out;
}

Tensor3d box3(const Tensor3d& plane) {
    Eigen::Matrix<double, 5, 5> k = Eigen::Matrix<double, 5, 5>::Zero();
    k.block<3, 3>(1, 1).setConstant(1.0 / 9.0);
    return filter5(plane, k);
}

}  // namespace

OrientedPyramidExtractor::OrientedPyramidExtractor() {
    for (Index s = 0; s < kStages; ++s) {
        layers_.push_back(ExtractorLayer{"conv" + std::to_string(s + 1), kPyramidChannels, Index(1) << s});
    }
    const double sigma = 1.0;
    for (int o = 0; o < kOrientations; ++o) {
        const double theta = std::numbers::pi * double(o) / kOrientations;
        Eigen::Matrix<double, 5, 5> odd, even;
        for (int y = -2; y <= 2; ++y) {
            for (int x = -2; x <= 2; ++x) {
                const double u = x * std::cos(theta) + y * std::sin(theta);
                const double g = std::exp(-(x * x + y * y) / (2 * sigma * sigma));
                odd(y + 2, x + 2) = u * g;
                even(y + 2, x + 2) = (u * u / (sigma * sigma) - 1.0) * g;
            }
        }
        even.array() -= even.mean();
        odd *= 2.0 / odd.cwiseAbs().sum();
        even *= 2.0 / even.cwiseAbs().sum();
        kernels_.push_back(odd);
        kernels_.push_back(even);
    }
}

std::vector<Tensor3d> OrientedPyramidExtractor::extract(const Image& rgb) const {
    require_rgb(rgb, "oriented pyramid");
    if (rgb.height < 1 || rgb.width < 1) throw DimensionError("oriented pyramid: empty image");
    Tensor3d level(3, rgb.height, rgb.width);
    // Centred and scaled with the usual ImageNet statistics.
    const Eigen::RowVectorXd luma = 0.299 * rgb.data.row(0) + 0.587 * rgb.data.row(1) + 0.114 * rgb.data.row(2);
    level.data.row(0) = (luma.array() - kLumaMean) / kInputStd;
    level.data.row(1) = (rgb.data.row(2) - luma) / kInputStd;
    level.data.row(2) = (rgb.data.row(0) - luma) / kInputStd;

    std::vector<Tensor3d> out;
    for (Index s = 0; s < kStages; ++s) {
        if (s > 0) level = resize_bilinear(level, std::max<Index>(1, level.height / 2), std::max<Index>(1, level.width / 2));
        Tensor3d feat(kPyramidChannels, level.height, level.width);
        const Tensor3d luma(Tensor3d::Matrix(level.data.row(0)), level.height, level.width);
        for (std::size_t k = 0; k < kernels_.size(); ++k) {
            const Tensor3d r = filter5(luma, kernels_[k]);
            feat.data.row(Index(2 * k)) = r.data.row(0).cwiseMax(0.0);
            feat.data.row(Index(2 * k + 1)) = (-r.data.row(0)).cwiseMax(0.0);
        }
        for (Index c = 0; c < 3; ++c) {
            const Tensor3d plane(Tensor3d::Matrix(level.data.row(c)), level.height, level.width);
            feat.data.row(4 * kOrientations + c) = box3(plane).data.row(0);
        }
        out.push_back(std::move(feat));
    }
    return out;
}

std::filesystem::path asset_cache_dir() {
    if (const char* env = std::getenv("CORRSTYLE_ASSET_CACHE"); env && *env) return env;
    if (const char* home = std::getenv("HOME"); home && *home) return std::filesystem::path(home) / ".cache" / "corrstyle";
    return std::filesystem::path(".corrstyle-cache");
}

AssetManifest AssetManifest::load(const std::filesystem::path& path, const std::filesystem::path& cache_dir) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open asset manifest " + path.string());
    AssetManifest manifest;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            const auto rec = nlohmann::json::parse(line);
            AssetEntry e;
            const auto name = rec.at("name").get<std::string>();
            e.url = rec.value("url", "");
            e.sha256 = rec.value("sha256", "");
            if (rec.contains("file")) e.path = cache_dir / rec.at("file").get<std::string>();
            manifest.entries[name] = std::move(e);
        } catch (const nlohmann::json::exception& err) {
            throw ValidationError("asset manifest " + path.string() + " line " + std::to_string(lineno) + ": " +
                                  err.what());
        }
    }
    return manifest;
}

const AssetEntry& AssetManifest::verified(const std::string& name) const {
    auto it = entries.find(name);
    if (it == entries.end()) throw CheckpointError("asset '" + name + "' is not listed in the asset manifest");
    const AssetEntry& e = it->second;
    if (e.path.empty()) return e;
    if (!std::filesystem::exists(e.path)) {
        throw CheckpointError("asset '" + name + "' is not cached at " + e.path.string() + " (source: " + e.url + ")");
    }
    const std::string digest = sha256_file(e.path);
    if (!e.sha256.empty() && digest != e.sha256) {
        throw CheckpointError("asset '" + name + "' hash mismatch: expected " + e.sha256 + ", found " + digest);
    }
    return e;
}

std::shared_ptr<const PerceptualExtractor> load_extractor(const std::string& id, const AssetManifest* assets) {
    if (id == OrientedPyramidExtractor::kId) return std::make_shared<OrientedPyramidExtractor>();
    if (assets) assets->verified(id);
    throw CheckpointError("extractor '" + id + "' is not available: this build binds only '" +
                          std::string(OrientedPyramidExtractor::kId) + "'");
}

double lpips(const Image& x, const Image& x0, const PerceptualExtractor& extractor) {
    if (!x.same_shape(x0)) throw DimensionError("lpips: " + shape_string(x) + " vs " + shape_string(x0));
    const auto fa = extractor.features(x);
    const auto fb = extractor.features(x0);
    double total = 0;
    for (std::size_t l = 0; l < fa.size(); ++l) {
        const Eigen::VectorXd w = extractor.lpips_weights(l);
        Eigen::MatrixXd a = fa[l].data, b = fb[l].data;
        const Eigen::RowVectorXd na = a.colwise().norm().array() + 1e-10;
        const Eigen::RowVectorXd nb = b.colwise().norm().array() + 1e-10;
        a.array().rowwise() /= na.array();
        b.array().rowwise() /= nb.array();
        const Eigen::RowVectorXd d = w.transpose() * (a - b).array().square().matrix();
        total += d.mean();
    }
    return total;
}

DistributionStats DistributionStats::from_samples(const Eigen::MatrixXd& samples) {
    if (samples.rows() < 2) throw ValidationError("distribution statistics need at least 2 samples");
    if (samples.cols() < 1) throw DimensionError("distribution statistics need at least one feature");
    DistributionStats s;
    s.count = samples.rows();
    s.mean = samples.colwise().mean().transpose();
    const Eigen::MatrixXd centered = samples.rowwise() - s.mean.transpose();
    s.covariance = (centered.transpose() * centered) / double(samples.rows() - 1);
    s.covariance = 0.5 * (s.covariance + s.covariance.transpose());
    return s;
}

void DistributionStats::validate() const {
    if (count < 2) throw ValidationError("distribution statistics need at least 2 samples");
    if (covariance.rows() != mean.size() || covariance.cols() != mean.size()) {
        throw DimensionError("covariance shape does not match mean length");
    }
    if (!covariance.allFinite() || !mean.allFinite()) throw NonFiniteError("distribution statistics are not finite");
    if ((covariance - covariance.transpose()).cwiseAbs().maxCoeff() > 1e-9 * (1.0 + covariance.cwiseAbs().maxCoeff())) {
        throw ValidationError("covariance is not symmetric");
    }
}

namespace {

constexpr double kPsdTolerance = 1e-6;

// Returns false when an eigensolve fails or a spectrum is too negative.
bool try_trace_sqrt(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, double& result, std::string& why) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> ea(0.5 * (a + a.transpose()));
    if (ea.info() != Eigen::Success) {
        why = "eigendecomposition of the first covariance failed";
        return false;
    }
    const double scale_a = std::max(1.0, ea.eigenvalues().cwiseAbs().maxCoeff());
    if (ea.eigenvalues().minCoeff() < -kPsdTolerance * scale_a) {
        why = "first covariance has eigenvalue " + std::to_string(ea.eigenvalues().minCoeff());
        return false;
    }
    const Eigen::VectorXd root = ea.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    const Eigen::MatrixXd sqrt_a = ea.eigenvectors() * root.asDiagonal() * ea.eigenvectors().transpose();
    Eigen::MatrixXd m = sqrt_a * b * sqrt_a;
    m = 0.5 * (m + m.transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> em(m, Eigen::EigenvaluesOnly);
    if (em.info() != Eigen::Success) {
        why = "eigendecomposition of the covariance product failed";
        return false;
    }
    const double scale_m = std::max(1.0, em.eigenvalues().cwiseAbs().maxCoeff());
    if (em.eigenvalues().minCoeff() < -kPsdTolerance * scale_m) {
        why = "covariance product has eigenvalue " + std::to_string(em.eigenvalues().minCoeff());
        return false;
    }
    result = em.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();
    if (!std::isfinite(result)) {
        why = "non-finite trace";
        return false;
    }
    return true;
}

}  // namespace

double trace_sqrt_product(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
    if (a.rows() != a.cols() || b.rows() != b.cols() || a.rows() != b.rows()) {
        throw DimensionError("trace_sqrt_product: incompatible matrices");
    }
    double result = 0;
    std::string why;
    if (try_trace_sqrt(a, b, result, why)) return result;
    const Eigen::MatrixXd eps = 1e-6 * Eigen::MatrixXd::Identity(a.rows(), a.cols());
    std::string retry_why;
    if (try_trace_sqrt(a + eps, b + eps, result, retry_why)) return result;
    throw NumericalError("matrix square root failed (" + why + "; with 1e-6 diagonal offset: " + retry_why + ")");
}

double fid(const DistributionStats& real, const DistributionStats& generated) {
    real.validate();
    generated.validate();
    if (real.mean.size() != generated.mean.size()) {
        throw DimensionError("fid: feature dimensions " + std::to_string(real.mean.size()) + " and " +
                             std::to_string(generated.mean.size()) + " differ");
    }
    const double d = (real.mean - generated.mean).squaredNorm() + real.covariance.trace() +
                     generated.covariance.trace() - 2.0 * trace_sqrt_product(real.covariance, generated.covariance);
    return std::max(0.0, d);
}

double fid(const Eigen::MatrixXd& real_features, const Eigen::MatrixXd& generated_features) {
    return fid(DistributionStats::from_samples(real_features), DistributionStats::from_samples(generated_features));
}

double artfid(double lpips_value, double fid_value) {
    if (!(lpips_value >= 0) || !(fid_value >= 0)) throw ValidationError("artfid: inputs must be non-negative");
    return (1.0 + lpips_value) * (1.0 + fid_value);
}

namespace {

Eigen::MatrixXd row_log_softmax(Eigen::MatrixXd logits) {
    for (Index i = 0; i < logits.rows(); ++i) {
        auto row = logits.row(i);
        const double m = row.maxCoeff();
        const double lse = m + std::log((row.array() - m).exp().sum());
        row.array() -= lse;
    }
    return logits;
}

}  // namespace

Eigen::MatrixXd self_correlation_softmax(const Tensor3d& features) {
    if (features.empty()) throw DimensionError("self_correlation_softmax: empty features");
    const Eigen::MatrixXd f = features.data;
    return row_log_softmax(f.transpose() * f).array().exp().matrix();
}

double cfsd_from_features(const Tensor3d& content, const Tensor3d& stylized) {
    if (!content.same_shape(stylized)) {
        throw DimensionError("cfsd: feature shapes " + shape_string(content) + " and " + shape_string(stylized));
    }
    if (content.empty()) throw DimensionError("cfsd: empty features");
    const Eigen::MatrixXd fc = content.data, fs = stylized.data;
    const Index n = fc.cols();
    constexpr Index kChunk = 512;
    double total = 0;
    for (Index begin = 0; begin < n; begin += kChunk) {
        const Index count = std::min(kChunk, n - begin);
        const Eigen::MatrixXd lp = row_log_softmax(fc.middleCols(begin, count).transpose() * fc);
        const Eigen::MatrixXd lq = row_log_softmax(fs.middleCols(begin, count).transpose() * fs);
        total += (lp.array().exp() * (lp - lq).array()).sum();
    }
    return std::max(0.0, total / double(n));
}

double cfsd(const Image& content, const Image& stylized, const PerceptualExtractor& extractor,
            const std::string& layer) {
    if (!content.same_shape(stylized)) {
        throw DimensionError("cfsd: " + shape_string(content) + " vs " + shape_string(stylized));
    }
    const std::size_t l = extractor.layer_index(layer);
    return cfsd_from_features(extractor.features(content)[l], extractor.features(stylized)[l]);
}

std::string MetricReport::to_json() const {
    nlohmann::ordered_json doc;
    doc["fid"] = fid;
    doc["lpips"] = lpips;
    doc["artfid"] = artfid;
    doc["cfsd"] = cfsd;
    doc["extractor"] = extractor;
    doc["fid_extractor"] = fid_extractor;
    doc["config_hash"] = config_hash;
    doc["datasets"] = datasets;
    doc["excluded"] = excluded;
    nlohmann::ordered_json rows = nlohmann::ordered_json::array();
    for (const auto& p : pairs) {
        nlohmann::ordered_json r;
        r["content"] = p.content_id;
        r["style"] = p.style_id;
        r["category"] = p.category;
        r["ok"] = p.ok;
        if (p.ok) {
            r["output"] = p.output;
            r["lpips"] = p.lpips;
            r["cfsd"] = p.cfsd;
            r["content_loss"] = p.content_loss;
            r["style_loss"] = p.style_loss;
            r["iterations"] = p.iterations;
            r["stop_reason"] = p.stop_reason;
        } else {
            r["error"] = p.error;
        }
        rows.push_back(r);
    }
    doc["pairs"] = rows;
    nlohmann::ordered_json cfg = nlohmann::ordered_json::object();
    for (const auto& [k, v] : config) cfg[k] = v;
    doc["config"] = cfg;
    return doc.dump(2) + "\n";
}

MetricReport MetricReport::from_json(const std::string& text) {
    try {
        const auto doc = nlohmann::json::parse(text);
        MetricReport r;
        r.fid = doc.at("fid").get<double>();
        r.lpips = doc.at("lpips").get<double>();
        r.artfid = doc.at("artfid").get<double>();
        r.cfsd = doc.at("cfsd").get<double>();
        r.extractor = doc.value("extractor", "");
        r.fid_extractor = doc.value("fid_extractor", "");
        r.config_hash = doc.value("config_hash", "");
        r.datasets = doc.value("datasets", std::vector<std::string>{});
        r.excluded = doc.value("excluded", 0);
        for (const auto& row : doc.at("pairs")) {
            PairMetrics p;
            p.content_id = row.at("content").get<std::string>();
            p.style_id = row.at("style").get<std::string>();
            p.category = row.value("category", "");
            p.ok = row.at("ok").get<bool>();
            if (p.ok) {
                p.output = row.value("output", "");
                p.lpips = row.at("lpips").get<double>();
                p.cfsd = row.at("cfsd").get<double>();
                p.content_loss = row.at("content_loss").get<double>();
                p.style_loss = row.at("style_loss").get<double>();
                p.iterations = row.at("iterations").get<int>();
                p.stop_reason = row.at("stop_reason").get<std::string>();
            } else {
                p.error = row.value("error", "");
            }
            r.pairs.push_back(std::move(p));
        }
        for (const auto& [k, v] : doc.at("config").items()) r.config[k] = v.get<std::string>();
        return r;
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("metric report: ") + e.what());
    }
}

}  // namespace corrstyle
