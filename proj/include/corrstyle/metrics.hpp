#pragma once

#include <Eigen/Dense>

#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "corrstyle/image.hpp"
#include "corrstyle/tensor.hpp"

namespace corrstyle {

struct ExtractorLayer {
    std::string name;
    Index channels = 0;
    Index stride = 1;  // spatial reduction relative to the extractor input
};

// A fixed perceptual feature network.
class PerceptualExtractor {
public:
    virtual ~PerceptualExtractor() = default;

    virtual std::string id() const = 0;
    virtual const std::vector<ExtractorLayer>& layers() const = 0;
    // One (channels, h, w) activation per layer, in layer order.
    virtual std::vector<Tensor3d> extract(const Image& rgb) const = 0;
    // Non-negative per-channel LPIPS weights of one layer.
    virtual Eigen::VectorXd lpips_weights(std::size_t layer) const;
    // Square input size images are resized to; 0 keeps the native size.
    virtual Index canonical_size() const { return 0; }
    // Global descriptor used for FID.
    virtual Eigen::VectorXd embedding(const Image& rgb) const;

    std::size_t layer_index(const std::string& name) const;
    // Resized to canonical_size() when set, then extracted.
    std::vector<Tensor3d> features(const Image& rgb) const;
};

// Oriented-filter pyramid with five stages conv1..conv5 of 19 channels:
// rectified odd and even responses at four orientations on luma, plus
// smoothed luma and two colour-opponent channels.
class OrientedPyramidExtractor : public PerceptualExtractor {
public:
    static constexpr const char* kId = "builtin:oriented-pyramid";

    OrientedPyramidExtractor();

    std::string id() const override { return kId; }
    const std::vector<ExtractorLayer>& layers() const override { return layers_; }
    std::vector<Tensor3d> extract(const Image& rgb) const override;

private:
    std::vector<ExtractorLayer> layers_;
    std::vector<Eigen::Matrix<double, 5, 5>> kernels_;
};

struct AssetEntry {
    std::string url;
    std::string sha256;
    std::filesystem::path path;  // resolved local file, empty for built-ins
};

// extractor name -> asset; one JSON object per line: {"name", "url", "sha256"}.
struct AssetManifest {
    std::map<std::string, AssetEntry> entries;

    static AssetManifest load(const std::filesystem::path& path, const std::filesystem::path& cache_dir);
    // Checks the cached file of `name` against its recorded hash.
    const AssetEntry& verified(const std::string& name) const;
};

// Asset cache directory: $CORRSTYLE_ASSET_CACHE, else ~/.cache/corrstyle.
std::filesystem::path asset_cache_dir();

std::shared_ptr<const PerceptualExtractor> load_extractor(const std::string& id,
                                                          const AssetManifest* assets = nullptr);

// Unit-normalized features, channel-weighted squared difference, spatial
// mean, summed over layers.
double lpips(const Image& x, const Image& x0, const PerceptualExtractor& extractor);

struct DistributionStats {
    Eigen::VectorXd mean;
    Eigen::MatrixXd covariance;
    Index count = 0;

    // Rows are samples; covariance uses the unbiased n - 1 divisor.
    static DistributionStats from_samples(const Eigen::MatrixXd& samples);
    void validate() const;
};

// Trace of the square root of a product of two symmetric PSD matrices, via
// the symmetric form A^1/2 B A^1/2.
double trace_sqrt_product(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b);

double fid(const DistributionStats& real, const DistributionStats& generated);
double fid(const Eigen::MatrixXd& real_features, const Eigen::MatrixXd& generated_features);

double artfid(double lpips_value, double fid_value);

// Row-wise softmax of the spatial self-correlation F^T F.
Eigen::MatrixXd self_correlation_softmax(const Tensor3d& features);

// Mean over rows of KL(S_c || S_cs).
double cfsd_from_features(const Tensor3d& content, const Tensor3d& stylized);
double cfsd(const Image& content, const Image& stylized, const PerceptualExtractor& extractor,
            const std::string& layer = "conv3");

struct PairMetrics {
    std::string content_id, style_id, category;
    std::string output;
    double lpips = 0, cfsd = 0;
    double content_loss = 0, style_loss = 0;
    int iterations = 0;
    std::string stop_reason;
    bool ok = true;
    std::string error;
};

struct MetricReport {
    double fid = 0, lpips = 0, artfid = 1, cfsd = 0;
    std::string extractor, fid_extractor;
    std::string config_hash;
    std::map<std::string, std::string> config;
    std::vector<std::string> datasets;
    std::vector<PairMetrics> pairs;
    int excluded = 0;

    // Recomputes artfid from the stored lpips and fid.
    void finalize() { artfid = corrstyle::artfid(lpips, fid); }
    // Fixed field order; doubles round-trip exactly.
    std::string to_json() const;
    static MetricReport from_json(const std::string& text);
};

}  // namespace corrstyle
