#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "corrstyle/config.hpp"
#include "corrstyle/cycle.hpp"
#include "corrstyle/metrics.hpp"

namespace corrstyle {

// The 13 style categories of the evaluation suite.
const std::vector<std::string>& style_taxonomy();

struct ContentEntry {
    std::string id;
    std::filesystem::path path;
};

struct StyleEntry {
    std::string id;
    std::filesystem::path path;
    std::string category;
};

enum class PairingMode { cartesian, explicit_pairs };

struct PairRef {
    std::size_t content = 0;
    std::size_t style = 0;
};

struct DatasetManifest {
    std::string id;
    std::vector<ContentEntry> contents;
    std::vector<StyleEntry> styles;
    PairingMode mode = PairingMode::cartesian;
    std::vector<PairRef> listed;  // explicit mode only

    std::vector<PairRef> pairs() const;
};

// Line-delimited JSON records: {"kind": "content", "id", "path"},
// {"kind": "style", "id", "path", "category"},
// {"kind": "pairing", "mode": "cartesian" | "explicit"} and, in explicit mode,
// {"kind": "pair", "content", "style"}. Paths are relative to the manifest.
// Every problem is collected before the load fails.
DatasetManifest load_manifest(const std::filesystem::path& path);

// Checkpoint and extractors built from one frozen config.
class Session {
public:
    explicit Session(Config config);

    const Config& config() const { return config_; }
    const Backbone& backbone() const { return *backbone_; }
    const PerceptualExtractor& extractor() const { return *extractor_; }
    const PerceptualExtractor& fid_extractor() const { return *fid_extractor_; }

    // Loads an image and applies image.size (square resize when > 0).
    Image load_image(const std::filesystem::path& path) const;

    // Grid search over correspondence.timesteps x correspondence.layers.
    GridSearchResult grid_search(const std::vector<BenchmarkPair>& pairs) const;
    // correspondence.locator as "t,layer", else the cache file when it was
    // written for this checkpoint, else a fresh grid search that fills it.
    FeatureLocator resolve_locator() const;

    CycleSettings cycle_settings(const FeatureLocator& locator) const;
    // Numeric cycle.tau_c / cycle.tau_s, or nullopt when either is "auto".
    std::optional<LossPair> fixed_thresholds() const;

private:
    Config config_;
    std::shared_ptr<const Backbone> backbone_;
    std::shared_ptr<const PerceptualExtractor> extractor_;
    std::shared_ptr<const PerceptualExtractor> fid_extractor_;
};

struct RunRecord {
    std::string content_id, style_id;
    std::string config_hash;
    std::uint64_t seed = 0;
    std::string output;
    int iterations = 0;
    std::string stop_reason;
    double content_loss = 0, style_loss = 0;
    double tau_c = 0, tau_s = 0;
    double duration_seconds = 0;

    std::string to_json() const;
};

struct TransferOutcome {
    Image output;
    CycleState state;
    LossPair thresholds;
};

// One pair through the cycle. Thresholds come from the config or are
// calibrated on this pair.
TransferOutcome transfer(const Session& session, const Image& content, const Image& style,
                         const FeatureLocator& locator, std::optional<LossPair> thresholds = std::nullopt,
                         const StageA* stage_a = nullptr);

// Per-iteration history as structured text; no timing, so replays diff clean.
std::string history_json(const CycleState& state, const LossPair& thresholds);

// Writes `<stem>.png`, `<stem>.history.json` and `<stem>.run.json`.
RunRecord write_transfer(const std::filesystem::path& output_png, const TransferOutcome& outcome,
                         const Session& session, const std::string& content_id, const std::string& style_id,
                         double duration_seconds);

// "<UTC timestamp>-<first 8 hex digits of the config hash>" unless
// pipeline.run_id is set.
std::string make_run_id(const Config& config);

// Produces the stylized image for one pair; may throw to mark it failed.
using Stylizer = std::function<TransferOutcome(std::size_t pair_index, const Image& content, const Image& style)>;

struct EvaluationOptions {
    std::filesystem::path output_dir;  // empty: do not persist images
    bool write_report = true;
};

// Stylizes every pair with `stylizer` on pipeline.workers threads and
// aggregates FID (stylized vs style set), mean LPIPS and mean CFSD (stylized vs
// content) and ArtFID. Failed pairs are excluded and counted.
MetricReport evaluate_pairs(const Session& session, const DatasetManifest& manifest, const Stylizer& stylizer,
                            const EvaluationOptions& options = {});

// Keeps Stage A results per pair so settings that only touch Stage B reuse them.
class StageACache {
public:
    const StageA& get(const Session& session, const DatasetManifest& manifest, const PairRef& pair,
                      const CycleSettings& settings);

private:
    std::mutex mutex_;
    std::map<std::pair<std::size_t, std::size_t>, std::shared_ptr<const StageA>> entries_;
};

// The full method over a manifest. Thresholds are calibrated once per style on
// the first content image when not fixed in the config.
MetricReport run_evaluation(const Session& session, const DatasetManifest& manifest, const FeatureLocator& locator,
                            const EvaluationOptions& options = {}, StageACache* cache = nullptr);

struct AblationRow {
    std::string axis;
    std::string setting;
    MetricReport report;
};

// Axes: w, adain, sobel-gram, iterations, start_step, comparator.
std::vector<std::string> ablation_axes();
// Config overrides of each row of `axis`.
std::vector<std::pair<std::string, std::map<std::string, std::string>>> ablation_settings(const std::string& axis,
                                                                                          const Config& config);

std::vector<AblationRow> run_ablation(const std::string& axis, const Session& session, const DatasetManifest& manifest,
                                      const FeatureLocator& locator, const std::filesystem::path& output_dir = {});

std::string ablation_table_json(const std::vector<AblationRow>& rows);

struct GridLayout {
    int columns = 4;
    Index cell_height = 0;  // 0: height of the first image
    Index cell_width = 0;   // 0: width of the first image
    Index label_height = 12;
};

// Row-major composite; each image is letterboxed into its cell and labelled.
Image compose_grid(const std::vector<Image>& images, const std::vector<std::string>& labels, const GridLayout& layout);
void emit_grid(const std::vector<Image>& images, const std::vector<std::string>& labels, const GridLayout& layout,
               const std::filesystem::path& path);

// Draws `text` in a 5x7 bitmap font; unknown characters render as blanks.
void draw_text(Image& image, Index x, Index y, const std::string& text, double value = 0.0);

}  // namespace corrstyle
