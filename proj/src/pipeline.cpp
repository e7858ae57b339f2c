#include "corrstyle/pipeline.hpp"

#include <json.hpp>

#include <atomic>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>
#include <thread>

#include "corrstyle/backbone/patch_attention_model.hpp"
#include "corrstyle/io.hpp"

namespace corrstyle {

using nlohmann::json;
using nlohmann::ordered_json;

const std::vector<std::string>& style_taxonomy() {
    static const std::vector<std::string> kStyles = {
        "Oil painting", "Kids' illustration", "Watercolor", "Ghibli",    "Landscape woodblock printing",
        "Chinese Ink",  "Sketch",             "Pop art",    "Impressionism", "Cubism",
        "Cyberpunk",    "Pointillism",        "Crayon",
    };
    return kStyles;
}

std::vector<PairRef> DatasetManifest::pairs() const {
    if (mode == PairingMode::explicit_pairs) return listed;
    std::vector<PairRef> out;
    for (std::size_t c = 0; c < contents.size(); ++c) {
        for (std::size_t s = 0; s < styles.size(); ++s) out.push_back(PairRef{c, s});
    }
    return out;
}

DatasetManifest load_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open manifest " + path.string());
    const auto base = path.parent_path();
    DatasetManifest m;
    m.id = path.stem().string();
    std::vector<std::string> errors;
    std::vector<std::pair<std::string, std::string>> listed;
    std::set<std::string> content_ids, style_ids;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const std::string where = "line " + std::to_string(lineno) + ": ";
        try {
            const json rec = json::parse(line);
            const std::string kind = rec.at("kind").get<std::string>();
            if (kind == "content" || kind == "style") {
                const std::string id = rec.at("id").get<std::string>();
                const auto file = base / rec.at("path").get<std::string>();
                if (!std::filesystem::exists(file)) errors.push_back(where + "missing file " + file.string());
                if (kind == "content") {
                    if (!content_ids.insert(id).second) errors.push_back(where + "duplicate content id '" + id + "'");
                    m.contents.push_back(ContentEntry{id, file});
                } else {
                    const std::string category = rec.at("category").get<std::string>();
                    const auto& tax = style_taxonomy();
                    if (std::find(tax.begin(), tax.end(), category) == tax.end()) {
                        errors.push_back(where + "style category '" + category + "' is not in the taxonomy");
                    }
                    if (!style_ids.insert(id).second) errors.push_back(where + "duplicate style id '" + id + "'");
                    m.styles.push_back(StyleEntry{id, file, category});
                }
            } else if (kind == "pairing") {
                const std::string mode = rec.at("mode").get<std::string>();
                if (mode == "cartesian") {
                    m.mode = PairingMode::cartesian;
                } else if (mode == "explicit") {
                    m.mode = PairingMode::explicit_pairs;
                } else {
                    errors.push_back(where + "unknown pairing mode '" + mode + "'");
                }
            } else if (kind == "pair") {
                listed.emplace_back(rec.at("content").get<std::string>(), rec.at("style").get<std::string>());
            } else if (kind == "dataset") {
                m.id = rec.at("id").get<std::string>();
            } else {
                errors.push_back(where + "unknown record kind '" + kind + "'");
            }
        } catch (const json::exception& e) {
            errors.push_back(where + e.what());
        }
    }
    if (m.contents.empty()) errors.push_back("no content entries");
    if (m.styles.empty()) errors.push_back("no style entries");
    if (m.mode == PairingMode::explicit_pairs) {
        auto index_of = [](const auto& entries, const std::string& id) -> std::optional<std::size_t> {
            for (std::size_t i = 0; i < entries.size(); ++i) {
                if (entries[i].id == id) return i;
            }
            return std::nullopt;
        };
        if (listed.empty()) errors.push_back("explicit pairing mode without pair records");
        for (const auto& [c, s] : listed) {
            const auto ci = index_of(m.contents, c);
            const auto si = index_of(m.styles, s);
            if (!ci) errors.push_back("pair references unknown content '" + c + "'");
            if (!si) errors.push_back("pair references unknown style '" + s + "'");
            if (ci && si) m.listed.push_back(PairRef{*ci, *si});
        }
    } else if (!listed.empty()) {
        errors.push_back("pair records require {\"kind\": \"pairing\", \"mode\": \"explicit\"}");
    }
    if (!errors.empty()) {
        std::ostringstream msg;
        msg << "manifest " << path.string() << " rejected with " << errors.size() << " error(s)";
        for (const auto& e : errors) msg << "\n  " << e;
        throw ValidationError(msg.str());
    }
    return m;
}

Session::Session(Config config) : config_(std::move(config)) {
    const auto schedule = DiffusionSchedule::scaled_linear(config_.integer("backbone.total_steps"),
                                                           config_.number("backbone.beta_start"),
                                                           config_.number("backbone.beta_end"),
                                                           config_.integer("backbone.train_steps"));
    const auto model = load_checkpoint(config_.get("backbone.checkpoint"), config_.section("backbone.option."));
    std::vector<std::string> layers;
    if (config_.get("correspondence.layers") != "all") layers = config_.list("correspondence.layers");
    std::uint64_t seed = 0;
    try {
        seed = std::stoull(config_.get("seed"));
    } catch (const std::exception&) {
        throw ConfigError("seed must be a non-negative integer");
    }
    backbone_ = std::make_shared<const Backbone>(model, schedule, seed, layers);

    std::optional<AssetManifest> assets;
    if (const auto& p = config_.get("metrics.assets"); !p.empty()) assets = AssetManifest::load(p, asset_cache_dir());
    extractor_ = load_extractor(config_.get("metrics.extractor"), assets ? &*assets : nullptr);
    fid_extractor_ = config_.get("metrics.fid_extractor") == config_.get("metrics.extractor")
                         ? extractor_
                         : load_extractor(config_.get("metrics.fid_extractor"), assets ? &*assets : nullptr);
    if (config_.integer("image.size") < 0) throw ConfigError("image.size must be >= 0");
    if (config_.integer("pipeline.workers") < 1) throw ConfigError("pipeline.workers must be >= 1");
    for (const auto& l : config_.list("losses.style_layers")) extractor_->layer_index(l);
    extractor_->layer_index(config_.get("metrics.cfsd_layer"));
    parse_comparator(config_.get("cycle.comparator"));

    InjectionConfig inj;
    inj.w = config_.number("injection.w");
    inj.gamma = config_.number("injection.gamma");
    inj.start_step = config_.integer("injection.start_step");
    inj.target_blocks = {"*"};
    inj.validate(backbone_->total_steps());
    CycleConfig cyc;
    cyc.max_iters = config_.integer("cycle.max_iters");
    if (const auto t = fixed_thresholds()) {
        cyc.tau_c = t->content;
        cyc.tau_s = t->style;
    }
    cyc.validate();
}

Image Session::load_image(const std::filesystem::path& path) const {
    Image im = load_png(path);
    if (im.channels() == 1) {
        Image rgb(3, im.height, im.width);
        for (Index c = 0; c < 3; ++c) rgb.data.row(c) = im.data.row(0);
        im = std::move(rgb);
    }
    if (im.channels() == 4) im.data.conservativeResize(3, Eigen::NoChange);
    const Index size = config_.integer("image.size");
    if (size > 0 && (im.height != size || im.width != size)) {
        im = resize_bilinear(im, size, size);
        im.data = im.data.cwiseMax(0.0).cwiseMin(1.0);
    }
    return im;
}

GridSearchResult Session::grid_search(const std::vector<BenchmarkPair>& pairs) const {
    std::vector<BenchmarkPair> resized = pairs;
    const Index size = config_.integer("image.size");
    if (size > 0) {
        for (auto& p : resized) {
            for (auto& kp : p.keypoints) {
                kp.source.x *= double(size) / double(p.source_width);
                kp.source.y *= double(size) / double(p.source_height);
                kp.target.x *= double(size) / double(p.target_width);
                kp.target.y *= double(size) / double(p.target_height);
            }
            p.source_height = p.source_width = p.target_height = p.target_width = size;
        }
    }
    const Backbone& bb = *backbone_;
    FeaturePairSource source = [this, &bb, &resized](std::size_t index, int t, const std::vector<std::string>& layers) {
        const BenchmarkPair& p = resized.at(index);
        auto fs = bb.extract_features_at(load_image(p.source_path), t, layers, p.id + ":source");
        auto ft = bb.extract_features_at(load_image(p.target_path), t, layers, p.id + ":target");
        std::vector<std::pair<FeatureMap, FeatureMap>> out;
        for (std::size_t i = 0; i < layers.size(); ++i) out.emplace_back(std::move(fs[i]), std::move(ft[i]));
        return out;
    };
    return corrstyle::grid_search(resized, source, config_.integers("correspondence.timesteps"),
                                  bb.candidate_layers(), config_.number("correspondence.alpha"));
}

FeatureLocator Session::resolve_locator() const {
    const std::string fixed = config_.get("correspondence.locator");
    if (fixed != "auto") {
        const auto comma = fixed.find(',');
        if (comma == std::string::npos) throw ConfigError("correspondence.locator must be 'auto' or 't,layer'");
        FeatureLocator loc;
        try {
            loc.timestep = std::stoi(fixed.substr(0, comma));
        } catch (const std::exception&) {
            throw ConfigError("correspondence.locator timestep is not an integer");
        }
        loc.layer = fixed.substr(comma + 1);
        backbone_->validate_locator(loc);
        return loc;
    }
    const std::filesystem::path cache_path = config_.get("correspondence.cache");
    const double alpha = config_.number("correspondence.alpha");
    std::set<FeatureLocator> cells;
    for (int t : config_.integers("correspondence.timesteps")) {
        for (const auto& l : backbone_->candidate_layers()) cells.insert(FeatureLocator{t, l});
    }
    if (std::filesystem::exists(cache_path)) {
        const LocatorCache cache = load_locator_cache(cache_path);
        std::set<FeatureLocator> cached(cache.result.missing);
        for (const auto& [loc, m] : cache.result.scores) cached.insert(loc);
        if (cache.checkpoint == backbone_->model().id() && cache.alpha == alpha && cached == cells) {
            backbone_->validate_locator(cache.best);
            return cache.best;
        }
    }
    const auto pairs = load_keypoint_manifest(config_.get("correspondence.keypoints"));
    const GridSearchResult result = grid_search(pairs);
    save_locator_cache(cache_path, LocatorCache{backbone_->model().id(), result.best, alpha, result});
    return result.best;
}

CycleSettings Session::cycle_settings(const FeatureLocator& locator) const {
    CycleSettings s;
    s.locator = locator;
    s.injection.w = config_.number("injection.w");
    s.injection.gamma = config_.number("injection.gamma");
    s.injection.start_step = config_.integer("injection.start_step");
    s.injection.score_modulated = config_.flag("injection.score_modulated");
    s.injection.target_blocks = config_.get("injection.blocks") == "auto"
                                    ? default_injection_blocks(*backbone_, locator.layer)
                                    : config_.list("injection.blocks");
    if (config_.get("injection.swap_blocks") != "all") s.swap_blocks = config_.list("injection.swap_blocks");
    s.cycle.max_iters = config_.integer("cycle.max_iters");
    s.cycle.comparator = parse_comparator(config_.get("cycle.comparator"));
    s.cycle.adain_enabled = config_.flag("cycle.adain");
    s.cycle.adaptive = config_.flag("cycle.adaptive");
    s.cycle.content_criterion = config_.flag("cycle.content_criterion");
    s.cycle.style_criterion = config_.flag("cycle.style_criterion");
    s.style_layers = config_.list("losses.style_layers");
    s.gram_normalize = config_.flag("losses.gram_normalize");
    s.injection.validate(backbone_->total_steps());
    HookSet probe{std::make_shared<RecordingHook>(s.injection.target_blocks)};
    if (!s.swap_blocks.empty()) probe.push_back(std::make_shared<RecordingHook>(s.swap_blocks));
    backbone_->validate_hooks(probe);
    return s;
}

std::optional<LossPair> Session::fixed_thresholds() const {
    if (config_.get("cycle.tau_c") == "auto" || config_.get("cycle.tau_s") == "auto") return std::nullopt;
    return LossPair{config_.number("cycle.tau_c"), config_.number("cycle.tau_s")};
}

std::string RunRecord::to_json() const {
    ordered_json doc;
    doc["content"] = content_id;
    doc["style"] = style_id;
    doc["config_hash"] = config_hash;
    doc["seed"] = seed;
    doc["output"] = output;
    doc["iterations"] = iterations;
    doc["stop_reason"] = stop_reason;
    doc["content_loss"] = content_loss;
    doc["style_loss"] = style_loss;
    doc["tau_c"] = tau_c;
    doc["tau_s"] = tau_s;
    doc["duration_seconds"] = duration_seconds;
    return doc.dump(2) + "\n";
}

TransferOutcome transfer(const Session& session, const Image& content, const Image& style,
                         const FeatureLocator& locator, std::optional<LossPair> thresholds, const StageA* stage_a) {
    CycleSettings settings = session.cycle_settings(locator);
    StageA local;
    if (!stage_a) {
        local = run_stage_a(session.backbone(), content, style, settings);
        stage_a = &local;
    }
    if (!thresholds) thresholds = session.fixed_thresholds();
    if (!thresholds) {
        thresholds = calibrate_thresholds(session.backbone(), session.extractor(), content, style, settings, stage_a);
    }
    settings.cycle.tau_c = thresholds->content;
    settings.cycle.tau_s = thresholds->style;
    CycleResult r = run_cycle(session.backbone(), session.extractor(), content, style, settings, stage_a);
    return TransferOutcome{std::move(r.output), std::move(r.state), *thresholds};
}

std::string history_json(const CycleState& state, const LossPair& thresholds) {
    ordered_json doc;
    doc["tau_c"] = thresholds.content;
    doc["tau_s"] = thresholds.style;
    doc["iterations"] = state.z;
    doc["stop_reason"] = to_string(state.stop_reason);
    ordered_json rows = ordered_json::array();
    for (const auto& h : state.history) {
        ordered_json r;
        r["z"] = h.z;
        r["content_loss"] = h.content_loss;
        r["style_loss"] = h.style_loss;
        rows.push_back(r);
    }
    doc["history"] = rows;
    return doc.dump(2) + "\n";
}

namespace {

std::filesystem::path sidecar(const std::filesystem::path& png, const char* suffix) {
    auto p = png;
    p.replace_extension();
    p += suffix;
    return p;
}

}  // namespace

RunRecord write_transfer(const std::filesystem::path& output_png, const TransferOutcome& outcome,
                         const Session& session, const std::string& content_id, const std::string& style_id,
                         double duration_seconds) {
    if (output_png.has_parent_path()) std::filesystem::create_directories(output_png.parent_path());
    save_png(outcome.output, output_png);
    write_text_atomic(sidecar(output_png, ".history.json"), history_json(outcome.state, outcome.thresholds));
    RunRecord rec;
    rec.content_id = content_id;
    rec.style_id = style_id;
    rec.config_hash = session.config().hash();
    rec.seed = session.backbone().seed();
    rec.output = output_png.string();
    rec.iterations = outcome.state.z;
    rec.stop_reason = to_string(outcome.state.stop_reason);
    rec.content_loss = outcome.state.content_loss;
    rec.style_loss = outcome.state.style_loss;
    rec.tau_c = outcome.thresholds.content;
    rec.tau_s = outcome.thresholds.style;
    rec.duration_seconds = duration_seconds;
    write_text_atomic(sidecar(output_png, ".run.json"), rec.to_json());
    return rec;
}

std::string make_run_id(const Config& config) {
    if (const auto& id = config.get("pipeline.run_id"); id != "auto") return id;
    const std::time_t now = std::time(nullptr);
    std::tm utc{};
    gmtime_r(&now, &utc);
    std::ostringstream out;
    out << std::put_time(&utc, "%Y%m%dT%H%M%SZ") << "-" << config.hash().substr(0, 8);
    return out.str();
}

namespace {

// Runs fn(i) for i in [0, n) on `workers` threads. The first exception is
// rethrown after all workers stop.
template <typename Fn>
void parallel_for(std::size_t n, int workers, Fn&& fn) {
    if (workers <= 1 || n <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    std::vector<std::thread> pool;
    for (int w = 0; w < std::min<int>(workers, int(n)); ++w) {
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < n; i = next++) {
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard lock(failure_mutex);
                    if (!failure) failure = std::current_exception();
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
}

double seconds_since(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

}  // namespace

MetricReport evaluate_pairs(const Session& session, const DatasetManifest& manifest, const Stylizer& stylizer,
                            const EvaluationOptions& options) {
    const auto pairs = manifest.pairs();
    if (pairs.empty()) throw ValidationError("evaluation: manifest has no pairs");
    const int workers = session.config().integer("pipeline.workers");

    std::vector<std::optional<Image>> contents(manifest.contents.size()), styles(manifest.styles.size());
    std::vector<std::string> load_errors(manifest.contents.size() + manifest.styles.size());
    parallel_for(contents.size() + styles.size(), workers, [&](std::size_t i) {
        try {
            if (i < contents.size()) {
                contents[i] = session.load_image(manifest.contents[i].path);
            } else {
                styles[i - contents.size()] = session.load_image(manifest.styles[i - contents.size()].path);
            }
        } catch (const std::exception& e) {
            load_errors[i] = e.what();
        }
    });

    const PerceptualExtractor& ex = session.extractor();
    const PerceptualExtractor& fx = session.fid_extractor();
    const std::string cfsd_layer = session.config().get("metrics.cfsd_layer");

    std::vector<PairMetrics> rows(pairs.size());
    std::vector<std::optional<Eigen::VectorXd>> embeddings(pairs.size());
    parallel_for(pairs.size(), workers, [&](std::size_t i) {
        const PairRef& pr = pairs[i];
        PairMetrics& row = rows[i];
        row.content_id = manifest.contents[pr.content].id;
        row.style_id = manifest.styles[pr.style].id;
        row.category = manifest.styles[pr.style].category;
        try {
            if (!contents[pr.content]) throw IoError("content image: " + load_errors[pr.content]);
            if (!styles[pr.style]) throw IoError("style image: " + load_errors[contents.size() + pr.style]);
            const auto start = std::chrono::steady_clock::now();
            const TransferOutcome out = stylizer(i, *contents[pr.content], *styles[pr.style]);
            const double elapsed = seconds_since(start);
            row.lpips = lpips(out.output, *contents[pr.content], ex);
            row.cfsd = cfsd(*contents[pr.content], out.output, ex, cfsd_layer);
            row.content_loss = out.state.content_loss;
            row.style_loss = out.state.style_loss;
            row.iterations = out.state.z;
            row.stop_reason = to_string(out.state.stop_reason);
            embeddings[i] = fx.embedding(out.output);
            if (!options.output_dir.empty()) {
                const auto png = options.output_dir / (row.content_id + "__" + row.style_id + ".png");
                write_transfer(png, out, session, row.content_id, row.style_id, elapsed);
                row.output = png.string();
            }
        } catch (const std::exception& e) {
            row.ok = false;
            row.error = e.what();
        }
    });

    MetricReport report;
    report.extractor = ex.id();
    report.fid_extractor = fx.id();
    report.config_hash = session.config().hash();
    report.config = session.config().values();
    report.datasets = {manifest.id};
    std::vector<Eigen::VectorXd> gen;
    double lp = 0, cf = 0;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (!rows[i].ok) {
            ++report.excluded;
            continue;
        }
        lp += rows[i].lpips;
        cf += rows[i].cfsd;
        gen.push_back(*embeddings[i]);
    }
    report.pairs = std::move(rows);
    if (gen.size() < 2) throw Error("evaluation: fewer than 2 pairs succeeded (" + std::to_string(report.excluded) + " excluded)");
    report.lpips = lp / double(gen.size());
    report.cfsd = cf / double(gen.size());

    std::vector<Eigen::VectorXd> ref;
    for (const auto& s : styles) {
        if (s) ref.push_back(fx.embedding(*s));
    }
    if (ref.size() < 2) throw ValidationError("evaluation: FID needs at least 2 style images");
    auto stack = [](const std::vector<Eigen::VectorXd>& v) {
        Eigen::MatrixXd m(Index(v.size()), v.front().size());
        for (std::size_t i = 0; i < v.size(); ++i) m.row(Index(i)) = v[i].transpose();
        return m;
    };
    report.fid = fid(stack(ref), stack(gen));
    report.finalize();
    if (!options.output_dir.empty() && options.write_report) {
        write_text_atomic(options.output_dir / "report.json", report.to_json());
        write_text_atomic(options.output_dir / "config.txt", session.config().canonical());
    }
    return report;
}

const StageA& StageACache::get(const Session& session, const DatasetManifest& manifest, const PairRef& pair,
                               const CycleSettings& settings) {
    const auto key = std::make_pair(pair.content, pair.style);
    {
        std::lock_guard lock(mutex_);
        if (auto it = entries_.find(key); it != entries_.end()) return *it->second;
    }
    const Image c = session.load_image(manifest.contents[pair.content].path);
    const Image s = session.load_image(manifest.styles[pair.style].path);
    auto a = std::make_shared<const StageA>(run_stage_a(session.backbone(), c, s, settings));
    std::lock_guard lock(mutex_);
    return *entries_.emplace(key, std::move(a)).first->second;
}

MetricReport run_evaluation(const Session& session, const DatasetManifest& manifest, const FeatureLocator& locator,
                            const EvaluationOptions& options, StageACache* cache) {
    const CycleSettings settings = session.cycle_settings(locator);
    StageACache local;
    if (!cache) cache = &local;
    const auto pairs = manifest.pairs();

    std::map<std::size_t, LossPair> thresholds;
    const auto fixed = session.fixed_thresholds();
    std::map<std::size_t, std::string> calibration_errors;
    if (!fixed) {
        std::vector<PairRef> calibration;
        std::set<std::size_t> seen;
        for (const auto& p : pairs) {
            if (seen.insert(p.style).second) calibration.push_back(p);
        }
        std::vector<std::optional<LossPair>> found(calibration.size());
        std::vector<std::string> errors(calibration.size());
        parallel_for(calibration.size(), session.config().integer("pipeline.workers"), [&](std::size_t i) {
            const PairRef& p = calibration[i];
            try {
                const StageA& a = cache->get(session, manifest, p, settings);
                found[i] = calibrate_thresholds(session.backbone(), session.extractor(),
                                                session.load_image(manifest.contents[p.content].path),
                                                session.load_image(manifest.styles[p.style].path), settings, &a);
            } catch (const std::exception& e) {
                errors[i] = e.what();
            }
        });
        for (std::size_t i = 0; i < calibration.size(); ++i) {
            if (found[i]) {
                thresholds[calibration[i].style] = *found[i];
            } else {
                calibration_errors[calibration[i].style] = errors[i];
            }
        }
    }

    const Stylizer stylizer = [&](std::size_t i, const Image& c, const Image& s) {
        const PairRef& p = pairs[i];
        std::optional<LossPair> tau = fixed;
        if (!tau) {
            auto it = thresholds.find(p.style);
            if (it == thresholds.end()) throw Error("threshold calibration failed: " + calibration_errors[p.style]);
            tau = it->second;
        }
        const StageA& a = cache->get(session, manifest, p, settings);
        return transfer(session, c, s, locator, tau, &a);
    };
    return evaluate_pairs(session, manifest, stylizer, options);
}

std::vector<std::string> ablation_axes() { return {"w", "adain", "sobel-gram", "iterations", "start_step", "comparator"}; }

std::vector<std::pair<std::string, std::map<std::string, std::string>>> ablation_settings(const std::string& axis,
                                                                                          const Config& config) {
    std::vector<std::pair<std::string, std::map<std::string, std::string>>> rows;
    if (axis == "w") {
        for (const auto& v : config.list("ablation.w")) rows.push_back({"w=" + v, {{"injection.w", v}}});
    } else if (axis == "adain") {
        rows.push_back({"adain=on", {{"cycle.adain", "true"}}});
        rows.push_back({"adain=off", {{"cycle.adain", "false"}}});
    } else if (axis == "sobel-gram") {
        const std::pair<const char*, const char*> combos[] = {{"off", "off"}, {"on", "off"}, {"off", "on"}, {"on", "on"}};
        for (const auto& [sobel, gram] : combos) {
            rows.push_back({std::string("sobel=") + sobel + ",gram=" + gram,
                            {{"cycle.content_criterion", std::string(sobel) == "on" ? "true" : "false"},
                             {"cycle.style_criterion", std::string(gram) == "on" ? "true" : "false"}}});
        }
    } else if (axis == "iterations") {
        for (const auto& n : config.list("ablation.iterations")) {
            rows.push_back({"fixed=" + n, {{"cycle.adaptive", "false"}, {"cycle.max_iters", n}}});
        }
        rows.push_back({"adaptive", {{"cycle.adaptive", "true"}}});
    } else if (axis == "start_step") {
        for (const auto& s : config.list("ablation.start_step")) {
            rows.push_back({"start_step=" + s, {{"injection.start_step", s}}});
        }
    } else if (axis == "comparator") {
        rows.push_back({"paper-as-written", {{"cycle.comparator", "paper-as-written"}}});
        rows.push_back({"conventional", {{"cycle.comparator", "conventional"}}});
    } else {
        throw ConfigError("unknown ablation axis '" + axis + "'");
    }
    return rows;
}

std::vector<AblationRow> run_ablation(const std::string& axis, const Session& session, const DatasetManifest& manifest,
                                      const FeatureLocator& locator, const std::filesystem::path& output_dir) {
    const auto settings = ablation_settings(axis, session.config());
    StageACache cache;
    std::vector<AblationRow> rows;
    for (const auto& [name, overrides] : settings) {
        Config cfg = session.config();
        for (const auto& [k, v] : overrides) cfg.set(k, v);
        const Session row_session(cfg);
        EvaluationOptions opts;
        if (!output_dir.empty()) opts.output_dir = output_dir / axis / name;
        rows.push_back(AblationRow{axis, name, run_evaluation(row_session, manifest, locator, opts, &cache)});
    }
    return rows;
}

std::string ablation_table_json(const std::vector<AblationRow>& rows) {
    ordered_json doc = ordered_json::array();
    for (const auto& r : rows) {
        ordered_json row;
        row["axis"] = r.axis;
        row["setting"] = r.setting;
        row["fid"] = r.report.fid;
        row["lpips"] = r.report.lpips;
        row["artfid"] = r.report.artfid;
        row["cfsd"] = r.report.cfsd;
        row["excluded"] = r.report.excluded;
        double iters = 0;
        int ok = 0;
        for (const auto& p : r.report.pairs) {
            if (p.ok) {
                iters += p.iterations;
                ++ok;
            }
        }
        row["mean_iterations"] = ok ? iters / ok : 0.0;
        row["config_hash"] = r.report.config_hash;
        doc.push_back(row);
    }
    return doc.dump(2) + "\n";
}

Image compose_grid(const std::vector<Image>& images, const std::vector<std::string>& labels, const GridLayout& layout) {
    if (images.empty()) throw ValidationError("emit_grid: empty image set");
    if (!labels.empty() && labels.size() != images.size()) throw ValidationError("emit_grid: one label per image");
    if (layout.columns < 1 || layout.label_height < 0) throw ConfigError("emit_grid: bad layout");
    const Index ch = layout.cell_height > 0 ? layout.cell_height : images.front().height;
    const Index cw = layout.cell_width > 0 ? layout.cell_width : images.front().width;
    const Index cols = std::min<Index>(layout.columns, Index(images.size()));
    const Index rows = (Index(images.size()) + cols - 1) / cols;
    const Index band = layout.label_height;
    Image grid(3, rows * (ch + band), cols * cw);
    grid.data.setOnes();
    for (std::size_t i = 0; i < images.size(); ++i) {
        Image im = images[i];
        if (im.channels() == 1) {
            Image rgb(3, im.height, im.width);
            for (Index c = 0; c < 3; ++c) rgb.data.row(c) = im.data.row(0);
            im = std::move(rgb);
        }
        require_rgb(im, "emit_grid");
        if (im.height < 1 || im.width < 1) throw DimensionError("emit_grid: empty image");
        const double scale = std::min(double(ch) / double(im.height), double(cw) / double(im.width));
        const Index h = std::clamp<Index>(Index(std::lround(double(im.height) * scale)), 1, ch);
        const Index w = std::clamp<Index>(Index(std::lround(double(im.width) * scale)), 1, cw);
        const Image fitted = resize_bilinear(im, h, w);
        const Index r = Index(i) / cols, c = Index(i) % cols;
        const Index oy = r * (ch + band), ox = c * cw;
        for (Index y = 0; y < ch; ++y) {
            for (Index x = 0; x < cw; ++x) {
                for (Index k = 0; k < 3; ++k) grid(k, oy + y, ox + x) = 0.0;
            }
        }
        const Index py = oy + (ch - h) / 2, px = ox + (cw - w) / 2;
        for (Index y = 0; y < h; ++y) {
            for (Index x = 0; x < w; ++x) {
                for (Index k = 0; k < 3; ++k) grid(k, py + y, px + x) = fitted(k, y, x);
            }
        }
        if (band > 0 && !labels.empty()) {
            std::string text = labels[i];
            const std::size_t fit = std::size_t(std::max<Index>(0, (cw - 2) / 6));
            if (text.size() > fit) text.resize(fit);
            Image cell(3, band, cw);
            cell.data.setOnes();
            draw_text(cell, 1, std::max<Index>(0, (band - 7) / 2), text, 0.0);
            for (Index y = 0; y < band; ++y) {
                for (Index x = 0; x < cw; ++x) {
                    for (Index k = 0; k < 3; ++k) grid(k, oy + ch + y, ox + x) = cell(k, y, x);
                }
            }
        }
    }
    return grid;
}

void emit_grid(const std::vector<Image>& images, const std::vector<std::string>& labels, const GridLayout& layout,
               const std::filesystem::path& path) {
    save_png(compose_grid(images, labels, layout), path);
}

}  // namespace corrstyle
