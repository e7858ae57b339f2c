// Command-line front end: transfer, evaluate, gridsearch, ablate, inspect.
// Exit codes: 0 success, 1 usage or validation error, 2 runtime failure.
#include <CLI11.hpp>

#include <chrono>
#include <iostream>

#include "corrstyle/io.hpp"
#include "corrstyle/pipeline.hpp"

namespace fs = std::filesystem;
using namespace corrstyle;

namespace {

struct Common {
    std::string config_file;
    std::vector<std::string> overrides;
};

Config build_config(const Common& common) {
    Config cfg = Config::defaults();
    if (!common.config_file.empty()) cfg.merge_file(common.config_file);
    for (const auto& o : common.overrides) cfg.apply(o);
    return cfg;
}

void add_common(CLI::App* app, Common& common) {
    app->add_option("--config", common.config_file, "Config file of key = value lines")->check(CLI::ExistingFile);
    app->add_option("--set", common.overrides, "Override one config key (key=value), repeatable");
}

double seconds_since(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

void write_run_record(const fs::path& path, const Session& session, const std::string& output, double seconds) {
    RunRecord rec;
    rec.config_hash = session.config().hash();
    rec.seed = session.backbone().seed();
    rec.output = output;
    rec.duration_seconds = seconds;
    write_text_atomic(path, rec.to_json());
}

fs::path with_suffix(fs::path p, const char* suffix) {
    p.replace_extension();
    p += suffix;
    return p;
}

void print_report(const MetricReport& r) {
    std::cout << "fid = " << r.fid << "\nlpips = " << r.lpips << "\nartfid = " << r.artfid << "\ncfsd = " << r.cfsd
              << "\nexcluded = " << r.excluded << "\n";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Correspondence-guided diffusion style transfer"};
    app.require_subcommand(1);

    Common common;
    auto* transfer_cmd = app.add_subcommand("transfer", "Stylize one content image with one style image");
    std::string content, style, out;
    transfer_cmd->add_option("--content", content, "Content image (PNG)")->required()->check(CLI::ExistingFile);
    transfer_cmd->add_option("--style", style, "Style image (PNG)")->required()->check(CLI::ExistingFile);
    transfer_cmd->add_option("--out", out, "Output PNG; sidecars are written next to it")->required();
    add_common(transfer_cmd, common);

    auto* evaluate_cmd = app.add_subcommand("evaluate", "Run the method over a manifest and report metrics");
    std::string manifest, report_path, out_dir;
    evaluate_cmd->add_option("--manifest", manifest, "Dataset manifest (JSONL)")->required()->check(CLI::ExistingFile);
    evaluate_cmd->add_option("--report", report_path, "Also write the metric report here");
    evaluate_cmd->add_option("--out-dir", out_dir, "Run directory root (default: pipeline.output_dir)");
    add_common(evaluate_cmd, common);

    auto* grid_cmd = app.add_subcommand("gridsearch", "Select (t*, l*) on a keypoint benchmark and cache it");
    std::string keypoints, cache_out;
    grid_cmd->add_option("--keypoints", keypoints, "Keypoint manifest (JSONL)")->required()->check(CLI::ExistingFile);
    grid_cmd->add_option("--out", cache_out, "Locator cache file (default: correspondence.cache)");
    add_common(grid_cmd, common);

    auto* ablate_cmd = app.add_subcommand("ablate", "Sweep one axis over a manifest");
    std::string axis, table_path;
    ablate_cmd->add_option("--axis", axis, "w, adain, sobel-gram, iterations, start_step or comparator")
        ->required()
        ->check(CLI::IsMember(ablation_axes()));
    ablate_cmd->add_option("--manifest", manifest, "Dataset manifest (JSONL)")->required()->check(CLI::ExistingFile);
    ablate_cmd->add_option("--table", table_path, "Also write the comparison table here");
    ablate_cmd->add_option("--out-dir", out_dir, "Run directory root (default: pipeline.output_dir)");
    add_common(ablate_cmd, common);

    auto* inspect_cmd = app.add_subcommand("inspect", "Describe the checkpoint's decoder blocks");
    Index size = 512;
    std::string inspect_out;
    inspect_cmd->add_option("--size", size, "Square image size")->check(CLI::PositiveNumber);
    inspect_cmd->add_option("--out", inspect_out, "Write the description to a file");
    add_common(inspect_cmd, common);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        const auto start = std::chrono::steady_clock::now();
        const Session session(build_config(common));
        const Config& cfg = session.config();
        const fs::path root = out_dir.empty() ? fs::path(cfg.get("pipeline.output_dir")) : fs::path(out_dir);

        if (*transfer_cmd) {
            const FeatureLocator loc = session.resolve_locator();
            const TransferOutcome result =
                transfer(session, session.load_image(content), session.load_image(style), loc);
            const RunRecord rec = write_transfer(out, result, session, fs::path(content).stem().string(),
                                                 fs::path(style).stem().string(), seconds_since(start));
            std::cout << "output = " << rec.output << "\nlocator = " << loc.to_string()
                      << "\niterations = " << rec.iterations << "\nstop_reason = " << rec.stop_reason << "\n";
        } else if (*evaluate_cmd) {
            const DatasetManifest m = load_manifest(manifest);
            const FeatureLocator loc = session.resolve_locator();
            const fs::path run_dir = root / make_run_id(cfg);
            const MetricReport r = run_evaluation(session, m, loc, EvaluationOptions{run_dir, true});
            if (!report_path.empty()) write_text_atomic(report_path, r.to_json());
            write_run_record(run_dir / "run.json", session, (run_dir / "report.json").string(), seconds_since(start));
            std::cout << "run_dir = " << run_dir.string() << "\n";
            print_report(r);
        } else if (*grid_cmd) {
            const fs::path target = cache_out.empty() ? fs::path(cfg.get("correspondence.cache")) : fs::path(cache_out);
            const GridSearchResult result = session.grid_search(load_keypoint_manifest(keypoints));
            save_locator_cache(target, LocatorCache{session.backbone().model().id(), result.best,
                                                    cfg.number("correspondence.alpha"), result});
            write_run_record(with_suffix(target, ".run.json"), session, target.string(), seconds_since(start));
            for (const auto& [loc, m] : result.scores) std::cout << loc.to_string() << " M=" << m << "\n";
            for (const auto& loc : result.missing) std::cout << loc.to_string() << " missing\n";
            std::cout << "best = " << result.best.to_string() << " M=" << result.best_score << "\n";
        } else if (*ablate_cmd) {
            const DatasetManifest m = load_manifest(manifest);
            const FeatureLocator loc = session.resolve_locator();
            const fs::path run_dir = root / make_run_id(cfg);
            const auto rows = run_ablation(axis, session, m, loc, run_dir);
            const std::string table = ablation_table_json(rows);
            write_text_atomic(run_dir / ("ablation_" + axis + ".json"), table);
            if (!table_path.empty()) write_text_atomic(table_path, table);
            write_run_record(run_dir / "run.json", session, (run_dir / ("ablation_" + axis + ".json")).string(),
                             seconds_since(start));
            std::cout << table;
        } else if (*inspect_cmd) {
            const std::string text = session.backbone().inspect(size, size);
            if (!inspect_out.empty()) {
                write_text_atomic(inspect_out, text);
                write_run_record(with_suffix(inspect_out, ".run.json"), session, inspect_out, seconds_since(start));
            }
            std::cout << text;
        }
        return 0;
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "failure: " << e.what() << "\n";
        return 2;
    }
}
