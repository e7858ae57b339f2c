// Acceptance suite: one PASS/FAIL line per criterion.
//
// Exit status is 0 when every criterion outside kKnownFailures passes and
// every criterion inside it still fails; any other outcome exits 1.
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <functional>
#include <iomanip>
#include <iostream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <sys/wait.h>

#include "corrstyle/io.hpp"
#include "corrstyle/losses.hpp"
#include "corrstyle/pipeline.hpp"
#include "helpers.hpp"
#include "synthetic.hpp"

using namespace corrstyle;
namespace fs = std::filesystem;

namespace {

constexpr double kArtFidTol = 1e-3;
constexpr double kFidZeroTol = 1e-6;
constexpr double kFidRelTol = 0.05;
constexpr Index kFidSamples = 10000;
constexpr int kMatchGrids = 200;
constexpr int kScaleGrids = 100;
constexpr double kLinearityTol = 1e-6;
constexpr int kAdainLatents = 50;
constexpr double kAdainTol = 1e-5;
constexpr int kGramBlocks = 100;
constexpr double kGramSymTol = 1e-9;
constexpr double kGramPsdTol = -1e-7;
constexpr double kPermutationTol = 1e-12;

// Criteria that fail on the built-in checkpoint.
const std::set<std::string> kKnownFailures = {"ablation-adain-lpips"};

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(double v, int digits = 6) {
    std::ostringstream s;
    s << std::setprecision(digits) << v;
    return s.str();
}

fs::path work_dir() {
    static const fs::path dir = [] {
        const fs::path d = fs::temp_directory_path() / "corrstyle_acceptance";
        fs::remove_all(d);
        fs::create_directories(d);
        return d;
    }();
    return dir;
}

Config suite_config() {
    Config cfg = Config::defaults();
    cfg.set("correspondence.keypoints", (oracle::fixtures() / "keypoints.jsonl").string());
    cfg.set("correspondence.cache", (work_dir() / "locator.json").string());
    return cfg;
}

Outcome artfid_identity() {
    const double v = artfid(0.549, 18.432);
    return {std::abs(v - 30.100) <= kArtFidTol, "artfid(0.549, 18.432) = " + fmt(v, 9)};
}

Outcome metric_zero_cases() {
    const auto& ex = testing::extractor();
    std::vector<Image> images;
    for (const auto& n : testing::content_names()) images.push_back(testing::content(n));
    double worst_lpips = 0, worst_cfsd = 0;
    Eigen::MatrixXd emb(Index(images.size()), ex.embedding(images[0]).size());
    for (std::size_t i = 0; i < images.size(); ++i) {
        worst_lpips = std::max(worst_lpips, lpips(images[i], images[i], ex));
        worst_cfsd = std::max(worst_cfsd, cfsd(images[i], images[i], ex));
        emb.row(Index(i)) = ex.embedding(images[i]).transpose();
    }
    const double f = fid(emb, emb);
    return {worst_lpips == 0.0 && worst_cfsd == 0.0 && f <= kFidZeroTol,
            "max lpips " + fmt(worst_lpips) + ", max cfsd " + fmt(worst_cfsd) + ", fid " + fmt(f)};
}

Outcome fid_analytic() {
    std::mt19937_64 rng(2024);
    std::normal_distribution<double> g;
    Eigen::VectorXd v(8);
    v << 1.0, -0.5, 0.25, 2.0, 0.0, -1.0, 0.5, 0.75;
    Eigen::MatrixXd a(kFidSamples, 8), b(kFidSamples, 8);
    for (Index i = 0; i < kFidSamples; ++i)
        for (Index j = 0; j < 8; ++j) {
            a(i, j) = g(rng);
            b(i, j) = v(j) + g(rng);
        }
    const double f = fid(a, b), expected = v.squaredNorm();
    return {std::abs(f - expected) <= kFidRelTol * expected, "fid " + fmt(f) + " vs |v|^2 " + fmt(expected)};
}

Outcome match_oracle() {
    std::mt19937_64 rng(7);
    std::uniform_int_distribution<int> side(1, 8), dim(1, 16);
    int exact = 0;
    for (int i = 0; i < kMatchGrids; ++i) {
        const int c = dim(rng);
        const Tensor3d src = oracle::random_tensor(rng, c, side(rng), side(rng));
        const Tensor3d dst = oracle::random_tensor(rng, c, side(rng), side(rng));
        if (dense_match(src, dst).target == oracle::brute_force_match(src, dst)) ++exact;
    }
    return {exact == kMatchGrids, std::to_string(exact) + "/" + std::to_string(kMatchGrids) + " grids exact"};
}

Outcome scale_invariance() {
    std::mt19937_64 rng(8);
    std::uniform_int_distribution<int> side(1, 8), dim(1, 16);
    std::uniform_real_distribution<double> scale(1e-3, 1e3);
    int same = 0;
    for (int i = 0; i < kScaleGrids; ++i) {
        const int c = dim(rng);
        const Tensor3d src = oracle::random_tensor(rng, c, side(rng), side(rng));
        Tensor3d dst = oracle::random_tensor(rng, c, side(rng), side(rng));
        const auto before = dense_match(src, dst).target;
        for (Index q = 0; q < dst.pixels(); ++q) dst.data.col(q) *= scale(rng);
        if (dense_match(src, dst).target == before) ++same;
    }
    return {same == kScaleGrids, std::to_string(same) + "/" + std::to_string(kScaleGrids) + " grids unchanged"};
}

Outcome injection_noop_linearity() {
    std::mt19937_64 rng(9);
    bool noop = true;
    double worst = 0;
    for (int i = 0; i < 20; ++i) {
        const Tensor3d feat = oracle::random_tensor(rng, 8, 6, 6);
        const Tensor3d attn = oracle::random_tensor(rng, 8, 5, 7);
        CorrespondenceMap map = dense_match(oracle::random_tensor(rng, 4, 6, 6), oracle::random_tensor(rng, 4, 5, 7));
        noop = noop && inject_correspondence(feat, attn, map, 0.0).data == feat.data;
        const double w = 0.6 * (i + 1) / 4.0;
        const auto one = inject_correspondence(feat, attn, map, w);
        const auto two = inject_correspondence(feat, attn, map, 2 * w);
        worst = std::max(worst, ((two.data - feat.data) - 2.0 * (one.data - feat.data)).cwiseAbs().maxCoeff());
    }
    return {noop && worst <= kLinearityTol,
            std::string("w=0 bitwise ") + (noop ? "yes" : "no") + ", max linearity error " + fmt(worst)};
}

Outcome adain_statistics() {
    std::mt19937_64 rng(10);
    double worst = 0;
    bool finite = true;
    for (int i = 0; i < kAdainLatents; ++i) {
        Tensor3d c = oracle::random_tensor(rng, 4, 16, 16, -4, 4);
        const Tensor3d s = oracle::random_tensor(rng, 4, 16, 16, -2, 6);
        c.data.row(i % 4).setConstant(1.5);
        const Tensor3d out = adain(c, s);
        finite = finite && out.all_finite();
        for (Index ch = 0; ch < 4; ++ch) {
            const double ms = s.data.row(ch).mean(), mo = out.data.row(ch).mean();
            worst = std::max(worst, std::abs(mo - ms));
            if (ch == i % 4) {
                worst = std::max(worst, (out.data.row(ch).array() - ms).abs().maxCoeff());
                continue;
            }
            const double ss = std::sqrt((s.data.row(ch).array() - ms).square().mean());
            const double so = std::sqrt((out.data.row(ch).array() - mo).square().mean());
            worst = std::max(worst, std::abs(so - ss));
        }
    }
    return {finite && worst <= kAdainTol, "max statistic error " + fmt(worst) + (finite ? "" : ", non-finite output")};
}

Outcome loss_properties() {
    std::mt19937_64 rng(11);
    std::uniform_int_distribution<int> dim(1, 32);
    double sym = 0, min_eig = 0;
    for (int i = 0; i < kGramBlocks; ++i) {
        const auto g = gram_matrix(oracle::random_tensor(rng, dim(rng), dim(rng), dim(rng)));
        sym = std::max(sym, (g.data - g.data.transpose()).cwiseAbs().maxCoeff());
        min_eig = std::min(min_eig, Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(g.data).eigenvalues().minCoeff());
    }
    double perm_err = 0;
    for (int i = 0; i < 20; ++i) {
        const std::vector<Tensor3d> gen = {oracle::random_tensor(rng, 6, 8, 8)};
        const std::vector<Tensor3d> sty = {oracle::random_tensor(rng, 6, 5, 9)};
        std::vector<Index> perm(64);
        std::iota(perm.begin(), perm.end(), 0);
        std::shuffle(perm.begin(), perm.end(), rng);
        Tensor3d shuffled(6, 8, 8);
        for (Index p = 0; p < 64; ++p) shuffled.data.col(perm[std::size_t(p)]) = gen[0].data.col(p);
        const double a = style_loss(gen, sty);
        const double b = style_loss(std::vector<Tensor3d>{shuffled}, sty);
        perm_err = std::max(perm_err, std::abs(a - b) / std::max(1e-300, std::abs(a)));
    }
    Tensor3d flat(1, 7, 7);
    flat.data.setConstant(0.3);
    const bool zero = sobel_edges(flat).data.cwiseAbs().maxCoeff() == 0.0;
    Tensor3d step(1, 5, 5);
    for (Index y = 0; y < 5; ++y)
        for (Index x = 2; x < 5; ++x) step(0, y, x) = 1.0;
    Tensor3d expected(1, 5, 5);
    for (Index y = 0; y < 5; ++y) expected(0, y, 1) = expected(0, y, 2) = 4.0;
    const bool fixture = sobel_edges(step).data == expected.data;
    const bool pass = sym <= kGramSymTol && min_eig >= kGramPsdTol && perm_err <= kPermutationTol && zero && fixture;
    return {pass, "gram asym " + fmt(sym) + ", min eig " + fmt(min_eig) + ", perm rel err " + fmt(perm_err) +
                      ", sobel constant " + (zero ? "zero" : "nonzero") + ", step fixture " +
                      (fixture ? "exact" : "mismatch")};
}

Outcome stopping_logic() {
    int matched = 0, total = 0;
    for (const auto mode : {Comparator::paper_as_written, Comparator::conventional}) {
        CycleConfig c;
        c.tau_c = 0.2;
        c.tau_s = 0.05;
        c.max_iters = 5;
        c.comparator = mode;
        for (int dc : {-1, 1})
            for (int ds : {-1, 1})
                for (int dz : {-1, 1}) {
                    const auto d = should_stop(c.tau_c + 0.01 * dc, c.tau_s + 0.01 * ds, c, c.max_iters + dz);
                    const bool content_ok = mode == Comparator::paper_as_written ? dc > 0 : dc < 0;
                    StopDecision want;
                    if (dz > 0) {
                        want = {true, StopReason::max_iters};
                    } else if (content_ok && ds < 0) {
                        want = {true, StopReason::threshold};
                    }
                    ++total;
                    if (d.stop == want.stop && d.reason == want.reason) ++matched;
                }
    }
    return {matched == total, std::to_string(matched) + "/" + std::to_string(total) + " rows match"};
}

struct AblationData {
    std::vector<AblationRow> w, adain;
    FeatureLocator locator;
};

const AblationData& ablations() {
    static const AblationData data = [] {
        AblationData d;
        const Session session(suite_config());
        d.locator = session.resolve_locator();
        const auto manifest = load_manifest(oracle::fixtures() / "suite.jsonl");
        d.w = run_ablation("w", session, manifest, d.locator);
        d.adain = run_ablation("adain", session, manifest, d.locator);
        std::cout << "  locator " << d.locator.to_string() << "\n";
        for (const auto* rows : {&d.w, &d.adain}) {
            for (const auto& r : *rows) {
                std::cout << "  " << std::left << std::setw(10) << r.setting << " fid " << fmt(r.report.fid)
                          << "  lpips " << fmt(r.report.lpips) << "  artfid " << fmt(r.report.artfid) << "  cfsd "
                          << fmt(r.report.cfsd) << "  excluded " << r.report.excluded << "\n";
            }
        }
        return d;
    }();
    return data;
}

const MetricReport& row(const std::vector<AblationRow>& rows, const std::string& setting) {
    for (const auto& r : rows)
        if (r.setting == setting) return r.report;
    throw Error("ablation row " + setting + " missing");
}

Outcome ablation_w_cfsd() {
    const double a = row(ablations().w, "w=0.6").cfsd, b = row(ablations().w, "w=3.0").cfsd;
    return {a < b, "cfsd(w=0.6) " + fmt(a) + " vs cfsd(w=3.0) " + fmt(b)};
}

Outcome ablation_adain_lpips() {
    const double on = row(ablations().adain, "adain=on").lpips, off = row(ablations().adain, "adain=off").lpips;
    return {on < off, "lpips(adain on) " + fmt(on) + " vs lpips(adain off) " + fmt(off)};
}

int run_cli(const std::string& args) {
    const std::string cmd = std::string(CORRSTYLE_CLI) + " " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

Outcome transfer_determinism() {
    const fs::path dir = work_dir() / "determinism";
    const std::string common = " --content " + (oracle::fixtures() / "content" / "house.png").string() + " --style " +
                               (oracle::fixtures() / "style" / "swirls.png").string() +
                               " --set correspondence.keypoints=" + (oracle::fixtures() / "keypoints.jsonl").string() +
                               " --set correspondence.cache=" + (work_dir() / "locator.json").string() + " --set seed=7";
    const int a = run_cli("transfer --out " + (dir / "a.png").string() + common);
    const int b = run_cli("transfer --out " + (dir / "b.png").string() + common);
    if (a != 0 || b != 0) return {false, "transfer exit codes " + std::to_string(a) + ", " + std::to_string(b)};
    const bool png = sha256_file(dir / "a.png") == sha256_file(dir / "b.png");
    const bool hist = read_text(dir / "a.history.json") == read_text(dir / "b.history.json");
    return {png && hist, std::string("image ") + (png ? "identical" : "differs") + ", history " +
                             (hist ? "identical" : "differs")};
}

Outcome grid_search_sanity() {
    const auto bench = testing::make_synthetic_benchmark(20, 99);
    const auto r = grid_search(bench.pairs, testing::synthetic_source(bench), {1, 11, 21, 31, 41},
                               {"exact", "noise"}, 0.1);
    return {r.best.layer == "exact" && r.best_score == 1.0,
            "best " + r.best.to_string() + " M=" + fmt(r.best_score)};
}

}  // namespace

int main() {
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
        {"artfid-identity", artfid_identity},
        {"metric-zero-cases", metric_zero_cases},
        {"fid-analytic", fid_analytic},
        {"correspondence-oracle", match_oracle},
        {"argmax-scale-invariance", scale_invariance},
        {"injection-noop-linearity", injection_noop_linearity},
        {"adain-statistics", adain_statistics},
        {"loss-properties", loss_properties},
        {"stopping-logic", stopping_logic},
        {"ablation-w-cfsd", ablation_w_cfsd},
        {"ablation-adain-lpips", ablation_adain_lpips},
        {"transfer-determinism", transfer_determinism},
        {"grid-search-sanity", grid_search_sanity},
    };
    int unexpected = 0;
    for (const auto& [name, check] : criteria) {
        const auto start = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = check();
        } catch (const std::exception& e) {
            o = {false, std::string("error: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        const bool known = kKnownFailures.count(name) != 0;
        std::string tag;
        if (known && !o.pass) tag = " [known failure]";
        if (known && o.pass) tag = " [known failure now passes]";
        if (o.pass == known) ++unexpected;
        std::cout << (o.pass ? "PASS " : "FAIL ") << name << ": " << o.detail << " (" << fmt(secs, 3) << " s)" << tag
                  << std::endl;
    }
    std::cout << (unexpected == 0 ? "acceptance: all outcomes as recorded" : "acceptance: unexpected outcomes")
              << std::endl;
    return unexpected == 0 ? 0 : 1;
}
