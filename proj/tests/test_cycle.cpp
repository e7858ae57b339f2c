#include <doctest.h>

#include <limits>
#include <random>

#include "corrstyle/cycle.hpp"
#include "helpers.hpp"

using namespace corrstyle;

namespace {

struct Fixture {
    std::shared_ptr<const Backbone> bb = testing::default_backbone();
    Image content = testing::content("house");
    Image style = testing::style("dots");
    CycleSettings settings;
    StageA stage_a;

    Fixture() {
        settings.locator = {21, "up_blocks.2"};
        settings.injection.target_blocks = default_injection_blocks(*bb, settings.locator.layer);
        settings.cycle.max_iters = 3;
        stage_a = run_stage_a(*bb, content, style, settings);
    }
};

const Fixture& fixture() {
    static const Fixture f;
    return f;
}

CycleConfig config(Comparator mode) {
    CycleConfig c;
    c.tau_c = 1.0;
    c.tau_s = 2.0;
    c.max_iters = 5;
    c.comparator = mode;
    return c;
}

}  // namespace

TEST_SUITE("cycle") {

TEST_CASE("stop truth table in both comparator modes") {
    for (const auto mode : {Comparator::paper_as_written, Comparator::conventional}) {
        const CycleConfig c = config(mode);
        for (int dc : {-1, 1})
            for (int ds : {-1, 1})
                for (int dz : {-1, 1}) {
                    const double lc = c.tau_c + 0.5 * dc, ls = c.tau_s + 0.5 * ds;
                    const int z = c.max_iters + dz;
                    const auto d = should_stop(lc, ls, c, z);
                    const bool content_ok = mode == Comparator::paper_as_written ? dc > 0 : dc < 0;
                    if (dz > 0) {
                        CHECK(d.stop);
                        CHECK(d.reason == StopReason::max_iters);
                    } else if (content_ok && ds < 0) {
                        CHECK(d.stop);
                        CHECK(d.reason == StopReason::threshold);
                    } else {
                        CHECK_FALSE(d.stop);
                    }
                }
    }
}

TEST_CASE("stop boundary cases") {
    CycleConfig c = config(Comparator::paper_as_written);
    CHECK(should_stop(100, 100, c, 5).reason == StopReason::max_iters);
    CHECK_FALSE(should_stop(c.tau_c, c.tau_s - 1, c, 1).stop);
    CHECK(should_stop(c.tau_c + 1, c.tau_s - 1, c, 1).reason == StopReason::threshold);
    CHECK_FALSE(should_stop(c.tau_c + 1, c.tau_s, c, 1).stop);
    c.adaptive = false;
    CHECK_FALSE(should_stop(c.tau_c + 1, c.tau_s - 1, c, 1).stop);
    c.adaptive = true;
    c.style_criterion = false;
    CHECK(should_stop(c.tau_c + 1, c.tau_s + 1, c, 1).stop);
    c.content_criterion = false;
    CHECK(should_stop(0, 1e9, c, 1).stop);
}

TEST_CASE("comparator names and config validation") {
    CHECK(parse_comparator("paper-as-written") == Comparator::paper_as_written);
    CHECK(parse_comparator("conventional") == Comparator::conventional);
    CHECK_THROWS_AS(parse_comparator("greater"), ConfigError);
    CycleConfig c;
    CHECK_NOTHROW(c.validate());
    c.max_iters = 0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c.max_iters = 5;
    c.tau_c = -1;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c.tau_c = std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("adain matches style statistics per channel") {
    std::mt19937_64 rng(1);
    for (int trial = 0; trial < 10; ++trial) {
        Tensor3d c = oracle::random_tensor(rng, 4, 8, 8, -3, 3);
        const Tensor3d s = oracle::random_tensor(rng, 4, 6, 10, -1, 5);
        c.data.row(trial % 4).setConstant(0.25);
        const Tensor3d out = adain(c, s);
        CHECK(out.all_finite());
        for (Index ch = 0; ch < 4; ++ch) {
            const double ms = s.data.row(ch).mean();
            const double ss = std::sqrt((s.data.row(ch).array() - ms).square().mean());
            const double mo = out.data.row(ch).mean();
            const double so = std::sqrt((out.data.row(ch).array() - mo).square().mean());
            CHECK(std::abs(mo - ms) <= 1e-5);
            if (ch == trial % 4) {
                CHECK((out.data.row(ch).array() - ms).abs().maxCoeff() == 0.0);
            } else {
                CHECK(std::abs(so - ss) <= 1e-5);
            }
        }
    }
    std::mt19937_64 r2(2);
    const Tensor3d y = oracle::random_tensor(r2, 4, 5, 5);
    CHECK((adain(y, y).data - y.data).cwiseAbs().maxCoeff() <= 1e-6);
    CHECK_THROWS_AS(adain(y, oracle::random_tensor(r2, 3, 5, 5)), DimensionError);
}

TEST_CASE("reverse stylization is deterministic at the style resolution") {
    const auto& f = fixture();
    const Image a = reverse_stylize(*f.bb, f.content, f.style, 0.7);
    const Image b = reverse_stylize(*f.bb, f.content, f.style, 0.7);
    CHECK(a.data == b.data);
    CHECK(a.same_shape(f.style));
    CHECK(a.data == f.stage_a.reverse_stylized.data);
}

TEST_CASE("stage a map is total over the content grid") {
    const auto& f = fixture();
    const auto& map = f.stage_a.map;
    CHECK_NOTHROW(map.validate());
    CHECK(map.locator == f.settings.locator);
    const auto feats = f.bb->extract_features(f.content, f.settings.locator);
    CHECK(map.size() == feats.data.pixels());
}

TEST_CASE("history is monotone and reproducible") {
    const auto& f = fixture();
    CycleSettings s = f.settings;
    s.cycle.adaptive = false;
    const auto a = run_cycle(*f.bb, testing::extractor(), f.content, f.style, s, &f.stage_a);
    const auto b = run_cycle(*f.bb, testing::extractor(), f.content, f.style, s);
    REQUIRE(a.state.history.size() == 3);
    for (std::size_t i = 0; i < a.state.history.size(); ++i) {
        CHECK(a.state.history[i].z == int(i) + 1);
        CHECK(a.state.history[i].content_loss == b.state.history[i].content_loss);
        CHECK(a.state.history[i].style_loss == b.state.history[i].style_loss);
    }
    CHECK(a.output.data == b.output.data);
    CHECK(a.state.stop_reason == StopReason::max_iters);
    CHECK(a.state.z == 3);
}

TEST_CASE("satisfied thresholds stop after one iteration") {
    const auto& f = fixture();
    CycleSettings s = f.settings;
    s.cycle.tau_c = 0;
    s.cycle.tau_s = 1e12;
    const auto r = run_cycle(*f.bb, testing::extractor(), f.content, f.style, s, &f.stage_a);
    CHECK(r.state.history.size() == 1);
    CHECK(r.state.stop_reason == StopReason::threshold);
}

TEST_CASE("unsatisfiable thresholds run to max_iters") {
    const auto& f = fixture();
    CycleSettings s = f.settings;
    s.cycle.tau_c = 1e12;
    s.cycle.tau_s = 0;
    const auto r = run_cycle(*f.bb, testing::extractor(), f.content, f.style, s, &f.stage_a);
    CHECK(r.state.history.size() == 3);
    CHECK(r.state.stop_reason == StopReason::max_iters);
}

TEST_CASE("calibration returns the third iteration losses") {
    const auto& f = fixture();
    CycleSettings s = f.settings;
    s.cycle.max_iters = 5;
    s.cycle.adaptive = false;
    const auto full = run_cycle(*f.bb, testing::extractor(), f.content, f.style, s, &f.stage_a);
    const auto tau = calibrate_thresholds(*f.bb, testing::extractor(), f.content, f.style, s, &f.stage_a);
    CHECK(tau.content == full.state.history[2].content_loss);
    CHECK(tau.style == full.state.history[2].style_loss);
}

TEST_CASE("no injection and no adain reduces to plain kv swap") {
    const auto& f = fixture();
    CycleSettings s = f.settings;
    s.injection.w = 0;
    s.cycle.adain_enabled = false;
    s.cycle.max_iters = 1;
    const auto r = run_cycle(*f.bb, testing::extractor(), f.content, f.style, s, &f.stage_a);
    auto swap = std::make_shared<KvSwapHook>(f.bb->model().attention_blocks(), f.stage_a.style_bank, 0.7);
    const Image plain = f.bb->decode_latent(f.bb->ddim_sample(f.stage_a.content_trajectory.back(), {swap}));
    CHECK(r.output.data == plain.data);
}

TEST_CASE("self pair reverse stylization matches the reconstruction") {
    const auto& f = fixture();
    const auto traj = f.bb->ddim_invert(f.bb->encode_image(f.content));
    const Image recon = f.bb->decode_latent(f.bb->ddim_sample(traj.back()));
    CHECK(lpips(reverse_stylize(*f.bb, f.content, f.content, 0.7), recon, testing::extractor()) < 0.05);
}

TEST_CASE("stage failures name the stage and iteration") {
    const auto& f = fixture();
    CycleSettings s = f.settings;
    s.style_layers = {"conv1", "conv7"};
    try {
        run_cycle(*f.bb, testing::extractor(), f.content, f.style, s, &f.stage_a);
        FAIL("expected an error");
    } catch (const ValidationError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("losses") != std::string::npos);
        CHECK(msg.find("iteration 1") != std::string::npos);
    }
}

}
