#include <doctest.h>

#include <random>

#include "corrstyle/cycle.hpp"
#include "corrstyle/injection.hpp"
#include "helpers.hpp"

using namespace corrstyle;

namespace {

CorrespondenceMap random_map(std::mt19937_64& rng, Index sh, Index sw, Index th, Index tw) {
    std::uniform_int_distribution<Index> pick(0, th * tw - 1);
    std::uniform_real_distribution<double> s(-1, 1);
    CorrespondenceMap m;
    m.source_height = sh;
    m.source_width = sw;
    m.target_height = th;
    m.target_width = tw;
    m.score.resize(sh * sw);
    for (Index p = 0; p < sh * sw; ++p) {
        m.target.push_back(pick(rng));
        m.score(p) = s(rng);
    }
    return m;
}

double entropy(const Eigen::RowVectorXd& p) { return -(p.array() * p.array().log()).sum(); }

}  // namespace

TEST_SUITE("injection") {

TEST_CASE("kv swap with own keys at unit temperature is self-attention") {
    std::mt19937_64 rng(1);
    std::normal_distribution<double> n;
    Eigen::MatrixXd q(7, 8), k(9, 8), v(9, 8);
    for (auto* m : {&q, &k, &v}) m->unaryExpr([&](double) { return n(rng); });
    q = q.unaryExpr([&](double) { return n(rng); });
    k = k.unaryExpr([&](double) { return n(rng); });
    v = v.unaryExpr([&](double) { return n(rng); });
    const Eigen::MatrixXd a = kv_swap_attention(q, k, v, 1.0, 2);
    const Eigen::MatrixXd b = multi_head_attention(q, k, v, 2, 1.0);
    CHECK((a - b).cwiseAbs().maxCoeff() == 0.0);
    for (int h = 0; h < 2; ++h) {
        const Eigen::MatrixXd w = attention_weights(q.middleCols(4 * h, 4), k.middleCols(4 * h, 4), 0.7);
        CHECK((w.rowwise().sum().array() - 1.0).abs().maxCoeff() < 1e-12);
    }
}

TEST_CASE("single style token returns its value row") {
    Eigen::MatrixXd q = Eigen::MatrixXd::Random(5, 3), k = Eigen::MatrixXd::Random(1, 3), v(1, 3);
    v << 0.25, -2.0, 7.5;
    const Eigen::MatrixXd out = kv_swap_attention(q, k, v, 0.7);
    for (Index i = 0; i < 5; ++i) CHECK((out.row(i) - v.row(0)).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("temperature 0.7 sharpens the two-token softmax") {
    Eigen::MatrixXd q(1, 2), k(2, 2);
    q << 1, 0;
    k << 1, 0, 0, 1;
    // p = e^l / (1 + e^l) with l = 1 / (gamma * sqrt(2)), evaluated by hand.
    const Eigen::RowVectorXd unit = attention_weights(q, k, 1.0).row(0);
    const Eigen::RowVectorXd sharp = attention_weights(q, k, 0.7).row(0);
    CHECK(unit(0) == doctest::Approx(0.6697615493266569).epsilon(1e-14));
    CHECK(sharp(0) == doctest::Approx(0.7330500013921482).epsilon(1e-14));
    CHECK(entropy(unit) == doctest::Approx(0.6343473743503625).epsilon(1e-13));
    CHECK(entropy(sharp) == doctest::Approx(0.5802015850606765).epsilon(1e-13));
    CHECK(entropy(sharp) < entropy(unit));
}

TEST_CASE("kv swap argument errors") {
    Eigen::MatrixXd q(2, 4), k(3, 2), v(3, 4);
    q.setOnes();
    k.setOnes();
    v.setOnes();
    CHECK_THROWS_AS(kv_swap_attention(q, k, v, 0.7), DimensionError);
    CHECK_THROWS_AS(kv_swap_attention(q, v, v, 0.0), ConfigError);
}

TEST_CASE("zero weight is a bitwise no-op") {
    std::mt19937_64 rng(2);
    const Tensor3d feat = oracle::random_tensor(rng, 5, 4, 6);
    const Tensor3d attn = oracle::random_tensor(rng, 5, 3, 3);
    const auto map = random_map(rng, 4, 6, 3, 3);
    CHECK(inject_correspondence(feat, attn, map, 0.0).data == feat.data);
    CHECK(inject_correspondence(feat, attn, map, 0.0, true).data == feat.data);
}

TEST_CASE("identity map with unit weight adds elementwise") {
    Tensor3d feat(1, 2, 2), attn(1, 2, 2);
    feat.data << 1, 2, 3, 4;
    attn.data << 10, 20, 30, 40;
    CorrespondenceMap id;
    id.source_height = id.source_width = id.target_height = id.target_width = 2;
    id.target = {0, 1, 2, 3};
    id.score = Eigen::VectorXd::Ones(4);
    const auto out = inject_correspondence(feat, attn, id, 1.0);
    Eigen::RowVector4d expected(11, 22, 33, 44);
    CHECK(out.data.row(0) == expected);
}

TEST_CASE("output minus features is linear in the weight") {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 20; ++trial) {
        const Tensor3d feat = oracle::random_tensor(rng, 6, 5, 5);
        const Tensor3d attn = oracle::random_tensor(rng, 6, 4, 7);
        const auto map = random_map(rng, 5, 5, 4, 7);
        const double w = 0.6 + 0.1 * trial;
        const auto once = inject_correspondence(feat, attn, map, w);
        const auto twice = inject_correspondence(feat, attn, map, 2 * w);
        CHECK(((twice.data - feat.data) - 2.0 * (once.data - feat.data)).cwiseAbs().maxCoeff() < 1e-12);
    }
}

TEST_CASE("untargeted attention cells do not matter") {
    std::mt19937_64 rng(4);
    const Tensor3d feat = oracle::random_tensor(rng, 3, 3, 3);
    Tensor3d attn = oracle::random_tensor(rng, 3, 3, 3);
    auto map = random_map(rng, 3, 3, 3, 3);
    for (auto& t : map.target) t = t == 4 ? 0 : t;
    const auto before = inject_correspondence(feat, attn, map, 0.6);
    attn.data.col(4).setConstant(1e6);
    CHECK(inject_correspondence(feat, attn, map, 0.6).data == before.data);
}

TEST_CASE("score modulation scales each match") {
    Tensor3d feat(1, 1, 2), attn(1, 1, 1);
    attn.data << 2.0;
    CorrespondenceMap m;
    m.source_height = 1;
    m.source_width = 2;
    m.target_height = m.target_width = 1;
    m.target = {0, 0};
    m.score = Eigen::Vector2d(0.5, -1.0);
    const auto out = inject_correspondence(feat, attn, m, 1.0, true);
    CHECK(out.data(0, 0) == 1.0);
    CHECK(out.data(0, 1) == -2.0);
}

TEST_CASE("map and grid mismatches are rejected") {
    std::mt19937_64 rng(5);
    const Tensor3d feat = oracle::random_tensor(rng, 3, 3, 3);
    const auto map = random_map(rng, 2, 2, 3, 3);
    CHECK_THROWS_AS(inject_correspondence(feat, feat, map, 0.6), DimensionError);
    const auto ok = random_map(rng, 3, 3, 3, 3);
    CHECK_THROWS_AS(inject_correspondence(feat, oracle::random_tensor(rng, 4, 3, 3), ok, 0.6), DimensionError);
}

TEST_CASE("gating follows the 1-based step count") {
    InjectionConfig cfg;
    CHECK(cfg.start_step == 49);
    CHECK_FALSE(injection_active(48, cfg));
    CHECK(injection_active(49, cfg));
    CHECK(injection_active(50, cfg));
    cfg.start_step = 1;
    for (int s = 1; s <= 50; ++s) CHECK(injection_active(s, cfg));
}

TEST_CASE("config validation") {
    InjectionConfig cfg;
    cfg.target_blocks = {"up_blocks.1.attn1"};
    CHECK_NOTHROW(cfg.validate(50));
    auto bad = cfg;
    bad.w = -0.1;
    CHECK_THROWS_AS(bad.validate(50), ConfigError);
    bad = cfg;
    bad.gamma = 1.5;
    CHECK_THROWS_AS(bad.validate(50), ConfigError);
    bad = cfg;
    bad.start_step = 51;
    CHECK_THROWS_AS(bad.validate(50), ConfigError);
    bad = cfg;
    bad.target_blocks.clear();
    CHECK_THROWS_AS(bad.validate(50), ConfigError);
}

TEST_CASE("injection that never fires equals plain kv swap sampling") {
    const auto bb = testing::default_backbone();
    CycleSettings settings;
    settings.locator = {21, "up_blocks.2"};
    settings.injection.target_blocks = default_injection_blocks(*bb, settings.locator.layer);
    const StageA a = run_stage_a(*bb, testing::content("house"), testing::style("dots"), settings);
    const auto& x_t = a.content_trajectory.back();
    auto swap = std::make_shared<KvSwapHook>(bb->model().attention_blocks(), a.style_bank, 0.7);
    const auto plain = bb->ddim_sample(x_t, {swap});

    InjectionConfig never = settings.injection;
    never.start_step = 51;
    auto idle = std::make_shared<CorrespondenceInjectionHook>(never, a.map, a.style_bank);
    CHECK(bb->ddim_sample(x_t, {swap, idle}).data.data == plain.data.data);

    auto live = std::make_shared<CorrespondenceInjectionHook>(settings.injection, a.map, a.style_bank);
    CHECK(bb->ddim_sample(x_t, {swap, live}).data.data != plain.data.data);
}

}
