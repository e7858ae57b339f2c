#include <doctest.h>

#include <random>

#include "corrstyle/io.hpp"
#include "corrstyle/metrics.hpp"
#include "helpers.hpp"

using namespace corrstyle;

namespace {

Eigen::MatrixXd gaussian(std::mt19937_64& rng, Index n, Index d, const Eigen::VectorXd& mean) {
    std::normal_distribution<double> g;
    Eigen::MatrixXd x(n, d);
    for (Index i = 0; i < n; ++i)
        for (Index j = 0; j < d; ++j) x(i, j) = mean(j) + g(rng);
    return x;
}

std::vector<Image> fixture_images() {
    std::vector<Image> out;
    for (const auto& n : testing::content_names()) out.push_back(testing::content(n));
    return out;
}

}  // namespace

TEST_SUITE("metrics") {

TEST_CASE("artfid reproduces the published row") {
    CHECK(std::abs(artfid(0.549, 18.432) - 30.100) <= 1e-3);
    CHECK(artfid(0, 0) == 1.0);
    CHECK(artfid(1, 1) == 4.0);
    CHECK(artfid(0.5, 2.0) < artfid(0.6, 2.0));
    CHECK(artfid(0.5, 2.0) < artfid(0.5, 2.1));
    CHECK_THROWS_AS(artfid(-0.1, 1.0), ValidationError);
    CHECK_THROWS_AS(artfid(0.1, -1.0), ValidationError);
}

TEST_CASE("lpips and cfsd vanish on identical fixtures") {
    const auto& ex = testing::extractor();
    for (const auto& im : fixture_images()) {
        CHECK(lpips(im, im, ex) == 0.0);
        CHECK(cfsd(im, im, ex) == 0.0);
    }
}

TEST_CASE("lpips is symmetric and positive on distinct images") {
    const auto& ex = testing::extractor();
    const Image a = testing::content("house"), b = testing::content("boat");
    CHECK(lpips(a, b, ex) == doctest::Approx(lpips(b, a, ex)).epsilon(1e-12));
    CHECK(lpips(a, b, ex) > 0.0);
    CHECK_THROWS_AS(lpips(a, Image(3, 64, 64), ex), DimensionError);
}

TEST_CASE("fid of the fixture embeddings against themselves is zero") {
    const auto& ex = testing::extractor();
    const auto images = fixture_images();
    Eigen::MatrixXd emb(Index(images.size()), ex.embedding(images[0]).size());
    for (std::size_t i = 0; i < images.size(); ++i) emb.row(Index(i)) = ex.embedding(images[i]).transpose();
    CHECK(fid(emb, emb) <= 1e-6);
}

TEST_CASE("fid matches the general eigensolver oracle on 16 vectors") {
    std::mt19937_64 rng(7);
    for (int trial = 0; trial < 5; ++trial) {
        const Eigen::MatrixXd a = gaussian(rng, 16, 6, Eigen::VectorXd::Zero(6));
        Eigen::MatrixXd b = gaussian(rng, 16, 6, Eigen::VectorXd::Constant(6, 0.3 * trial));
        b.col(0) *= 2.0;
        const double ref = oracle::eigen_fid(a, b);
        CHECK(fid(a, b) == doctest::Approx(ref).epsilon(1e-8));
        CHECK(std::abs(fid(a, b) - fid(b, a)) <= 1e-6);
    }
}

TEST_CASE("fid approaches the squared mean offset for unit gaussians") {
    std::mt19937_64 rng(8);
    Eigen::VectorXd v(4);
    v << 1.0, 2.0, 0.0, -1.0;
    const double f = fid(gaussian(rng, 10000, 4, Eigen::VectorXd::Zero(4)), gaussian(rng, 10000, 4, v));
    CHECK(std::abs(f - v.squaredNorm()) <= 0.05 * v.squaredNorm());
}

TEST_CASE("fid input errors") {
    CHECK_THROWS_AS(fid(Eigen::MatrixXd::Ones(1, 3), Eigen::MatrixXd::Ones(4, 3)), ValidationError);
    CHECK_THROWS_AS(fid(Eigen::MatrixXd::Random(4, 3), Eigen::MatrixXd::Random(4, 2)), DimensionError);
    Eigen::MatrixXd bad = Eigen::MatrixXd::Identity(2, 2);
    bad(0, 0) = -5.0;
    CHECK_THROWS_AS(trace_sqrt_product(bad, Eigen::MatrixXd::Identity(2, 2)), NumericalError);
}

TEST_CASE("cfsd matches a hand-computed four-row toy") {
    Tensor3d fc(2, 2, 2), fs(2, 2, 2);
    fc.data << 1, 0, 1, 0, 0, 1, 1, 0;
    fs.data << 1, 1, 0, 0, 0, 0, 1, 1;
    CHECK(cfsd_from_features(fc, fs) == doctest::Approx(0.2043645452507457).epsilon(1e-13));
    Eigen::MatrixXd a(2, 4), b(2, 4);
    a << 1, 0, 1, 0, 0, 1, 1, 0;
    b << 1, 1, 0, 0, 0, 0, 1, 1;
    CHECK(oracle::naive_cfsd(a, b) == doctest::Approx(0.2043645452507457).epsilon(1e-13));
}

TEST_CASE("cfsd agrees with the loop oracle and is non-negative") {
    std::mt19937_64 rng(9);
    for (int trial = 0; trial < 5; ++trial) {
        const Tensor3d a = oracle::random_tensor(rng, 5, 6, 7), b = oracle::random_tensor(rng, 5, 6, 7);
        const double v = cfsd_from_features(a, b);
        CHECK(v >= 0.0);
        CHECK(v == doctest::Approx(oracle::naive_cfsd(a.data, b.data)).epsilon(1e-10));
        const Eigen::MatrixXd s = self_correlation_softmax(a);
        CHECK((s.rowwise().sum().array() - 1.0).abs().maxCoeff() < 1e-6);
    }
    CHECK_THROWS_AS(cfsd_from_features(Tensor3d(2, 2, 2), Tensor3d(2, 2, 3)), DimensionError);
}

TEST_CASE("extractor layers and weights") {
    const auto& ex = testing::extractor();
    CHECK(ex.id() == "builtin:oriented-pyramid");
    CHECK(ex.layers().size() == 5);
    for (std::size_t l = 0; l < ex.layers().size(); ++l) CHECK(ex.lpips_weights(l).minCoeff() >= 0.0);
    const auto f = ex.features(testing::content("house"));
    CHECK(f.size() == 5);
    CHECK(f[0].channels() == 19);
    CHECK_THROWS_AS(ex.layer_index("conv9"), ConfigError);
    CHECK_THROWS_AS(load_extractor("hf:vgg16-lpips"), CheckpointError);
}

TEST_CASE("asset manifest checks hashes") {
    const auto dir = std::filesystem::temp_directory_path() / "corrstyle_assets_test";
    std::filesystem::remove_all(dir);
    write_text_atomic(dir / "cache" / "w.bin", "weights");
    const std::string good = sha256_hex("weights");
    write_text_atomic(dir / "assets.jsonl", "{\"name\":\"a\",\"url\":\"https://example.invalid/w.bin\",\"sha256\":\"" +
                                                good + "\",\"file\":\"w.bin\"}\n{\"name\":\"b\",\"url\":\"u\","
                                                "\"sha256\":\"00\",\"file\":\"w.bin\"}\n");
    const auto m = AssetManifest::load(dir / "assets.jsonl", dir / "cache");
    CHECK(m.verified("a").sha256 == good);
    CHECK_THROWS_AS(m.verified("b"), CheckpointError);
    CHECK_THROWS_AS(m.verified("c"), CheckpointError);
}

TEST_CASE("metric report round trip keeps artfid consistent") {
    MetricReport r;
    r.lpips = 0.549;
    r.fid = 18.432;
    r.cfsd = 0.1234567890123;
    r.finalize();
    r.extractor = r.fid_extractor = "builtin:oriented-pyramid";
    r.config_hash = "abc";
    r.config = {{"injection.w", "0.6"}};
    r.datasets = {"suite"};
    PairMetrics ok;
    ok.content_id = "house";
    ok.style_id = "dots";
    ok.lpips = 0.1;
    ok.iterations = 3;
    ok.stop_reason = "threshold";
    PairMetrics bad;
    bad.content_id = "boat";
    bad.style_id = "ink";
    bad.ok = false;
    bad.error = "boom";
    r.pairs = {ok, bad};
    r.excluded = 1;
    const auto back = MetricReport::from_json(r.to_json());
    CHECK(back.to_json() == r.to_json());
    CHECK(back.artfid == (1 + back.lpips) * (1 + back.fid));
    CHECK(back.cfsd == r.cfsd);
    CHECK(back.pairs.size() == 2);
    CHECK_FALSE(back.pairs[1].ok);
    CHECK_THROWS_AS(MetricReport::from_json("{}"), ValidationError);
}

}
