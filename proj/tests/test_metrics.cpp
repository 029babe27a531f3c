#include "doctest.h"
#include "oracles.hpp"

#include "fd4mm/metrics.hpp"
#include "fd4mm/synth.hpp"

using namespace fd4mm;

TEST_SUITE("metrics") {

TEST_CASE("ssim against the scalar loop") {
    torch::manual_seed(51);
    for (int i = 0; i < 5; ++i) {
        const Tensor a = torch::rand({3, 24, 20});
        const Tensor b = (a + 0.2 * torch::randn({3, 24, 20})).clamp(0, 1);
        CHECK(std::abs(ssim(a, b) - oracle::ssim(a, b)) < 1e-6);
    }
    CHECK_THROWS_AS(ssim(torch::rand({3, 8, 8}), torch::rand({3, 8, 8})), ShapeError);
    CHECK_THROWS_AS(ssim(torch::rand({3, 16, 16}), torch::rand({3, 16, 24})), ShapeError);
}

TEST_CASE("ssim identities") {
    torch::manual_seed(52);
    const Frame a(torch::rand({3, 32, 32}));
    const Frame b(torch::rand({3, 32, 32}));
    CHECK(ssim(a, a) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(ssim(a, b) == ssim(b, a));
    CHECK(ssim(a, b) < 1.0 - 1e-9);
    const Frame tiny(a.pixels() + 1e-3 * (b.pixels() - a.pixels()));
    CHECK(ssim(a, tiny) < 1.0);
}

TEST_CASE("constant offset changes only the luminance term") {
    torch::manual_seed(53);
    const Tensor a = 0.2 + 0.5 * torch::rand({3, 32, 32}, torch::kFloat64);
    const Tensor b = 0.2 + 0.5 * torch::rand({3, 32, 32}, torch::kFloat64);
    const SsimTerms base = ssim_terms(a, b);
    const SsimTerms shifted = ssim_terms(a + 0.1, b + 0.1);
    CHECK(shifted.structure == doctest::Approx(base.structure).epsilon(1e-9));
    CHECK(shifted.contrast == doctest::Approx(base.contrast).epsilon(1e-9));
    CHECK(shifted.luminance != doctest::Approx(base.luminance).epsilon(1e-9));
}

TEST_CASE("perceptual distance") {
    torch::manual_seed(54);
    FilterBankBackend backend;
    const Frame a(torch::rand({3, 32, 32}));
    const Frame b(torch::rand({3, 32, 32}));
    CHECK(perceptual_distance(a, a, &backend) == 0.0);
    CHECK(perceptual_distance(a, b, &backend) == doctest::Approx(perceptual_distance(b, a, &backend)).epsilon(1e-12));
    double last = -1.0;
    for (double s : {0.0, 0.25, 0.5, 0.75, 1.0}) {
        const Frame blend(a.pixels() + s * (b.pixels() - a.pixels()));
        const double d = perceptual_distance(a, blend, &backend);
        CHECK(d >= last);
        last = d;
    }
    try {
        perceptual_distance(a, b, nullptr);
        FAIL("expected an error");
    } catch (const std::invalid_argument& e) {
        CHECK(std::string(e.what()) == "perceptual backend not initialized");
    }
}

TEST_CASE("displacement estimator") {
    const SamplePair pair = [] {
        SynthSpec spec;
        spec.frame_count = 2;
        return synthesize_sequence(spec);
    }();
    const Frame& f0 = pair.input[0];

    const Displacement zero = estimate_displacement(f0, f0);
    CHECK(std::abs(zero.dy) < 1e-9);
    CHECK(std::abs(zero.dx) < 1e-9);

    SUBCASE("circular integer shift") {
        torch::manual_seed(55);
        const Frame tex(torch::rand({3, 64, 64}));
        const Frame down(torch::roll(tex.pixels(), {3}, {1}));
        const Displacement d = estimate_displacement(tex, down);
        CHECK(std::abs(d.dy - 3.0) < 0.05);
        CHECK(std::abs(d.dx) < 0.05);
    }
    SUBCASE("rendered sub-pixel shift and antisymmetry") {
        const Scene scene = Scene::from_spec(pair.spec);
        const Frame moved = composite_frame(scene, 1.5);
        const Displacement d = estimate_displacement(f0, moved);
        CHECK(std::abs(d.dy - 1.5) < 0.25);
        const Displacement back = estimate_displacement(moved, f0);
        CHECK(std::abs(d.dy + back.dy) < 0.05);
        CHECK(std::abs(d.dx + back.dx) < 0.05);
    }
    SUBCASE("roi") {
        const Scene scene = Scene::from_spec(pair.spec);
        const Displacement d =
            estimate_displacement(f0, composite_frame(scene, 2.0), Roi{scene.rest_y - 8, scene.rest_x - 8, 64, 64});
        CHECK(std::abs(d.dy - 2.0) < 0.25);
        CHECK_THROWS_AS(estimate_displacement(f0, f0, Roi{100, 100, 64, 64}), std::out_of_range);
    }
    SUBCASE("flat input") {
        const Frame flat(torch::full({3, 32, 32}, 0.5));
        try {
            estimate_displacement(flat, flat);
            FAIL("expected an error");
        } catch (const std::runtime_error& e) {
            CHECK(std::string(e.what()).find("no correlation peak") != std::string::npos);
        }
    }
}

TEST_CASE("metric report json") {
    torch::manual_seed(56);
    FilterBankBackend backend;
    std::vector<Frame> a, b;
    for (int i = 0; i < 4; ++i) {
        a.emplace_back(torch::rand({3, 16, 16}));
        b.emplace_back(torch::rand({3, 16, 16}));
    }
    const MetricReport r = evaluate_frames(a, b, backend, 1);
    CHECK(r.ssim.size() == 3);
    CHECK(r.perceptual.size() == 3);
    const nlohmann::json j = r;
    CHECK(j.at("perceptual_backend_kind") == "deterministic-filterbank");
    CHECK(j.at("external_score").is_null());
    CHECK(j.at("mean_ssim").get<double>() == doctest::Approx(r.mean_ssim()));
    CHECK_FALSE(j.contains("displacement_error"));
    CHECK_THROWS(evaluate_frames(a, std::vector<Frame>(b.begin(), b.begin() + 2), backend));
}

}  // TEST_SUITE
