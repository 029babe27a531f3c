#include "doctest.h"

#include "fd4mm/metrics.hpp"
#include "fd4mm/synth.hpp"

#include <cmath>
#include <numbers>

using namespace fd4mm;

TEST_SUITE("synth-bench") {

TEST_CASE("motion profile") {
    CHECK(motion_profile(0, 2.0, 60) == 0.0);
    CHECK(motion_profile(15, 20.0, 60) == doctest::Approx(20.0));
    CHECK(std::abs(motion_profile(30, 2.0, 60)) < 1e-12);
    CHECK(motion_profile(7, 2.0, 60) == doctest::Approx(motion_profile(67, 2.0, 60)).epsilon(1e-12));
    CHECK(motion_profile(10, 3.0, 60) == doctest::Approx(3.0 * std::sin(2.0 * std::numbers::pi * 10.0 / 60.0)));
}

TEST_CASE("spec defaults and validation") {
    const SynthSpec spec = nlohmann::json::object().get<SynthSpec>();
    CHECK(spec.period == 60);
    CHECK(spec.input_amplitude == 2.0);
    CHECK(spec.fps == 30.0);
    try {
        nlohmann::json({{"period", 0}}).get<SynthSpec>();
        FAIL("expected invalid_argument");
    } catch (const std::invalid_argument& e) {
        CHECK(std::string(e.what()).find("spec.period") != std::string::npos);
    }
    CHECK_THROWS_AS(nlohmann::json({{"noise_sigma", -0.1}}).get<SynthSpec>(), std::invalid_argument);
    CHECK_THROWS_AS(nlohmann::json({{"frame_count", 1}}).get<SynthSpec>(), std::invalid_argument);
    CHECK_THROWS_AS(nlohmann::json({{"alpha", "ten"}}).get<SynthSpec>(), std::invalid_argument);
    CHECK(nlohmann::json(nlohmann::json(spec).get<SynthSpec>()) == nlohmann::json(spec));
}

TEST_CASE("compositing") {
    const Scene scene = Scene::from_spec(SynthSpec{});
    const Tensor base = composite_frame(scene, 0.0).pixels();
    const Tensor fg_mask = scene.foreground[3] > 0;

    SUBCASE("integer shift moves the foreground rows") {
        const Tensor moved = composite_frame(scene, 3.0).pixels();
        const int64_t y0 = scene.rest_y, x0 = scene.rest_x, s = scene.foreground.size(1);
        const Tensor a = base.narrow(1, y0, s).narrow(2, x0, s);
        const Tensor b = moved.narrow(1, y0 + 3, s).narrow(2, x0, s);
        const Tensor inside = (scene.foreground[3] >= 1.0).unsqueeze(0).expand({3, s, s});
        CHECK((a - b).masked_select(inside).abs().max().item<double>() < 1e-6);
    }
    SUBCASE("half-pixel shift averages the neighbours") {
        const Tensor half = composite_frame(scene, 0.5).pixels();
        const Tensor avg = 0.5 * (base + composite_frame(scene, 1.0).pixels());
        CHECK((half - avg).abs().max().item<double>() < 1e-6);
    }
    SUBCASE("out of bounds") {
        CHECK_THROWS_AS(composite_frame(scene, 200.0), std::out_of_range);
    }
    CHECK(base.min().item<double>() >= 0.0);
    CHECK(base.max().item<double>() <= 1.0);
}

TEST_CASE("sequence synthesis") {
    SynthSpec spec;
    spec.frame_count = 12;
    spec.alpha = 1.0;
    const SamplePair same = synthesize_sequence(spec);
    REQUIRE(same.input.size() == 12);
    REQUIRE(same.gt.size() == 12);
    for (size_t t = 0; t < 12; ++t) {
        CHECK(torch::equal(same.input[t].pixels(), same.gt[t].pixels()));
    }

    spec.noise_sigma = 0.05;
    spec.alpha = 5.0;
    const SamplePair noisy = synthesize_sequence(spec);
    const SamplePair again = synthesize_sequence(spec);
    spec.noise_sigma = 0.0;
    const SamplePair clean = synthesize_sequence(spec);
    for (size_t t = 0; t < 12; ++t) {
        CHECK(torch::equal(noisy.input[t].pixels(), again.input[t].pixels()));
        CHECK(torch::equal(noisy.gt[t].pixels(), clean.gt[t].pixels()));
    }
    CHECK_FALSE(torch::equal(noisy.input[3].pixels(), clean.input[3].pixels()));

    for (double alpha : {5.0, 10.0, 20.0}) {
        spec.alpha = alpha;
        CHECK_NOTHROW(synthesize_sequence(spec));
    }
    for (double sigma : {0.01, 0.05, 0.1, 0.2}) {
        spec.alpha = 5.0;
        spec.noise_sigma = sigma;
        CHECK_NOTHROW(synthesize_sequence(spec));
    }
}

TEST_CASE("large alpha on a large canvas") {
    SynthSpec spec;
    spec.height = 640;
    spec.width = 640;
    spec.frame_count = 2;
    for (double alpha : {50.0, 100.0}) {
        spec.alpha = alpha;
        CHECK_NOTHROW(synthesize_sequence(spec));
    }
}

TEST_CASE("noise statistics") {
    const Frame clean(torch::full({3, 640, 640}, 0.5));
    CHECK(torch::equal(add_noise(clean, 0.0, 1, 0).pixels(), clean.pixels()));
    const double sigma = 0.05;
    const Frame noisy = add_noise(clean, sigma, 7, 3);
    const double mean = (noisy.pixels().to(torch::kFloat64) - 0.5).mean().item<double>();
    CHECK(std::abs(mean) < 3.0 * sigma / std::sqrt(3.0 * 640 * 640));
    CHECK(torch::equal(noisy.pixels(), add_noise(clean, sigma, 7, 3).pixels()));
    CHECK_FALSE(torch::equal(noisy.pixels(), add_noise(clean, sigma, 7, 4).pixels()));
    CHECK_THROWS(add_noise(clean, -1.0, 7, 3));
}

TEST_CASE("background outside the swept region is static") {
    SynthSpec spec;
    spec.frame_count = 30;
    spec.alpha = 5;
    const SamplePair pair = synthesize_sequence(spec);
    const Scene scene = Scene::from_spec(spec);
    for (const auto* seq : {&pair.input, &pair.gt}) {
        const double amplitude = seq == &pair.input ? spec.input_amplitude : spec.input_amplitude * spec.alpha;
        const Tensor outside = swept_region(scene, amplitude).logical_not();
        for (size_t t = 1; t < seq->size(); ++t) {
            CHECK(torch::equal((*seq)[t].pixels().masked_select(outside), (*seq)[0].pixels().masked_select(outside)));
        }
    }
}

TEST_CASE("displacement fidelity") {
    SynthSpec spec;
    spec.frame_count = 21;
    for (double alpha : {5.0, 10.0}) {
        spec.alpha = alpha;
        const SamplePair pair = synthesize_sequence(spec);
        for (int t : {5, 10, 15, 20}) {
            const Displacement in = estimate_displacement(pair.input[0], pair.input[t]);
            CHECK(std::abs(in.dy - motion_profile(t, 2.0, 60)) < 0.25);
            CHECK(std::abs(in.dx) < 0.25);
            const Displacement gt = estimate_displacement(pair.gt[0], pair.gt[t]);
            CHECK(std::abs(gt.dy - motion_profile(t, 2.0 * alpha, 60)) < 0.25 * std::max(1.0, alpha / 10.0));
        }
    }
}

TEST_CASE("horizontal and diagonal axes") {
    CHECK(axis_displacement(MotionAxis::Horizontal, 2.0) == std::pair<double, double>{0.0, 2.0});
    const auto d = axis_displacement(MotionAxis::Diagonal, 2.0);
    CHECK(d.first == doctest::Approx(std::sqrt(2.0)));
    CHECK(d.second == doctest::Approx(std::sqrt(2.0)));
    SynthSpec spec;
    spec.axis = MotionAxis::Horizontal;
    spec.frame_count = 16;
    const SamplePair pair = synthesize_sequence(spec);
    const Displacement est = estimate_displacement(pair.input[0], pair.input[15]);
    CHECK(std::abs(est.dx - 2.0) < 0.25);
}

TEST_CASE("procedural assets") {
    for (const char* name : {"flat", "gradient", "noise"}) {
        const Tensor bg = procedural_background(name, 32, 48, 3);
        CHECK(bg.sizes() == torch::IntArrayRef({3, 32, 48}));
        CHECK(bg.min().item<double>() >= 0.0);
        CHECK(bg.max().item<double>() <= 1.0);
    }
    for (const char* name : {"striped_disc", "checker_square", "noise_blob"}) {
        const Tensor fg = procedural_foreground(name, 24, 3);
        CHECK(fg.sizes() == torch::IntArrayRef({4, 24, 24}));
        CHECK(torch::equal(fg, procedural_foreground(name, 24, 3)));
    }
    CHECK_THROWS_AS(procedural_background("plaid", 8, 8, 0), std::invalid_argument);
}

}  // TEST_SUITE
