#include "doctest.h"
#include "oracles.hpp"

#include "fd4mm/model.hpp"
#include "fd4mm/objectives.hpp"

using namespace fd4mm;

namespace {

ModelConfig tiny_config() {
    ModelConfig cfg;
    cfg.encoder.base_channels = 4;
    return cfg;
}

}  // namespace

TEST_SUITE("magnify-recouple") {

TEST_CASE("magnifier skip is exact") {
    torch::manual_seed(31);
    Magnifier mag(16);
    const Tensor l = torch::randn({2, 16, 4, 4});
    const Tensor d = torch::randn({2, 16, 4, 4});

    SUBCASE("zero filtered motion") {
        CHECK(torch::equal(mag->forward(l, torch::zeros_like(d), torch::tensor(10.0)), l));
    }
    SUBCASE("zero weights") {
        {
            torch::NoGradGuard no_grad;
            for (auto& p : mag->parameters()) {
                p.zero_();
            }
        }
        for (double alpha : {0.0, 5.0, 100.0}) {
            const Tensor out = mag->forward(l, d, torch::tensor(alpha));
            CHECK((out - l).abs().max().item<double>() == 0.0);
        }
    }
    SUBCASE("alpha range and validation") {
        for (double alpha : {5.0, 10.0, 20.0, 50.0, 100.0}) {
            CHECK_NOTHROW(mag->forward(l, d, torch::tensor(alpha)));
        }
        CHECK_NOTHROW(mag->forward(l, d, torch::tensor({5.0, 7.0})));
        CHECK_THROWS_AS(mag->forward(l, d, torch::tensor(-1.0)), std::invalid_argument);
        CHECK_THROWS_AS(mag->forward(l, d, torch::tensor(INFINITY)), std::invalid_argument);
        CHECK_THROWS_AS(mag->forward(l, d, torch::tensor({1.0, 2.0, 3.0})), ShapeError);
    }
}

TEST_CASE("alpha enters only through the magnifier") {
    torch::manual_seed(32);
    MagnificationNet net(tiny_config());
    net->to(torch::kFloat64);
    {
        torch::NoGradGuard no_grad;
        net->magnifier->inner->weight.zero_();
        net->magnifier->inner->bias.zero_();
    }
    const Tensor ref = torch::rand({1, 3, 16, 16}, torch::kFloat64);
    const Tensor query = torch::rand({1, 3, 16, 16}, torch::kFloat64);
    const Tensor alpha = torch::tensor(10.0, torch::kFloat64).requires_grad_(true);
    net->forward(ref, query, alpha).sum().backward();
    CHECK(alpha.grad().abs().item<double>() == 0.0);
}

TEST_CASE("sub-pixel shuffle") {
    torch::manual_seed(33);
    const Tensor x = torch::randn({1, 24, 8, 8});
    const Tensor y = subpixel_shuffle(x);
    CHECK(y.sizes() == torch::IntArrayRef({1, 6, 16, 16}));
    CHECK(torch::equal(std::get<0>(x.flatten().sort()), std::get<0>(y.flatten().sort())));
    // Channel 4c + 2i + j lands at (2y + i, 2x + j) of output channel c.
    CHECK(y[0][1][5][6].item<float>() == x[0][4 + 2 * 1 + 0][2][3].item<float>());
    CHECK_THROWS_AS(subpixel_shuffle(torch::randn({1, 6, 4, 4})), ShapeError);

    SubpixelUpsample up(96, 48);
    CHECK(up->forward(torch::randn({1, 96, 8, 8})).sizes() == torch::IntArrayRef({1, 48, 16, 16}));
}

TEST_CASE("mixer level shape and nonnegative attention") {
    torch::manual_seed(34);
    MixerLevel mix(AttentionConfig{96, 8, QueryPool::Max}, 2, 4);
    std::vector<Tensor> attention;
    const Tensor out = mix->forward_collect(torch::randn({1, 96, 8, 8}), torch::randn({1, 96, 8, 8}), attention);
    CHECK(out.sizes() == torch::IntArrayRef({1, 96, 8, 8}));
    REQUIRE(attention.size() == 4);
    for (const auto& a : attention) {
        CHECK(a.min().item<double>() >= 0.0);
    }
    CHECK_THROWS(mix->forward(torch::randn({1, 96, 8, 8}), torch::randn({1, 96, 4, 4})));
}

TEST_CASE("mixer layer counts") {
    MagnificationNet net(ModelConfig{});
    CHECK(net->mixers[0]->layers() == 6);
    CHECK(net->mixers[1]->layers() == 4);
    CHECK(net->mixers[2]->layers() == 4);
    CHECK(net->mixers[2]->blocks[0]->config().heads == 8);
}

TEST_CASE("end-to-end shape and clamping") {
    torch::manual_seed(35);
    MagnificationNet net(ModelConfig{});
    const Frame ref(torch::rand({3, 64, 64}));
    const Frame query(torch::rand({3, 64, 64}));
    const Frame out = net->magnify(ref, query, 10.0);
    CHECK(out.pixels().sizes() == torch::IntArrayRef({3, 64, 64}));
    CHECK(out.pixels().min().item<double>() >= 0.0);
    CHECK(out.pixels().max().item<double>() <= 1.0);
    CHECK_THROWS_AS(net->magnify(ref, Frame(torch::rand({3, 64, 72})), 10.0), ShapeError);
    CHECK_THROWS(net->magnify(ref, query, -1.0));
}

TEST_CASE("parameter budget") {
    MagnificationNet net(ModelConfig{});
    const int64_t n = parameter_count(*net);
    MESSAGE("parameters at C=24: " << n);
    CHECK(n >= 1'100'000);
    CHECK(n <= 1'840'000);
}

TEST_CASE("magnify sequence pairing") {
    torch::manual_seed(36);
    MagnificationNet net(tiny_config());
    std::vector<Frame> two{Frame(torch::rand({3, 16, 16})), Frame(torch::rand({3, 16, 16}))};
    const auto s = magnify_sequence(net, two, {10.0, MagnifyMode::Static});
    const auto d = magnify_sequence(net, two, {10.0, MagnifyMode::Dynamic});
    REQUIRE(s.size() == 2);
    CHECK(torch::equal(s[0].pixels(), two[0].pixels()));
    CHECK(torch::equal(s[1].pixels(), d[1].pixels()));

    std::vector<Frame> three = two;
    three.push_back(Frame(torch::rand({3, 16, 16})));
    const auto s3 = magnify_sequence(net, three, {10.0, MagnifyMode::Static});
    const auto d3 = magnify_sequence(net, three, {10.0, MagnifyMode::Dynamic});
    CHECK(s3.size() == 3);
    CHECK(torch::equal(s3[2].pixels(), net->magnify(three[0], three[2], 10.0).pixels()));
    CHECK(torch::equal(d3[2].pixels(), net->magnify(three[1], three[2], 10.0).pixels()));
}

TEST_CASE("model config json round trip") {
    ModelConfig cfg;
    cfg.encoder.levels = 2;
    cfg.activation = AttentionActivation::Softmax;
    const nlohmann::json j = cfg;
    const ModelConfig back = j.get<ModelConfig>();
    CHECK(nlohmann::json(back) == j);
    CHECK_THROWS_AS(nlohmann::json({{"attention", "tanh"}}).get<ModelConfig>(), std::invalid_argument);
}

TEST_CASE("full tiny model gradient check") {
    torch::manual_seed(37);
    MagnificationNet net(tiny_config());
    net->to(torch::kFloat64);
    {
        // Move away from the identity-branch initialization so every group carries gradient.
        torch::NoGradGuard no_grad;
        for (auto& p : net->parameters()) {
            p.add_(0.05 * torch::randn_like(p));
        }
    }
    const Tensor ref = torch::rand({2, 3, 16, 16}, torch::kFloat64);
    const Tensor query = torch::rand({2, 3, 16, 16}, torch::kFloat64);
    const Tensor gt = torch::rand({2, 3, 16, 16}, torch::kFloat64);
    const Tensor alpha = torch::tensor({4.0, 9.0}, torch::kFloat64);
    FilterBankBackend backend;
    std::vector<std::pair<std::string, Tensor>> params;
    for (const auto& item : net->named_parameters()) {
        params.emplace_back(item.key(), item.value());
    }
    const auto checks = oracle::check_gradients(params, [&] {
        return total_loss(net->forward(ref, query, alpha), gt, query, backend, LossConfig{}).total;
    });
    double worst = 0.0;
    for (const auto& c : checks) {
        INFO(c.name << " analytic " << c.analytic << " numeric " << c.numeric);
        CHECK(c.relative_error < 1e-3);
        worst = std::max(worst, c.relative_error);
    }
    MESSAGE("parameter tensors checked: " << checks.size() << ", worst relative error " << worst);
}

}  // TEST_SUITE
