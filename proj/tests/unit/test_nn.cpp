#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <limits>

#include "objsearch/checkpoint.hpp"
#include "objsearch/nn.hpp"
#include "support.hpp"

using namespace objsearch;
using namespace objsearch::nn;

TEST(Dense, ZeroParamsGiveZeroOutput) {
    ParamStore p;
    const Dense d = Dense::create(p, "d", 3, 2);
    std::vector<double> y(2, 7.0);
    d.forward(p, std::vector<double>{1, 2, 3}, y);
    EXPECT_EQ(y, (std::vector<double>{0, 0}));
}

TEST(Dense, IdentityWeightsPassInputThrough) {
    ParamStore p;
    const Dense d = Dense::create(p, "d", 3, 3);
    for (std::size_t i = 0; i < 3; ++i) p[d.weight].at(i, i) = 1.0;
    const std::vector<double> v{0.5, -2.0, 3.25};
    std::vector<double> y(3);
    d.forward(p, v, y);
    EXPECT_EQ(y, v);
}

TEST(Dense, ShapeMismatchRejected) {
    ParamStore p;
    const Dense d = Dense::create(p, "d", 3, 2);
    std::vector<double> y(2);
    EXPECT_THROW(d.forward(p, std::vector<double>{1, 2}, y), ShapeError);
}

TEST(Softmax, EqualLogitsUniform) {
    std::vector<double> logits(8, 1.7), pi(8);
    softmax(logits, pi);
    for (double p : pi) EXPECT_DOUBLE_EQ(p, 0.125);
}

TEST(Softmax, SumsToOneAndPositive) {
    Rng rng(3);
    std::vector<double> logits(8), pi(8), logp(8);
    for (int t = 0; t < 500; ++t) {
        for (double& l : logits) l = 30.0 * (rng.uniform() - 0.5);
        softmax(logits, pi);
        log_softmax(logits, logp);
        double s = 0.0;
        for (std::size_t i = 0; i < 8; ++i) {
            EXPECT_GT(pi[i], 0.0);
            EXPECT_NEAR(std::log(pi[i]), logp[i], 1e-9);
            s += pi[i];
        }
        EXPECT_NEAR(s, 1.0, 1e-9);
    }
}

TEST(Entropy, KnownValues) {
    EXPECT_NEAR(entropy(std::vector<double>(8, 0.125)), std::log(8.0), 1e-12);
    EXPECT_DOUBLE_EQ(entropy(std::vector<double>{1, 0, 0, 0, 0, 0, 0, 0}), 0.0);
    EXPECT_NEAR(entropy(std::vector<double>{0.5, 0.5, 0, 0, 0, 0, 0, 0}), std::log(2.0), 1e-12);
}

TEST(Gradient, SquareAtThree) {
    ParamStore p;
    const auto w = p.add("w", 1, 1);
    p[w].data[0] = 3.0;
    ParamStore g = p.zeros_like();
    g[w].data[0] = 2.0 * p[w].data[0];
    EXPECT_DOUBLE_EQ(g[w].data[0], 6.0);
    const double err = testing_support::max_gradient_error(p, g, [&] { return p[w].data[0] * p[w].data[0]; });
    EXPECT_LT(err, 1e-8);
}

TEST(Gradient, ReluBlocksNegativePreActivation) {
    const std::vector<double> pre{-1.0, 2.0, 0.0};
    const std::vector<double> dy{5.0, 5.0, 5.0};
    std::vector<double> dx(3);
    relu_backward(pre, dy, dx);
    EXPECT_EQ(dx, (std::vector<double>{0.0, 5.0, 0.0}));
}

TEST(Gradient, TwoLayerNetMatchesFiniteDifferences) {
    Rng rng(12);
    for (int trial = 0; trial < 5; ++trial) {
        ParamStore p;
        const Dense a = Dense::create(p, "a", 5, 4);
        const Dense b = Dense::create(p, "b", 4, 3);
        for (auto id : {a.weight, b.weight}) glorot_uniform(p[id], rng);
        for (auto id : {a.bias, b.bias})
            for (double& v : p[id].data) v = 0.3 * rng.normal();
        std::vector<double> x(5), target(3);
        for (double& v : x) v = rng.normal();
        for (double& v : target) v = rng.normal();

        const auto loss = [&](ParamStore* grads) {
            std::vector<double> h_pre(4), h(4), y(3);
            a.forward(p, x, h_pre);
            relu(h_pre, h);
            b.forward(p, h, y);
            double l = 0.0;
            std::vector<double> dy(3);
            for (std::size_t i = 0; i < 3; ++i) {
                l += 0.5 * (y[i] - target[i]) * (y[i] - target[i]);
                dy[i] = y[i] - target[i];
            }
            if (grads) {
                std::vector<double> dh(4), dh_pre(4);
                b.backward(p, h, dy, *grads, dh);
                relu_backward(h_pre, dh, dh_pre);
                a.backward(p, x, dh_pre, *grads, {});
            }
            return l;
        };
        ParamStore g = p.zeros_like();
        loss(&g);
        EXPECT_LT(testing_support::max_gradient_error(p, g, [&] { return loss(nullptr); }), 1e-4);
    }
}

TEST(Sgd, Example) {
    ParamStore p;
    const auto w = p.add("w", 1, 1);
    p[w].data[0] = 1.0;
    ParamStore g = p.zeros_like();
    g[w].data[0] = 2.0;
    sgd_step(p, g, 0.1);
    EXPECT_DOUBLE_EQ(p[w].data[0], 0.8);
}

TEST(Sgd, ZeroGradientLeavesParams) {
    ParamStore p;
    const auto w = p.add("w", 2, 2);
    p[w].data = {1, 2, 3, 4};
    const ParamStore before = p;
    sgd_step(p, p.zeros_like(), 0.5);
    EXPECT_EQ(p, before);
}

TEST(Sgd, NonFiniteGradientRejected) {
    ParamStore p;
    const auto w = p.add("layer.weight", 1, 2);
    ParamStore g = p.zeros_like();
    g[w].data[1] = std::numeric_limits<double>::quiet_NaN();
    try {
        sgd_step(p, g, 0.1);
        FAIL();
    } catch (const NonFiniteError& e) {
        EXPECT_NE(std::string(e.what()).find("layer.weight"), std::string::npos);
    }
    EXPECT_THROW(sgd_step(p, p.zeros_like(), -1.0), ConfigError);
}

TEST(ClipGradNorm, ScalesDownOnlyAboveLimit) {
    ParamStore g;
    const auto w = g.add("w", 1, 2);
    g[w].data = {3.0, 4.0};
    EXPECT_DOUBLE_EQ(clip_grad_norm(g, 10.0), 5.0);
    EXPECT_EQ(g[w].data, (std::vector<double>{3.0, 4.0}));
    clip_grad_norm(g, 1.0);
    EXPECT_NEAR(std::sqrt(g.squared_norm()), 1.0, 1e-12);
}

TEST(ParamStore, FlatRoundTripAndShapeCheck) {
    ParamStore p;
    p.add("a", 2, 3);
    p.add("b", 1, 3);
    std::vector<double> v(9);
    for (std::size_t i = 0; i < 9; ++i) v[i] = 0.1 * static_cast<double>(i);
    p.assign_flat(v);
    EXPECT_EQ(p.flat(), v);
    EXPECT_THROW(p.assign_flat(std::vector<double>(8)), ShapeError);
    EXPECT_THROW(p.add("a", 1, 1), ShapeError);
    EXPECT_THROW(p.find("c"), UnknownIdError);
}

TEST(Checkpoint, BitExactRoundTrip) {
    Checkpoint c{"test", {{"note", "x"}}, {}};
    c.params.add("w", 3, 2);
    c.params.add("b", 1, 2);
    Rng rng(9);
    std::vector<double> v(8);
    for (double& x : v) x = rng.normal() * 1e-3 + 1.0 / 3.0;
    v[0] = -0.0;
    v[1] = std::numeric_limits<double>::denorm_min();
    c.params.assign_flat(v);
    const auto dir = testing_support::scratch_dir("ckpt");
    save_checkpoint(dir / "c.bin", c);
    const Checkpoint back = load_checkpoint(dir / "c.bin");
    EXPECT_EQ(back.kind, "test");
    EXPECT_EQ(back.meta, c.meta);
    EXPECT_EQ(back.params, c.params);
    EXPECT_TRUE(std::signbit(back.params.flat()[0]));
}

TEST(Checkpoint, CorruptFilesRejected) {
    const auto dir = testing_support::scratch_dir("ckpt_bad");
    std::ofstream(dir / "junk.bin") << "not a checkpoint at all";
    EXPECT_THROW(load_checkpoint(dir / "junk.bin"), ParseError);
    EXPECT_THROW(load_checkpoint(dir / "absent.bin"), IoError);

    Checkpoint c{"test", nlohmann::json::object(), {}};
    c.params.add("w", 4, 4);
    save_checkpoint(dir / "full.bin", c);
    std::ifstream in(dir / "full.bin", std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)), {});
    std::ofstream(dir / "short.bin", std::ios::binary) << bytes.substr(0, bytes.size() - 10);
    EXPECT_THROW(load_checkpoint(dir / "short.bin"), ParseError);
}
