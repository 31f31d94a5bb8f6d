#include <gtest/gtest.h>

#include <cmath>

#include "objsearch/eval.hpp"
#include "objsearch/scene_io.hpp"
#include "objsearch/trainer.hpp"
#include "support.hpp"

using namespace objsearch;

namespace {

PolicyConfig small_config() { return {6, 4, 5}; }

struct SegmentData {
    std::vector<std::vector<double>> views, targets;
    Segment seg;
};

SegmentData random_segment(Rng& rng, std::size_t n, std::size_t branches) {
    SegmentData d;
    d.views.resize(n);
    d.targets.resize(n);
    for (std::size_t t = 0; t < n; ++t) {
        d.views[t].resize(6);
        d.targets[t].resize(6);
        for (double& v : d.views[t]) v = rng.normal();
        for (double& v : d.targets[t]) v = rng.normal();
    }
    for (std::size_t t = 0; t < n; ++t) {
        SegmentStep s;
        s.branch = rng.below(branches);
        s.view = d.views[t];
        s.target = d.targets[t];
        for (double& x : s.loc) x = rng.uniform() < 0.3 ? 1.0 : 0.0;
        s.action = rng.below(kNumActions);
        s.reward = rng.uniform(-0.1, 0.5);
        d.seg.steps.push_back(s);
    }
    d.seg.bootstrap = rng.normal();
    return d;
}

Policy random_policy(Rng& rng, std::uint64_t seed) {
    Policy p(small_config(), {"s0", "s1"}, seed);
    auto flat = p.params().flat();
    for (double& v : flat) v += 0.3 * rng.normal();
    p.params().assign_flat(flat);
    return p;
}

Scene seeded_scene(std::uint64_t seed, int objects) {
    SyntheticOptions opt;
    opt.seed = seed;
    opt.n_objects = objects;
    return generate_synthetic(opt);
}

TrainConfig quick(std::size_t episodes) {
    TrainConfig c = TrainConfig::desk();
    c.episodes = episodes;
    c.max_steps = 200;
    return c;
}

} // namespace

TEST(Returns, BootstrappedNStep) {
    Segment seg;
    for (double r : {1.0, 0.0, 2.0}) {
        SegmentStep s;
        s.reward = r;
        seg.steps.push_back(s);
    }
    seg.bootstrap = 10.0;
    const auto R = discounted_returns(seg, 0.5);
    EXPECT_DOUBLE_EQ(R[2], 2.0 + 0.5 * 10.0);
    EXPECT_DOUBLE_EQ(R[1], 0.0 + 0.5 * 7.0);
    EXPECT_DOUBLE_EQ(R[0], 1.0 + 0.5 * 3.5);
}

TEST(A2C, LossGradientMatchesFiniteDifferences) {
    Rng rng(11);
    for (int trial = 0; trial < 6; ++trial) {
        Policy p = random_policy(rng, 50 + trial);
        const auto data = random_segment(rng, 3, 2);
        const double beta = trial < 3 ? 0.01 : 0.5;
        std::vector<double> adv(3);
        for (double& a : adv) a = rng.normal();
        auto grads = p.params().zeros_like();
        a2c_loss(p, data.seg, beta, 0.9, adv, &grads);
        const double err = testing_support::max_gradient_error(
            p.params(), grads, [&] { return a2c_loss(p, data.seg, beta, 0.9, adv, nullptr).loss; });
        EXPECT_LT(err, 1e-4) << "trial " << trial;
    }
}

TEST(A2C, UpdateUsesCurrentValueAsBaseline) {
    Rng rng(12);
    Policy p = random_policy(rng, 3);
    const auto data = random_segment(rng, 4, 2);
    auto grads = p.params().zeros_like();
    const auto st = a2c_update(p, data.seg, 0.01, 0.9, grads);
    const auto R = discounted_returns(data.seg, 0.9);
    for (std::size_t t = 0; t < 4; ++t) {
        const auto& s = data.seg.steps[t];
        EXPECT_NEAR(st.advantages[t], R[t] - p.act(s.branch, s.view, s.target, s.loc).value, 1e-12);
    }
}

TEST(A2C, ZeroAdvantageZeroBetaHasNoPolicyTerm) {
    Rng rng(13);
    Policy p = random_policy(rng, 4);
    const auto data = random_segment(rng, 3, 2);
    const std::vector<double> zero(3, 0.0);
    const auto st = a2c_loss(p, data.seg, 0.0, 0.9, zero, nullptr);
    EXPECT_EQ(st.policy_loss, 0.0);
    EXPECT_NEAR(st.loss, st.value_loss, 1e-15);
}

TEST(A2C, EntropyTermGrowsWithBeta) {
    Rng rng(14);
    Policy p = random_policy(rng, 5);
    const auto data = random_segment(rng, 3, 2);
    const std::vector<double> adv{0.1, -0.2, 0.3};
    double previous = -1.0;
    for (double beta : {0.0, 0.01, 0.1, 1.0}) {
        const auto st = a2c_loss(p, data.seg, beta, 0.9, adv, nullptr);
        const double term = std::abs(st.loss - st.policy_loss - st.value_loss);
        EXPECT_NEAR(term, beta * st.entropy, 1e-12);
        EXPECT_GT(term, previous);
        previous = term;
    }
}

TEST(A2C, AdvantageCountMustMatch) {
    Rng rng(15);
    Policy p = random_policy(rng, 6);
    const auto data = random_segment(rng, 3, 2);
    EXPECT_THROW(a2c_loss(p, data.seg, 0.01, 0.9, std::vector<double>(2), nullptr), ShapeError);
}

TEST(Segments, CoverTraceAndBootstrapOnlyWhenUnfinished) {
    const Scene s = seeded_scene(7, 1);
    const auto table = DetectionTable::ground_truth(s);
    Rng rng(1);
    Policy p(PolicyConfig{}, {s.name()}, 2);
    auto flat = p.params().flat();
    for (double& v : flat) v += 0.1 * rng.normal();
    p.params().assign_flat(flat);
    const TrainTask task{&s, 0, &table};
    for (std::uint64_t seed = 0; seed < 30; ++seed) {
        const RobotState start = eval_start(s, 0, seed, 0);
        const auto trace = run_episode(s, 0, random_chooser(), RewardScheme::record(), table, start, {12, seed});
        const auto segs = make_segments(p, 0, task, trace, 5, 0.5);
        std::size_t covered = 0;
        for (const auto& seg : segs) {
            EXPECT_LE(seg.steps.size(), 5u);
            for (const auto& st : seg.steps) {
                EXPECT_EQ(st.action, static_cast<std::size_t>(trace.steps[covered].action));
                EXPECT_EQ(st.reward, trace.steps[covered].reward);
                ++covered;
            }
        }
        EXPECT_EQ(covered, trace.length());
        if (!segs.empty() && trace.outcome == Outcome::Success) {
            EXPECT_EQ(segs.back().bootstrap, 0.0);
        }
        if (!segs.empty() && trace.outcome == Outcome::StepLimit) {
            EXPECT_NE(segs.back().bootstrap, 0.0);
        }
    }
}

TEST(TrainConfig, ValidationAndJson) {
    TrainConfig c;
    EXPECT_EQ(c.lr, 7e-4);
    EXPECT_EQ(c.episodes, 30000u);
    EXPECT_EQ(c.optimizer, OptimizerKind::Sgd);
    c.budget_scale = 0.1;
    EXPECT_EQ(c.effective_episodes(), 3000u);
    const TrainConfig d = TrainConfig::desk();
    EXPECT_EQ(TrainConfig::from_json(d.to_json()).to_json(), d.to_json());
    EXPECT_THROW(TrainConfig::from_json({{"betta", 0.1}}), ConfigError);
    EXPECT_THROW(TrainConfig::from_json({{"gamma", 0.0}}), ConfigError);
    EXPECT_THROW(TrainConfig::from_json({{"workers", 0}}), ConfigError);
    EXPECT_THROW(TrainConfig::from_json({{"optimizer", "adam"}}), ConfigError);
    EXPECT_THROW(TrainConfig::from_json({{"beta", "high"}}), ConfigError);
    EXPECT_EQ(TrainConfig::from_json({{"beta", 0.1}}, d).gamma, d.gamma);
}

TEST(Training, SingleWorkerIsBitReproducible) {
    const Scene s = seeded_scene(7, 1);
    const auto table = DetectionTable::ground_truth(s);
    const std::vector<TrainTask> tasks{{&s, 0, &table}};
    for (OptimizerKind opt : {OptimizerKind::Sgd, OptimizerKind::RmsProp}) {
        TrainConfig c = quick(60);
        c.optimizer = opt;
        const Policy init(PolicyConfig{}, {s.name()}, 9);
        const auto a = train_policy(init, tasks, RewardScheme::record(0.7), c);
        const auto b = train_policy(init, tasks, RewardScheme::record(0.7), c);
        EXPECT_EQ(a.policy.params(), b.policy.params());
        ASSERT_EQ(a.curve.size(), 60u);
        for (std::size_t i = 0; i < a.curve.size(); ++i) {
            EXPECT_EQ(a.curve[i].length, b.curve[i].length);
            EXPECT_EQ(a.curve[i].total_reward, b.curve[i].total_reward);
            EXPECT_EQ(a.curve[i].mean_entropy, b.curve[i].mean_entropy);
        }
        EXPECT_NE(a.policy.params(), init.params());
    }
}

TEST(Training, WorkersArePinnedRoundRobin) {
    const Scene s = seeded_scene(7, 4);
    const auto table = DetectionTable::ground_truth(s);
    std::vector<TrainTask> tasks;
    for (std::size_t k = 0; k < 4; ++k) tasks.push_back({&s, k, &table});
    TrainConfig c = quick(40);
    c.workers = 2;
    const auto r = train_policy(Policy(PolicyConfig{}, {s.name()}, 1), tasks, RewardScheme::record(0.7), c);
    ASSERT_EQ(r.curve.size(), 40u);
    for (std::size_t i = 0; i < r.curve.size(); ++i) {
        const auto& e = r.curve[i];
        EXPECT_EQ(e.episode, i);
        const std::size_t worker = e.episode % 2;
        const std::size_t local = e.episode / 2;
        EXPECT_EQ(e.object, "obj" + std::to_string(worker + 2 * (local % 2)));
    }
}

TEST(Training, SingleWorkerCyclesAllTasks) {
    const Scene s = seeded_scene(7, 4);
    const auto table = DetectionTable::ground_truth(s);
    std::vector<TrainTask> tasks;
    for (std::size_t k = 0; k < 4; ++k) tasks.push_back({&s, k, &table});
    const auto r = train_policy(Policy(PolicyConfig{}, {s.name()}, 1), tasks, RewardScheme::record(0.7), quick(8));
    for (std::size_t i = 0; i < 8; ++i) EXPECT_EQ(r.curve[i].object, "obj" + std::to_string(i % 4));
}

TEST(Training, HeavyEntropyWeightKeepsPolicyNearUniform) {
    const Scene s = seeded_scene(7, 1);
    const auto table = DetectionTable::ground_truth(s);
    const std::vector<TrainTask> tasks{{&s, 0, &table}};
    TrainConfig c = quick(400);
    c.beta = 10.0;
    const auto r = train_policy(Policy(PolicyConfig{}, {s.name()}, 4), tasks, RewardScheme::record(0.7), c);
    const auto map = entropy_map(r.policy, 0, s, 0, table, 0.5);
    for (const auto& cell : map.cells)
        if (cell) {
            EXPECT_GE(*cell, 0.95 * std::log(8.0));
        }
}

TEST(Training, DivergenceGuardAborts) {
    const Scene s = seeded_scene(7, 1);
    const auto table = DetectionTable::ground_truth(s);
    const std::vector<TrainTask> tasks{{&s, 0, &table}};
    TrainConfig c = quick(50);
    c.loss_bound = 1e-12;
    c.divergence_patience = 3;
    EXPECT_THROW(train_policy(Policy(PolicyConfig{}, {s.name()}, 4), tasks, RewardScheme::record(), c), NonFiniteError);
}

TEST(Training, CheckpointHookFiresEveryK) {
    const Scene s = seeded_scene(7, 1);
    const auto table = DetectionTable::ground_truth(s);
    const std::vector<TrainTask> tasks{{&s, 0, &table}};
    TrainConfig c = quick(25);
    c.checkpoint_every = 10;
    std::vector<std::size_t> calls;
    TrainHooks hooks;
    hooks.on_checkpoint = [&](std::size_t done, const Policy&) { calls.push_back(done); };
    train_policy(Policy(PolicyConfig{}, {s.name()}, 4), tasks, RewardScheme::record(), c, 0.5, hooks);
    EXPECT_EQ(calls, (std::vector<std::size_t>{10, 20}));
}

TEST(Training, RejectsBadSetup) {
    const Scene s = seeded_scene(7, 1);
    const auto table = DetectionTable::ground_truth(s);
    const std::vector<TrainTask> tasks{{&s, 0, &table}};
    const Policy wrong_branch(PolicyConfig{}, {"elsewhere"}, 0);
    EXPECT_THROW(train_policy(wrong_branch, tasks, RewardScheme::record(), quick(2)), UnknownIdError);
    EXPECT_THROW(train_policy(Policy(PolicyConfig{}, {s.name()}, 0), {}, RewardScheme::record(), quick(2)),
                 ConfigError);
    TrainConfig bad = quick(2);
    bad.beta = -1.0;
    EXPECT_THROW(train_policy(Policy(PolicyConfig{}, {s.name()}, 0), tasks, RewardScheme::record(), bad),
                 ConfigError);
}
