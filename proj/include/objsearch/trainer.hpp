#ifndef OBJSEARCH_TRAINER_HPP
#define OBJSEARCH_TRAINER_HPP

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <functional>
#include <mutex>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "objsearch/env.hpp"
#include "objsearch/error.hpp"
#include "objsearch/nn.hpp"
#include "objsearch/policy.hpp"
#include "objsearch/reward.hpp"
#include "objsearch/rng.hpp"
#include "objsearch/scene.hpp"

namespace objsearch {

enum class OptimizerKind { Sgd, RmsProp };

struct TrainConfig {
    double beta = 0.01;  ///< entropy weight
    double gamma = 0.99;
    double lr = 7e-4;
    int n_step = 5;
    std::size_t max_steps = 500;
    std::size_t episodes = 30000;
    double budget_scale = 1.0;     ///< effective episodes = round(episodes * budget_scale)
    int workers = 1;
    std::uint64_t seed = 0;
    double max_grad_norm = 40.0;   ///< <= 0 disables clipping
    OptimizerKind optimizer = OptimizerKind::Sgd;
    double rms_decay = 0.99;
    double rms_epsilon = 0.1;
    double loss_bound = 1e6;       ///< divergence guard threshold
    int divergence_patience = 20;  ///< consecutive episodes above the bound before aborting
    std::size_t checkpoint_every = 0;

    std::size_t effective_episodes() const {
        return static_cast<std::size_t>(std::llround(static_cast<double>(episodes) * budget_scale));
    }

    void validate() const {
        if (!(beta >= 0.0)) throw ConfigError("beta must be >= 0");
        if (!(gamma > 0.0 && gamma <= 1.0)) throw ConfigError("gamma must lie in (0, 1]");
        if (!(lr >= 0.0)) throw ConfigError("lr must be >= 0");
        if (n_step < 1) throw ConfigError("n_step must be >= 1");
        if (max_steps < 1) throw ConfigError("max_steps must be >= 1");
        if (workers < 1) throw ConfigError("workers must be >= 1");
        if (!(budget_scale > 0.0)) throw ConfigError("budget_scale must be > 0");
    }

    /// Settings that converge on a 5x5 scene within a few thousand episodes:
    /// RMSProp, a short discount horizon and a 2000-episode budget.
    static TrainConfig desk() {
        TrainConfig c;
        c.gamma = 0.7;
        c.lr = 1e-3;
        c.episodes = 2000;
        c.optimizer = OptimizerKind::RmsProp;
        c.rms_epsilon = 1e-5;
        return c;
    }

    nlohmann::json to_json() const {
        return {{"beta", beta},
                {"gamma", gamma},
                {"lr", lr},
                {"n_step", n_step},
                {"max_steps", max_steps},
                {"episodes", episodes},
                {"budget_scale", budget_scale},
                {"workers", workers},
                {"seed", seed},
                {"max_grad_norm", max_grad_norm},
                {"optimizer", optimizer == OptimizerKind::Sgd ? "sgd" : "rmsprop"},
                {"rms_decay", rms_decay},
                {"rms_epsilon", rms_epsilon},
                {"loss_bound", loss_bound},
                {"divergence_patience", divergence_patience},
                {"checkpoint_every", checkpoint_every}};
    }

    /// Missing keys keep the values of `base`; unknown keys are rejected.
    static TrainConfig from_json(const nlohmann::json& j) { return from_json(j, TrainConfig{}); }

    static TrainConfig from_json(const nlohmann::json& j, TrainConfig base) {
        if (!j.is_object()) throw ConfigError("training config must be a JSON object");
        const auto known = base.to_json();
        for (const auto& [key, _] : j.items())
            if (!known.contains(key)) throw ConfigError("unknown training config key '" + key + "'");
        try {
            base.beta = j.value("beta", base.beta);
            base.gamma = j.value("gamma", base.gamma);
            base.lr = j.value("lr", base.lr);
            base.n_step = j.value("n_step", base.n_step);
            base.max_steps = j.value("max_steps", base.max_steps);
            base.episodes = j.value("episodes", base.episodes);
            base.budget_scale = j.value("budget_scale", base.budget_scale);
            base.workers = j.value("workers", base.workers);
            base.seed = j.value("seed", base.seed);
            base.max_grad_norm = j.value("max_grad_norm", base.max_grad_norm);
            base.rms_decay = j.value("rms_decay", base.rms_decay);
            base.rms_epsilon = j.value("rms_epsilon", base.rms_epsilon);
            base.loss_bound = j.value("loss_bound", base.loss_bound);
            base.divergence_patience = j.value("divergence_patience", base.divergence_patience);
            base.checkpoint_every = j.value("checkpoint_every", base.checkpoint_every);
            if (j.contains("optimizer")) base.optimizer = parse_optimizer(j.at("optimizer").get<std::string>());
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError(std::string("training config: ") + e.what());
        }
        base.validate();
        return base;
    }

    static OptimizerKind parse_optimizer(const std::string& name) {
        if (name == "sgd") return OptimizerKind::Sgd;
        if (name == "rmsprop") return OptimizerKind::RmsProp;
        throw ConfigError("unknown optimizer '" + name + "' (expected sgd or rmsprop)");
    }
};

/// One transition of a rollout segment, holding the inputs needed to
/// recompute the policy forward pass.
struct SegmentStep {
    std::size_t branch = 0;
    std::span<const double> view;
    std::span<const double> target;
    LocationGrid loc{};
    std::size_t action = 0;
    double reward = 0.0;
};

/// Up to n_step consecutive transitions. `bootstrap` is the value estimate of
/// the state after the last transition, 0 when that state is terminal.
struct Segment {
    std::vector<SegmentStep> steps;
    double bootstrap = 0.0;
};

struct A2CStats {
    double loss = 0.0;
    double policy_loss = 0.0;
    double value_loss = 0.0;
    double entropy = 0.0; ///< sum of per-step policy entropies
    std::vector<double> returns;
    std::vector<double> advantages;
};

inline std::vector<double> discounted_returns(const Segment& seg, double gamma) {
    std::vector<double> R(seg.steps.size());
    double acc = seg.bootstrap;
    for (std::size_t t = seg.steps.size(); t-- > 0;) {
        acc = seg.steps[t].reward + gamma * acc;
        R[t] = acc;
    }
    return R;
}

/// Segment loss sum_t [ -log pi(a_t) A_t + 1/2 (R_t - v_t)^2 - beta H(pi_t) ]
/// with the advantages held fixed at `advantages`. Accumulates gradients into
/// `grads` when non-null.
inline A2CStats a2c_loss(const Policy& policy, const Segment& seg, double beta, double gamma,
                         std::span<const double> advantages, nn::ParamStore* grads) {
    if (advantages.size() != seg.steps.size()) throw ShapeError("a2c_loss: one advantage per step required");
    A2CStats st;
    st.returns = discounted_returns(seg, gamma);
    st.advantages.assign(advantages.begin(), advantages.end());
    Policy::Cache cache;
    std::array<double, kNumActions> d_logits{};
    for (std::size_t t = 0; t < seg.steps.size(); ++t) {
        const SegmentStep& s = seg.steps[t];
        policy.forward(s.branch, s.view, s.target, s.loc, cache);
        const PolicyOutput& o = cache.out;
        const double A = advantages[t];
        const double H = nn::entropy(o.pi);
        const double td = st.returns[t] - o.value;
        st.policy_loss += -o.log_pi[s.action] * A;
        st.value_loss += 0.5 * td * td;
        st.entropy += H;
        if (grads) {
            for (std::size_t j = 0; j < kNumActions; ++j) {
                const double onehot = j == s.action ? 1.0 : 0.0;
                const double log_p = o.pi[j] > 0.0 ? o.log_pi[j] : 0.0;
                d_logits[j] = A * (o.pi[j] - onehot) + beta * o.pi[j] * (log_p + H);
            }
            policy.backward(cache, d_logits, -td, *grads);
        }
    }
    st.loss = st.policy_loss + st.value_loss - beta * st.entropy;
    if (!std::isfinite(st.loss)) throw NonFiniteError("a2c loss is not finite");
    return st;
}

/// Computes A_t = R_t - v_t under the current parameters and accumulates the
/// gradient of the segment loss into `grads`.
inline A2CStats a2c_update(const Policy& policy, const Segment& seg, double beta, double gamma, nn::ParamStore& grads) {
    const auto R = discounted_returns(seg, gamma);
    std::vector<double> adv(seg.steps.size());
    for (std::size_t t = 0; t < seg.steps.size(); ++t) {
        const auto& s = seg.steps[t];
        adv[t] = R[t] - policy.act(s.branch, s.view, s.target, s.loc).value;
    }
    return a2c_loss(policy, seg, beta, gamma, adv, &grads);
}

/// Plain SGD, or RMSProp with statistics shared by all workers.
class Optimizer {
public:
    Optimizer(OptimizerKind kind, double lr, double decay, double epsilon)
        : kind_(kind), lr_(lr), decay_(decay), epsilon_(epsilon) {}

    void apply(nn::ParamStore& params, const nn::ParamStore& grads) {
        if (kind_ == OptimizerKind::Sgd) {
            nn::sgd_step(params, grads, lr_);
            return;
        }
        if (auto bad = grads.first_non_finite(); !bad.empty())
            throw NonFiniteError("non-finite gradient in tensor '" + bad + "'");
        if (square_avg_.count() == 0) square_avg_ = params.zeros_like();
        for (std::size_t i = 0; i < params.count(); ++i) {
            auto& p = params[i].data;
            const auto& g = grads[i].data;
            auto& s = square_avg_[i].data;
            for (std::size_t j = 0; j < p.size(); ++j) {
                s[j] = decay_ * s[j] + (1.0 - decay_) * g[j] * g[j];
                p[j] -= lr_ * g[j] / std::sqrt(s[j] + epsilon_);
            }
        }
    }

private:
    OptimizerKind kind_;
    double lr_;
    double decay_;
    double epsilon_;
    nn::ParamStore square_avg_;
};

/// A (scene, object) pair a worker trains on, with the detections the policy
/// sees in that scene.
struct TrainTask {
    const Scene* scene = nullptr;
    std::size_t object = 0;
    const DetectionTable* detections = nullptr;
};

struct EpisodeRecord {
    std::size_t episode = 0;
    std::string object;
    std::string scene;
    std::size_t length = 0;
    double total_reward = 0.0; ///< undiscounted sum of step rewards
    double mean_entropy = 0.0;
    bool success = false;
    double loss = 0.0;
};

struct TrainResult {
    Policy policy;
    std::vector<EpisodeRecord> curve;
};

/// Chooses actions by sampling from (or taking the argmax of) the policy.
inline ActionChooser policy_chooser(const Policy& policy, std::size_t branch, double tau, bool greedy = false,
                                    std::vector<double>* entropies = nullptr) {
    return [&policy, branch, tau, greedy, entropies](const Observation& obs, Rng& rng) {
        const PolicyOutput o = policy.act(branch, obs.scene->feature(obs.state), obs.scene->target_feature(obs.object),
                                          encode_location(*obs.detection, tau));
        if (entropies) entropies->push_back(nn::entropy(o.pi));
        if (greedy)
            return action_from_index(static_cast<std::size_t>(std::max_element(o.pi.begin(), o.pi.end()) - o.pi.begin()));
        return action_from_index(rng.categorical(o.pi));
    };
}

struct TrainHooks {
    std::function<void(std::size_t episodes_done, const Policy&)> on_checkpoint;
};

/// Splits a finished episode into n-step segments ready for a2c_update.
inline std::vector<Segment> make_segments(const Policy& policy, std::size_t branch, const TrainTask& task,
                                          const EpisodeTrace& trace, int n_step, double tau) {
    const Scene& scene = *task.scene;
    std::vector<Segment> segments;
    const std::size_t n = trace.steps.size();
    for (std::size_t begin = 0; begin < n; begin += static_cast<std::size_t>(n_step)) {
        const std::size_t end = std::min(n, begin + static_cast<std::size_t>(n_step));
        Segment seg;
        for (std::size_t t = begin; t < end; ++t) {
            const TraceStep& ts = trace.steps[t];
            SegmentStep s;
            s.branch = branch;
            s.view = scene.feature(ts.state);
            s.target = scene.target_feature(task.object);
            s.loc = encode_location(task.detections->at(scene.index(ts.state), task.object), tau);
            s.action = static_cast<std::size_t>(ts.action);
            s.reward = ts.reward;
            seg.steps.push_back(s);
        }
        const bool terminal = end == n && trace.outcome == Outcome::Success;
        if (!terminal) {
            const RobotState next = end < n ? trace.steps[end].state : trace.final_state;
            seg.bootstrap = policy
                                .act(branch, scene.feature(next), scene.target_feature(task.object),
                                     encode_location(task.detections->at(scene.index(next), task.object), tau))
                                .value;
        }
        segments.push_back(std::move(seg));
    }
    return segments;
}

/// Entropy-regularized advantage actor-critic. Worker w trains on tasks
/// w, w + W, w + 2W, ... in round-robin order; it rolls out each episode with
/// a snapshot of the shared parameters and applies the summed episode
/// gradient to the shared parameters under a lock. With one worker the run is
/// bit-reproducible.
inline TrainResult train_policy(Policy initial, std::span<const TrainTask> tasks, const RewardScheme& scheme,
                                const TrainConfig& config, double tau = 0.5, const TrainHooks& hooks = {}) {
    config.validate();
    scheme.validate();
    if (tasks.empty()) throw ConfigError("no training tasks");
    for (const auto& t : tasks)
        if (!t.scene || !t.detections) throw ConfigError("training task without scene or detections");

    const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(config.workers), tasks.size());
    const std::size_t total = config.effective_episodes();

    TrainResult result{std::move(initial), {}};
    Policy& shared = result.policy;
    std::mutex mutex;
    Optimizer optimizer(config.optimizer, config.lr, config.rms_decay, config.rms_epsilon);
    std::atomic<bool> stop{false};
    std::exception_ptr failure;
    std::size_t completed = 0;
    int over_bound = 0;

    const auto worker_fn = [&](std::size_t w) {
        try {
            std::vector<std::size_t> mine;
            for (std::size_t i = w; i < tasks.size(); i += workers) mine.push_back(i);
            const std::size_t quota = total / workers + (w < total % workers ? 1 : 0);
            for (std::size_t local_ep = 0; local_ep < quota && !stop; ++local_ep) {
                const std::size_t episode_id = local_ep * workers + w;
                const TrainTask& task = tasks[mine[local_ep % mine.size()]];
                const std::size_t branch = shared.branch_index(task.scene->name());

                Policy local;
                {
                    std::lock_guard lock(mutex);
                    local = shared;
                }
                Rng start_rng(derive_seed(config.seed, episode_id, 0x57A7));
                const RobotState start = sample_start(*task.scene, task.object, start_rng);
                std::vector<double> entropies;
                const EpisodeTrace trace =
                    run_episode(*task.scene, task.object, policy_chooser(local, branch, tau, false, &entropies), scheme,
                                *task.detections, start,
                                {config.max_steps, derive_seed(config.seed, episode_id, 0xAC71)});

                nn::ParamStore grads = local.params().zeros_like();
                double loss = 0.0;
                for (const Segment& seg : make_segments(local, branch, task, trace, config.n_step, tau))
                    loss += a2c_update(local, seg, config.beta, config.gamma, grads).loss;
                nn::clip_grad_norm(grads, config.max_grad_norm);

                EpisodeRecord rec;
                rec.episode = episode_id;
                rec.object = task.scene->objects()[task.object].id;
                rec.scene = task.scene->name();
                rec.length = trace.length();
                for (const auto& s : trace.steps) rec.total_reward += s.reward;
                double hsum = 0.0;
                for (double h : entropies) hsum += h;
                rec.mean_entropy = entropies.empty() ? 0.0 : hsum / static_cast<double>(entropies.size());
                rec.success = trace.outcome == Outcome::Success;
                rec.loss = loss;

                std::lock_guard lock(mutex);
                optimizer.apply(shared.params(), grads);
                result.curve.push_back(rec);
                ++completed;
                over_bound = std::abs(loss) > config.loss_bound ? over_bound + 1 : 0;
                if (over_bound >= config.divergence_patience)
                    throw NonFiniteError("training diverged: loss above " + std::to_string(config.loss_bound) +
                                         " for " + std::to_string(over_bound) + " consecutive episodes");
                if (hooks.on_checkpoint && config.checkpoint_every > 0 && completed % config.checkpoint_every == 0)
                    hooks.on_checkpoint(completed, shared);
            }
        } catch (...) {
            std::lock_guard lock(mutex);
            if (!failure) failure = std::current_exception();
            stop = true;
        }
    };

    if (workers == 1) {
        worker_fn(0);
    } else {
        std::vector<std::thread> threads;
        for (std::size_t w = 0; w < workers; ++w) threads.emplace_back(worker_fn, w);
        for (auto& t : threads) t.join();
        std::sort(result.curve.begin(), result.curve.end(),
                  [](const EpisodeRecord& a, const EpisodeRecord& b) { return a.episode < b.episode; });
    }
    if (failure) std::rethrow_exception(failure);
    return result;
}

} // namespace objsearch

#endif // OBJSEARCH_TRAINER_HPP
