#ifndef OBJSEARCH_EVAL_HPP
#define OBJSEARCH_EVAL_HPP

#include <cstdint>
#include <deque>
#include <limits>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "objsearch/env.hpp"
#include "objsearch/error.hpp"
#include "objsearch/nn.hpp"
#include "objsearch/policy.hpp"
#include "objsearch/reward.hpp"
#include "objsearch/rng.hpp"
#include "objsearch/scene.hpp"

namespace objsearch {

struct EpisodeSummary {
    std::size_t episode = 0;
    std::string object;
    RobotState start;
    Outcome outcome = Outcome::StepLimit;
    std::size_t length = 0;

    friend bool operator==(const EpisodeSummary&, const EpisodeSummary&) = default;
};

struct ObjectBreakdown {
    std::string object;
    std::size_t episodes = 0;
    std::size_t successes = 0;
    double success_rate = 0.0;
    std::optional<double> avg_length;

    friend bool operator==(const ObjectBreakdown&, const ObjectBreakdown&) = default;
};

/// Success rate over all episodes; average length over successful episodes
/// only, absent when nothing succeeded.
struct EvalReport {
    std::vector<EpisodeSummary> episodes;
    double success_rate = 0.0;
    std::optional<double> avg_length;
    std::vector<ObjectBreakdown> per_object;
    std::vector<EpisodeTrace> traces; ///< filled when requested

    /// Recomputes the aggregate fields from `episodes`.
    void aggregate() {
        std::size_t succ = 0;
        double len = 0.0;
        per_object.clear();
        for (const auto& e : episodes) {
            auto it = std::find_if(per_object.begin(), per_object.end(),
                                   [&](const ObjectBreakdown& b) { return b.object == e.object; });
            if (it == per_object.end()) {
                per_object.push_back({e.object, 0, 0, 0.0, std::nullopt});
                it = per_object.end() - 1;
            }
            ++it->episodes;
            if (e.outcome == Outcome::Success) {
                ++succ;
                len += static_cast<double>(e.length);
                ++it->successes;
                it->avg_length = it->avg_length.value_or(0.0) + static_cast<double>(e.length);
            }
        }
        for (auto& b : per_object) {
            b.success_rate = static_cast<double>(b.successes) / static_cast<double>(b.episodes);
            if (b.avg_length) *b.avg_length /= static_cast<double>(b.successes);
        }
        success_rate = episodes.empty() ? 0.0 : static_cast<double>(succ) / static_cast<double>(episodes.size());
        avg_length = succ ? std::optional<double>(len / static_cast<double>(succ)) : std::nullopt;
    }
};

struct EvalOptions {
    std::size_t n_episodes = 10;
    std::size_t max_steps = 5000;
    std::uint64_t seed = 0;
    bool keep_traces = false;
    int workers = 1;
};

namespace detail {
enum : std::uint64_t { kEvalStart = 0xE5A1, kEvalActions = 0xE5A2 };
}

/// Start state of evaluation episode `i`; it depends only on the seed and the
/// episode index, so every method sees the same starts.
inline RobotState eval_start(const Scene& scene, std::size_t object, std::uint64_t seed, std::size_t i) {
    Rng rng(derive_seed(seed, i, detail::kEvalStart));
    return sample_start(scene, object, rng);
}

/// Runs `n_episodes` episodes from seeded random non-goal starts. Success
/// means reaching a ground-truth goal state within `max_steps`.
inline EvalReport evaluate(const ActionChooser& chooser, const Scene& scene, std::size_t object,
                           const DetectionTable& detections, const EvalOptions& opt,
                           const RewardScheme& scheme = RewardScheme::record()) {
    if (opt.n_episodes < 1) throw ConfigError("n_episodes must be at least 1");
    EvalReport report;
    std::vector<EpisodeTrace> traces(opt.n_episodes);
    const auto run = [&](std::size_t i) {
        const RobotState start = eval_start(scene, object, opt.seed, i);
        traces[i] = run_episode(scene, object, chooser, scheme, detections, start,
                                {opt.max_steps, derive_seed(opt.seed, i, detail::kEvalActions)});
    };
    const std::size_t workers = std::max<std::size_t>(1, std::min<std::size_t>(opt.workers, opt.n_episodes));
    if (workers == 1) {
        for (std::size_t i = 0; i < opt.n_episodes; ++i) run(i);
    } else {
        std::vector<std::thread> threads;
        for (std::size_t w = 0; w < workers; ++w)
            threads.emplace_back([&, w] {
                for (std::size_t i = w; i < opt.n_episodes; i += workers) run(i);
            });
        for (auto& t : threads) t.join();
    }
    for (std::size_t i = 0; i < opt.n_episodes; ++i)
        report.episodes.push_back(
            {i, scene.objects()[object].id, traces[i].start, traces[i].outcome, traces[i].length()});
    if (opt.keep_traces) report.traces = std::move(traces);
    report.aggregate();
    return report;
}

/// Concatenates per-object reports and re-aggregates.
inline EvalReport merge_reports(const std::vector<EvalReport>& parts) {
    EvalReport out;
    for (const auto& p : parts) {
        for (auto e : p.episodes) {
            e.episode = out.episodes.size();
            out.episodes.push_back(e);
        }
        out.traces.insert(out.traces.end(), p.traces.begin(), p.traces.end());
    }
    out.aggregate();
    return out;
}

inline ActionChooser random_chooser() {
    return [](const Observation&, Rng& rng) { return action_from_index(rng.below(kNumActions)); };
}

inline EvalReport random_walk(const Scene& scene, std::size_t object, const EvalOptions& opt) {
    return evaluate(random_chooser(), scene, object, DetectionTable::ground_truth(scene), opt);
}

/// Fewest actions from each lattice state to the nearest goal state of
/// `object`; max() for invalid or unreachable states. Breadth-first search
/// over reversed transitions.
inline std::vector<std::size_t> goal_distances(const Scene& scene, std::size_t object) {
    constexpr std::size_t unreachable = std::numeric_limits<std::size_t>::max();
    std::vector<std::vector<std::size_t>> preds(scene.lattice_size());
    for (const auto& s : scene.valid_states())
        for (Action a : kAllActions) {
            const RobotState n = step(scene, s, a);
            if (n != s) preds[scene.index(n)].push_back(scene.index(s));
        }
    std::vector<std::size_t> dist(scene.lattice_size(), unreachable);
    std::deque<std::size_t> queue;
    for (const auto& g : scene.goal_states(object)) {
        dist[scene.index(g)] = 0;
        queue.push_back(scene.index(g));
    }
    while (!queue.empty()) {
        const std::size_t cur = queue.front();
        queue.pop_front();
        for (std::size_t p : preds[cur])
            if (dist[p] == unreachable) {
                dist[p] = dist[cur] + 1;
                queue.push_back(p);
            }
    }
    return dist;
}

/// Greedy descent on the BFS distance field; the first action (in enum
/// order) that reduces the distance is taken.
inline ActionChooser oracle_chooser(const Scene& scene, std::vector<std::size_t> distances) {
    return [&scene, dist = std::move(distances)](const Observation& obs, Rng&) {
        const std::size_t here = dist[scene.index(obs.state)];
        for (Action a : kAllActions)
            if (dist[scene.index(step(scene, obs.state, a))] < here) return a;
        return Action::MoveAhead;
    };
}

/// Mean BFS distance to the nearest goal over the evaluation starts.
inline double oracle_mean_length(const Scene& scene, std::size_t object, const EvalOptions& opt) {
    const auto dist = goal_distances(scene, object);
    double sum = 0.0;
    for (std::size_t i = 0; i < opt.n_episodes; ++i)
        sum += static_cast<double>(dist[scene.index(eval_start(scene, object, opt.seed, i))]);
    return sum / static_cast<double>(opt.n_episodes);
}

/// Per-cell mean policy entropy over all headings and tilts; blocked cells
/// are absent. Row-major, `width` columns.
struct EntropyMap {
    int width = 0;
    int height = 0;
    std::vector<std::optional<double>> cells;

    const std::optional<double>& at(int col, int row) const {
        return cells[static_cast<std::size_t>(row) * width + col];
    }

    /// Mean over present cells.
    double mean() const {
        double s = 0.0;
        std::size_t n = 0;
        for (const auto& c : cells)
            if (c) s += *c, ++n;
        return n ? s / static_cast<double>(n) : 0.0;
    }
};

inline EntropyMap entropy_map(const Policy& policy, std::size_t branch, const Scene& scene, std::size_t object,
                              const DetectionTable& detections, double tau) {
    EntropyMap m{scene.grid().width, scene.grid().height, {}};
    m.cells.assign(static_cast<std::size_t>(m.width) * m.height, std::nullopt);
    for (int row = 0; row < m.height; ++row)
        for (int col = 0; col < m.width; ++col) {
            if (scene.blocked({col, row})) continue;
            double sum = 0.0;
            int n = 0;
            for (int h = 0; h < scene.grid().headings; ++h)
                for (int t = 0; t < scene.grid().tilts; ++t) {
                    const RobotState s{{col, row}, h, t};
                    const auto o = policy.act(branch, scene.feature(s), scene.target_feature(object),
                                              encode_location(detections.at(scene.index(s), object), tau));
                    sum += nn::entropy(o.pi);
                    ++n;
                }
            m.cells[static_cast<std::size_t>(row) * m.width + col] = sum / n;
        }
    return m;
}

} // namespace objsearch

#endif // OBJSEARCH_EVAL_HPP
