#ifndef OBJSEARCH_ENV_HPP
#define OBJSEARCH_ENV_HPP

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "objsearch/error.hpp"
#include "objsearch/reward.hpp"
#include "objsearch/rng.hpp"
#include "objsearch/scene.hpp"

namespace objsearch {

enum class Action : std::uint8_t {
    MoveAhead,
    MoveBack,
    MoveLeft,
    MoveRight,
    LookUp,
    LookDown,
    RotateLeft,
    RotateRight,
};

inline constexpr std::size_t kNumActions = 8;

inline constexpr std::array<Action, kNumActions> kAllActions{
    Action::MoveAhead, Action::MoveBack,   Action::MoveLeft,   Action::MoveRight,
    Action::LookUp,    Action::LookDown,   Action::RotateLeft, Action::RotateRight,
};

inline constexpr std::array<std::string_view, kNumActions> kActionNames{
    "MoveAhead", "MoveBack", "MoveLeft", "MoveRight", "LookUp", "LookDown", "RotateLeft", "RotateRight",
};

inline std::string_view action_name(Action a) { return kActionNames[static_cast<std::size_t>(a)]; }

inline Action action_from_index(std::size_t i) { return kAllActions.at(i); }

/// Deterministic transition. Translations are heading-relative (Left/Right
/// strafe); any move off the grid, into a blocked cell or beyond the tilt
/// range leaves the state unchanged.
inline RobotState step(const Scene& scene, const RobotState& s, Action a) {
    static constexpr std::array<std::array<int, 2>, 4> fwd{{{0, -1}, {1, 0}, {0, 1}, {-1, 0}}};
    RobotState next = s;
    const auto translate = [&](int heading) {
        const auto& d = fwd[static_cast<std::size_t>(((heading % 4) + 4) % 4)];
        next.cell = {s.cell.col + d[0], s.cell.row + d[1]};
    };
    switch (a) {
    case Action::MoveAhead: translate(s.heading); break;
    case Action::MoveBack: translate(s.heading + 2); break;
    case Action::MoveLeft: translate(s.heading + 3); break;
    case Action::MoveRight: translate(s.heading + 1); break;
    case Action::LookUp: next.tilt = s.tilt - 1; break;
    case Action::LookDown: next.tilt = s.tilt + 1; break;
    case Action::RotateLeft: next.heading = (s.heading + 3) % 4; break;
    case Action::RotateRight: next.heading = (s.heading + 1) % 4; break;
    }
    return scene.valid(next) ? next : s;
}

inline bool is_goal(const Scene& scene, std::string_view object_id, const RobotState& s) {
    return scene.is_goal(scene.object_index(object_id), s);
}

/// Presence probability plus box. The box is meaningful only when `present`.
struct Detection {
    double p = 0.0;
    Box box;
    bool present = false;

    double area() const noexcept { return present ? box.area() : 0.0; }
};

/// Per-(state, object) detections for one scene, computed once from a frozen
/// detector or from ground truth.
class DetectionTable {
public:
    DetectionTable() = default;
    DetectionTable(std::size_t lattice_size, std::size_t n_objects)
        : n_objects_(n_objects), table_(lattice_size * n_objects) {}

    static DetectionTable ground_truth(const Scene& scene) {
        DetectionTable t(scene.lattice_size(), scene.objects().size());
        for (const auto& s : scene.valid_states())
            for (std::size_t k = 0; k < scene.objects().size(); ++k)
                if (const auto& b = scene.truth_box(s, k)) t.set(scene.index(s), k, Detection{1.0, *b, true});
        return t;
    }

    const Detection& at(std::size_t lattice_index, std::size_t object) const {
        return table_[lattice_index * n_objects_ + object];
    }
    void set(std::size_t lattice_index, std::size_t object, const Detection& d) {
        table_[lattice_index * n_objects_ + object] = d;
    }
    std::size_t n_objects() const noexcept { return n_objects_; }

private:
    std::size_t n_objects_ = 0;
    std::vector<Detection> table_;
};

/// What an action chooser sees at each step.
struct Observation {
    const Scene* scene = nullptr;
    std::size_t object = 0;
    RobotState state;
    const Detection* detection = nullptr;
    std::size_t step_index = 0;
};

using ActionChooser = std::function<Action(const Observation&, Rng&)>;

enum class Outcome : std::uint8_t { Success, StepLimit };

inline std::string_view outcome_name(Outcome o) { return o == Outcome::Success ? "Success" : "StepLimit"; }

/// One transition: the action taken in `state`, the detection observed on
/// arrival at the next state and the reward credited for that arrival.
struct TraceStep {
    RobotState state;
    Action action = Action::MoveAhead;
    Detection detection;
    double reward = 0.0;
};

struct EpisodeTrace {
    std::size_t object = 0;
    RobotState start;
    Detection start_detection;
    RobotState final_state;
    std::vector<TraceStep> steps;
    Outcome outcome = Outcome::StepLimit;

    std::size_t length() const noexcept { return steps.size(); }
};

struct EpisodeOptions {
    std::size_t max_steps = 5000;
    std::uint64_t seed = 0;
};

/// Rolls out one episode. The goal test runs on arrival at each state before
/// the next action is chosen, so a start at a goal state yields length 0.
/// The record tracker is seeded with the start state's detection, which earns
/// no reward itself.
inline EpisodeTrace run_episode(const Scene& scene, std::size_t object, const ActionChooser& policy,
                                const RewardScheme& scheme, const DetectionTable& detections,
                                const RobotState& start, const EpisodeOptions& opt) {
    if (!scene.valid(start)) throw InvariantError("start state " + to_string(start) + " is not valid");
    if (opt.max_steps < 1) throw ConfigError("max_steps must be at least 1");
    if (object >= scene.objects().size()) throw UnknownIdError("object index out of range");

    Rng rng(opt.seed);
    EpisodeTrace trace;
    trace.object = object;
    trace.start = start;
    trace.start_detection = detections.at(scene.index(start), object);
    RecordState record;
    record.best_area = trace.start_detection.area();

    RobotState s = start;
    while (!scene.is_goal(object, s) && trace.steps.size() < opt.max_steps) {
        const Detection& here = detections.at(scene.index(s), object);
        const Observation obs{&scene, object, s, &here, trace.steps.size()};
        const Action a = policy(obs, rng);
        const RobotState next = step(scene, s, a);
        const Detection& seen = detections.at(scene.index(next), object);
        const bool at_goal = scene.is_goal(object, next);
        const auto [r, rec] = step_reward(scheme, record, seen.area(), at_goal);
        record = rec;
        trace.steps.push_back({s, a, seen, r});
        s = next;
    }
    trace.final_state = s;
    trace.outcome = scene.is_goal(object, s) ? Outcome::Success : Outcome::StepLimit;
    return trace;
}

/// Uniform over valid states that are not goal states for `object`.
inline RobotState sample_start(const Scene& scene, std::size_t object, Rng& rng) {
    std::vector<RobotState> candidates;
    for (const auto& s : scene.valid_states())
        if (!scene.is_goal(object, s)) candidates.push_back(s);
    if (candidates.empty()) throw InvariantError("every valid state is a goal state");
    return candidates[rng.below(candidates.size())];
}

/// Trajectory CSV: one row per action taken.
inline void write_trace_csv(std::ostream& out, const EpisodeTrace& trace) {
    out << "step,col,row,heading,tilt,action,detected_area,reward\n";
    out.precision(17);
    for (std::size_t i = 0; i < trace.steps.size(); ++i) {
        const TraceStep& st = trace.steps[i];
        out << i << ',' << st.state.cell.col << ',' << st.state.cell.row << ',' << st.state.heading << ','
            << st.state.tilt << ',' << action_name(st.action) << ',' << st.detection.area() << ','
            << st.reward << '\n';
    }
}

} // namespace objsearch

#endif // OBJSEARCH_ENV_HPP
