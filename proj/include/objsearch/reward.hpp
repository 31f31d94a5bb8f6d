#ifndef OBJSEARCH_REWARD_HPP
#define OBJSEARCH_REWARD_HPP

#include <cmath>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "objsearch/error.hpp"

namespace objsearch {

/// +goal_reward on arrival at a goal state, step_penalty everywhere else.
struct SparseGoal {
    double goal_reward = 10.0;
    double step_penalty = -0.01;
};

/// Every detected area is credited, whether or not it improves on earlier ones.
struct CumulativeArea {};

/// An area is credited only when it strictly exceeds the largest area
/// credited earlier in the episode.
struct RecordArea {};

struct RewardScheme {
    std::variant<SparseGoal, CumulativeArea, RecordArea> kind = RecordArea{};
    double gamma = 0.99;

    static RewardScheme sparse(double gamma = 0.99, double goal_reward = 10.0, double step_penalty = -0.01) {
        return {SparseGoal{goal_reward, step_penalty}, gamma};
    }
    static RewardScheme cumulative(double gamma = 0.99) { return {CumulativeArea{}, gamma}; }
    static RewardScheme record(double gamma = 0.99) { return {RecordArea{}, gamma}; }

    void validate() const {
        if (!(gamma > 0.0 && gamma <= 1.0)) throw ConfigError("gamma must lie in (0, 1]");
    }
};

inline std::string_view scheme_name(const RewardScheme& s) {
    if (std::holds_alternative<SparseGoal>(s.kind)) return "sparse";
    if (std::holds_alternative<CumulativeArea>(s.kind)) return "cumulative";
    return "record";
}

inline RewardScheme parse_scheme(std::string_view name, double gamma) {
    RewardScheme s;
    if (name == "sparse") s = RewardScheme::sparse(gamma);
    else if (name == "cumulative") s = RewardScheme::cumulative(gamma);
    else if (name == "record") s = RewardScheme::record(gamma);
    else throw ConfigError("unknown reward scheme '" + std::string(name) + "'");
    s.validate();
    return s;
}

struct RecordState {
    double best_area = 0.0;
};

/// Undiscounted reward for arriving at a state with `detected_area` (0 when
/// nothing is detected). Discounting is applied by the caller.
inline std::pair<double, RecordState> step_reward(const RewardScheme& scheme, RecordState record,
                                                  double detected_area, bool at_goal) {
    if (const auto* sparse = std::get_if<SparseGoal>(&scheme.kind))
        return {at_goal ? sparse->goal_reward : sparse->step_penalty, record};
    if (std::holds_alternative<CumulativeArea>(scheme.kind)) return {detected_area, record};
    if (detected_area > record.best_area) {
        record.best_area = detected_area;
        return {detected_area, record};
    }
    return {0.0, record};
}

/// Discounted episode total computed directly from the area sequence: for
/// RecordArea, the sum of gamma^i * a_i over indices where a_i strictly
/// exceeds every earlier area (and zero); for CumulativeArea, sum gamma^i a_i;
/// for SparseGoal, sum gamma^i r_i with the goal/penalty rewards.
inline double episode_total(const RewardScheme& scheme, std::span<const double> areas,
                            const std::vector<bool>& goal_flags) {
    if (areas.size() != goal_flags.size())
        throw ShapeError("episode_total: " + std::to_string(areas.size()) + " areas but " +
                         std::to_string(goal_flags.size()) + " goal flags");
    double total = 0.0;
    if (const auto* sparse = std::get_if<SparseGoal>(&scheme.kind)) {
        for (std::size_t i = 0; i < areas.size(); ++i)
            total += std::pow(scheme.gamma, static_cast<double>(i)) *
                     (goal_flags[i] ? sparse->goal_reward : sparse->step_penalty);
        return total;
    }
    const bool record_only = std::holds_alternative<RecordArea>(scheme.kind);
    double running_max = 0.0;
    for (std::size_t i = 0; i < areas.size(); ++i) {
        if (record_only) {
            if (!(areas[i] > running_max)) continue;
            running_max = areas[i];
        }
        total += std::pow(scheme.gamma, static_cast<double>(i)) * areas[i];
    }
    return total;
}

} // namespace objsearch

#endif // OBJSEARCH_REWARD_HPP
