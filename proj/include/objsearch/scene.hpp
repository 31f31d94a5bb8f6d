#ifndef OBJSEARCH_SCENE_HPP
#define OBJSEARCH_SCENE_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "objsearch/error.hpp"
#include "objsearch/rng.hpp"

namespace objsearch {

/// Normalized bounding box: center (x, y) and size (w, h) as fractions of the
/// image extent.
struct Box {
    double x = 0.5;
    double y = 0.5;
    double w = 0.0;
    double h = 0.0;

    double area() const noexcept { return w * h; }

    bool valid() const noexcept {
        return std::isfinite(x) && std::isfinite(y) && std::isfinite(w) && std::isfinite(h) &&
               x >= 0.0 && x <= 1.0 && y >= 0.0 && y <= 1.0 && w > 0.0 && w <= 1.0 && h > 0.0 &&
               h <= 1.0;
    }

    friend bool operator==(const Box&, const Box&) = default;
};

struct Cell {
    int col = 0;
    int row = 0;

    friend auto operator<=>(const Cell&, const Cell&) = default;
};

/// A lattice pose: cell, heading in quarter turns (0 = N, clockwise) and
/// camera tilt level (0 = up, increasing downward).
struct RobotState {
    Cell cell;
    int heading = 0;
    int tilt = 0;

    friend auto operator<=>(const RobotState&, const RobotState&) = default;
};

inline std::string to_string(const RobotState& s) {
    std::ostringstream os;
    os << "(" << s.cell.col << "," << s.cell.row << ",h" << s.heading << ",t" << s.tilt << ")";
    return os.str();
}

struct GridDims {
    int width = 0;
    int height = 0;
    int headings = 4;
    int tilts = 3;

    friend bool operator==(const GridDims&, const GridDims&) = default;
};

struct ObjectSpec {
    std::string id;
    std::vector<double> target_feature;
    Cell anchor;

    friend bool operator==(const ObjectSpec&, const ObjectSpec&) = default;
};

/// Plain description of a scene, as read from or written to a scene file.
/// `Scene` validates one of these on construction.
struct SceneData {
    struct StateRecord {
        RobotState state;
        std::vector<double> feature;
        std::vector<std::pair<std::string, Box>> boxes;
    };

    std::string name;
    GridDims grid;
    int feature_dim = 0;
    std::vector<Cell> blocked;
    std::vector<ObjectSpec> objects;
    std::vector<StateRecord> states;
};

/// Number of largest truth boxes that defines the goal-area threshold.
inline constexpr std::size_t kGoalRank = 5;

/// Returns the `rank`-th largest value of `areas`, or the smallest one when
/// fewer than `rank` values are given. `areas` must be non-empty.
inline double goal_area_threshold(std::vector<double> areas, std::size_t rank = kGoalRank) {
    if (areas.empty()) throw InvariantError("goal threshold over an empty area set");
    std::sort(areas.begin(), areas.end(), std::greater<>());
    return areas[std::min(rank, areas.size()) - 1];
}

/// Immutable discrete scene: lattice geometry, objects, per-state view
/// features and ground-truth boxes, with goal states derived per object.
class Scene {
public:
    Scene() = default;

    explicit Scene(SceneData data) { build(std::move(data)); }

    const std::string& name() const noexcept { return name_; }
    const GridDims& grid() const noexcept { return grid_; }
    int feature_dim() const noexcept { return feature_dim_; }
    std::size_t lattice_size() const noexcept {
        return static_cast<std::size_t>(grid_.width) * grid_.height * grid_.headings * grid_.tilts;
    }

    bool in_grid(Cell c) const noexcept {
        return c.col >= 0 && c.col < grid_.width && c.row >= 0 && c.row < grid_.height;
    }
    bool blocked(Cell c) const noexcept {
        return !in_grid(c) || blocked_[static_cast<std::size_t>(c.row) * grid_.width + c.col] != 0;
    }
    bool valid(const RobotState& s) const noexcept {
        return in_grid(s.cell) && !blocked(s.cell) && s.heading >= 0 && s.heading < grid_.headings &&
               s.tilt >= 0 && s.tilt < grid_.tilts;
    }

    std::size_t index(const RobotState& s) const noexcept {
        return ((static_cast<std::size_t>(s.cell.row) * grid_.width + s.cell.col) * grid_.headings +
                s.heading) *
                   grid_.tilts +
               s.tilt;
    }

    RobotState state_at(std::size_t idx) const noexcept {
        RobotState s;
        s.tilt = static_cast<int>(idx % grid_.tilts);
        idx /= grid_.tilts;
        s.heading = static_cast<int>(idx % grid_.headings);
        idx /= grid_.headings;
        s.cell.col = static_cast<int>(idx % grid_.width);
        s.cell.row = static_cast<int>(idx / grid_.width);
        return s;
    }

    /// All valid states in lattice-index order.
    const std::vector<RobotState>& valid_states() const noexcept { return valid_states_; }

    const std::vector<ObjectSpec>& objects() const noexcept { return objects_; }

    std::size_t object_index(std::string_view id) const {
        for (std::size_t i = 0; i < objects_.size(); ++i)
            if (objects_[i].id == id) return i;
        throw UnknownIdError("unknown object id '" + std::string(id) + "'");
    }

    std::span<const double> feature(const RobotState& s) const { return features_[index(s)]; }

    std::span<const double> target_feature(std::size_t object) const {
        return objects_.at(object).target_feature;
    }

    const std::optional<Box>& truth_box(const RobotState& s, std::size_t object) const {
        return boxes_[index(s) * objects_.size() + object];
    }

    double truth_area(const RobotState& s, std::size_t object) const {
        const auto& b = truth_box(s, object);
        return b ? b->area() : 0.0;
    }

    /// States whose truth-box area is at least the fifth-largest truth-box
    /// area for `object` (ties kept), in lattice-index order.
    const std::vector<RobotState>& goal_states(std::size_t object) const { return goals_.at(object); }

    bool is_goal(std::size_t object, const RobotState& s) const {
        if (object >= objects_.size()) throw UnknownIdError("object index out of range");
        return valid(s) && goal_mask_[index(s) * objects_.size() + object] != 0;
    }

    double goal_threshold(std::size_t object) const { return thresholds_.at(object); }

    SceneData to_data() const {
        SceneData d;
        d.name = name_;
        d.grid = grid_;
        d.feature_dim = feature_dim_;
        for (int r = 0; r < grid_.height; ++r)
            for (int c = 0; c < grid_.width; ++c)
                if (blocked({c, r})) d.blocked.push_back({c, r});
        d.objects = objects_;
        for (const auto& s : valid_states_) {
            SceneData::StateRecord rec;
            rec.state = s;
            rec.feature = features_[index(s)];
            for (std::size_t k = 0; k < objects_.size(); ++k)
                if (const auto& b = truth_box(s, k)) rec.boxes.emplace_back(objects_[k].id, *b);
            d.states.push_back(std::move(rec));
        }
        return d;
    }

    friend bool operator==(const Scene& a, const Scene& b) {
        return a.name_ == b.name_ && a.grid_ == b.grid_ && a.feature_dim_ == b.feature_dim_ &&
               a.blocked_ == b.blocked_ && a.objects_ == b.objects_ && a.features_ == b.features_ &&
               a.boxes_ == b.boxes_;
    }

private:
    void build(SceneData data) {
        const GridDims& g = data.grid;
        if (g.width < 1 || g.height < 1 || g.headings != 4 || g.tilts < 1)
            throw InvariantError("grid must have positive size, 4 headings and at least one tilt");
        if (data.feature_dim < 1) throw InvariantError("feature_dim must be positive");
        name_ = std::move(data.name);
        grid_ = g;
        feature_dim_ = data.feature_dim;
        blocked_.assign(static_cast<std::size_t>(g.width) * g.height, 0);
        for (const Cell& c : data.blocked) {
            if (!in_grid(c))
                throw InvariantError("blocked cell (" + std::to_string(c.col) + "," +
                                     std::to_string(c.row) + ") outside grid");
            blocked_[static_cast<std::size_t>(c.row) * g.width + c.col] = 1;
        }

        if (data.objects.empty()) throw InvariantError("scene has no objects; no object is findable");
        for (std::size_t i = 0; i < data.objects.size(); ++i) {
            const ObjectSpec& o = data.objects[i];
            if (o.target_feature.size() != static_cast<std::size_t>(feature_dim_))
                throw InvariantError("object '" + o.id + "' target_feature has dimension " +
                                     std::to_string(o.target_feature.size()) + ", expected " +
                                     std::to_string(feature_dim_));
            if (!in_grid(o.anchor)) throw InvariantError("object '" + o.id + "' anchor outside grid");
            for (std::size_t j = 0; j < i; ++j)
                if (data.objects[j].id == o.id) throw InvariantError("duplicate object id '" + o.id + "'");
        }
        objects_ = std::move(data.objects);

        const std::size_t n_obj = objects_.size();
        features_.assign(lattice_size(), {});
        boxes_.assign(lattice_size() * n_obj, std::nullopt);
        for (auto& rec : data.states) {
            const RobotState& s = rec.state;
            if (!valid(s)) throw InvariantError("state " + to_string(s) + " is not a valid lattice state");
            const std::size_t idx = index(s);
            if (!features_[idx].empty()) throw InvariantError("state " + to_string(s) + " listed twice");
            if (rec.feature.size() != static_cast<std::size_t>(feature_dim_))
                throw InvariantError("state " + to_string(s) + " feature has dimension " +
                                     std::to_string(rec.feature.size()));
            for (double v : rec.feature)
                if (!std::isfinite(v)) throw InvariantError("state " + to_string(s) + " has a non-finite feature");
            for (const auto& [id, box] : rec.boxes) {
                if (!box.valid())
                    throw InvariantError("state " + to_string(s) + " box for object '" + id +
                                         "' violates box ranges");
                std::size_t k = n_obj;
                for (std::size_t i = 0; i < n_obj; ++i)
                    if (objects_[i].id == id) k = i;
                if (k == n_obj)
                    throw InvariantError("state " + to_string(s) + " has a box for unknown object '" + id + "'");
                boxes_[idx * n_obj + k] = box;
            }
            features_[idx] = std::move(rec.feature);
        }

        valid_states_.clear();
        for (std::size_t idx = 0; idx < lattice_size(); ++idx) {
            const RobotState s = state_at(idx);
            if (!valid(s)) continue;
            if (features_[idx].empty())
                throw InvariantError("state " + to_string(s) + " has no view feature");
            valid_states_.push_back(s);
        }

        goals_.assign(n_obj, {});
        thresholds_.assign(n_obj, 0.0);
        goal_mask_.assign(lattice_size() * n_obj, 0);
        for (std::size_t k = 0; k < n_obj; ++k) {
            std::vector<double> areas;
            for (const auto& s : valid_states_)
                if (const auto& b = truth_box(s, k)) areas.push_back(b->area());
            if (areas.empty())
                throw InvariantError("object '" + objects_[k].id + "' has no truth box in any state");
            thresholds_[k] = goal_area_threshold(std::move(areas));
            for (const auto& s : valid_states_) {
                const auto& b = truth_box(s, k);
                if (b && b->area() >= thresholds_[k]) {
                    goals_[k].push_back(s);
                    goal_mask_[index(s) * n_obj + k] = 1;
                }
            }
        }
    }

    std::string name_;
    GridDims grid_;
    int feature_dim_ = 0;
    std::vector<char> blocked_;
    std::vector<ObjectSpec> objects_;
    std::vector<std::vector<double>> features_;
    std::vector<std::optional<Box>> boxes_;
    std::vector<RobotState> valid_states_;
    std::vector<std::vector<RobotState>> goals_;
    std::vector<double> thresholds_;
    std::vector<char> goal_mask_;
};

inline const std::vector<RobotState>& goal_states(const Scene& scene, std::string_view object_id) {
    return scene.goal_states(scene.object_index(object_id));
}

// ---------------------------------------------------------------------------
// Synthetic scenes

struct SyntheticOptions {
    std::uint64_t seed = 0;
    int width = 5;
    int height = 5;
    int n_objects = 1;
    int feature_dim = 32;
    int visibility_range = 2; ///< Chebyshev distance, in cells
    int tilts = 3;
    std::string name = "synthetic";
};

namespace detail {

inline constexpr std::array<std::array<int, 2>, 4> kForward{{{0, -1}, {1, 0}, {0, 1}, {-1, 0}}};

inline std::vector<double> gaussian_vector(std::uint64_t seed, int dim, double scale) {
    Rng rng(seed);
    std::vector<double> v(static_cast<std::size_t>(dim));
    for (double& x : v) x = rng.normal() * scale;
    return v;
}

inline std::vector<double> unit_vector(std::uint64_t seed, int dim) {
    auto v = gaussian_vector(seed, dim, 1.0);
    double n = 0.0;
    for (double x : v) n += x * x;
    n = std::sqrt(n);
    for (double& x : v) x /= n;
    return v;
}

inline bool free_cells_connected(const GridDims& g, const std::vector<char>& blocked) {
    const auto at = [&](int c, int r) { return static_cast<std::size_t>(r) * g.width + c; };
    std::vector<char> seen(blocked.size(), 0);
    std::deque<Cell> queue;
    std::size_t n_free = 0;
    for (int r = 0; r < g.height; ++r)
        for (int c = 0; c < g.width; ++c)
            if (!blocked[at(c, r)]) {
                ++n_free;
                if (queue.empty() && !seen[at(c, r)]) {
                    queue.push_back({c, r});
                    seen[at(c, r)] = 1;
                }
            }
    if (n_free == 0) return false;
    std::size_t reached = 0;
    while (!queue.empty()) {
        const Cell cur = queue.front();
        queue.pop_front();
        ++reached;
        for (const auto& d : kForward) {
            const Cell n{cur.col + d[0], cur.row + d[1]};
            if (n.col < 0 || n.col >= g.width || n.row < 0 || n.row >= g.height) continue;
            if (blocked[at(n.col, n.row)] || seen[at(n.col, n.row)]) continue;
            seen[at(n.col, n.row)] = 1;
            queue.push_back(n);
        }
    }
    return reached == n_free;
}

enum : std::uint64_t {
    kTagLayout = 1,
    kTagSignature,
    kTagTarget,
    kTagCell,
    kTagHeading,
    kTagTilt,
    kTagNoise,
    kTagJitter,
    kTagBoxBasis,
};

} // namespace detail

/// Builds a deterministic desk-scale scene. Each object blocks its anchor
/// cell and is visible from cells within `visibility_range` (Chebyshev) whose
/// heading faces it within a 90 degree field of view, at the tilt matching the
/// object's height class. When several objects are visible from one state,
/// the one with the largest box occludes the rest.
inline Scene generate_synthetic(const SyntheticOptions& opt) {
    if (opt.width < 2 || opt.height < 2) throw ConfigError("grid must be at least 2x2");
    if (opt.n_objects < 1) throw ConfigError("n_objects must be at least 1");
    if (opt.feature_dim < 8) throw ConfigError("feature_dim must be at least 8");
    if (opt.visibility_range < 1) throw ConfigError("visibility_range must be at least 1");
    if (opt.tilts < 1) throw ConfigError("tilts must be at least 1");
    if (opt.n_objects >= opt.width * opt.height) throw ConfigError("too many objects for the grid");

    const GridDims grid{opt.width, opt.height, 4, opt.tilts};
    const int D = opt.feature_dim;
    const std::size_t n_obj = static_cast<std::size_t>(opt.n_objects);
    const std::size_t n_cells = static_cast<std::size_t>(opt.width) * opt.height;
    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(D));

    struct Placement {
        Cell anchor;
        int height_class;
        double aspect;
        double y;
    };

    Rng layout(derive_seed(opt.seed, detail::kTagLayout));
    for (int attempt = 0; attempt < 1000; ++attempt) {
        std::vector<std::size_t> cells(n_cells);
        for (std::size_t i = 0; i < n_cells; ++i) cells[i] = i;
        std::vector<Placement> placed;
        std::vector<char> blocked(n_cells, 0);
        for (std::size_t k = 0; k < n_obj; ++k) {
            const std::size_t j = k + layout.below(n_cells - k);
            std::swap(cells[k], cells[j]);
            const Cell anchor{static_cast<int>(cells[k] % opt.width), static_cast<int>(cells[k] / opt.width)};
            blocked[cells[k]] = 1;
            Placement p;
            p.anchor = anchor;
            p.height_class = static_cast<int>(layout.below(static_cast<std::uint64_t>(opt.tilts)));
            p.aspect = layout.uniform(0.8, 1.25);
            p.y = layout.uniform(0.42, 0.58);
            placed.push_back(p);
        }
        if (!detail::free_cells_connected(grid, blocked)) continue;

        SceneData data;
        data.name = opt.name;
        data.grid = grid;
        data.feature_dim = D;
        for (std::size_t k = 0; k < n_obj; ++k) {
            data.blocked.push_back(placed[k].anchor);
            ObjectSpec o;
            o.id = "obj" + std::to_string(k);
            o.anchor = placed[k].anchor;
            o.target_feature = detail::unit_vector(derive_seed(opt.seed, detail::kTagTarget, k), D);
            data.objects.push_back(std::move(o));
        }

        std::vector<std::vector<double>> signatures;
        for (std::size_t k = 0; k < n_obj; ++k)
            signatures.push_back(detail::unit_vector(derive_seed(opt.seed, detail::kTagSignature, k), D));
        std::array<std::vector<double>, 4> box_basis;
        for (std::size_t c = 0; c < 4; ++c)
            box_basis[c] = detail::gaussian_vector(derive_seed(opt.seed, detail::kTagBoxBasis, c), D, inv_sqrt_d);

        std::vector<char> findable(n_obj, 0);
        for (int row = 0; row < opt.height; ++row) {
            for (int col = 0; col < opt.width; ++col) {
                const std::size_t cell_idx = static_cast<std::size_t>(row) * opt.width + col;
                if (blocked[cell_idx]) continue;
                const auto cell_vec =
                    detail::gaussian_vector(derive_seed(opt.seed, detail::kTagCell, cell_idx), D, inv_sqrt_d);
                for (int heading = 0; heading < 4; ++heading) {
                    const auto heading_vec = detail::gaussian_vector(
                        derive_seed(opt.seed, detail::kTagHeading, static_cast<std::uint64_t>(heading)), D,
                        inv_sqrt_d);
                    const auto& fwd = detail::kForward[static_cast<std::size_t>(heading)];
                    const auto& right = detail::kForward[static_cast<std::size_t>((heading + 1) % 4)];
                    for (int tilt = 0; tilt < opt.tilts; ++tilt) {
                        const auto tilt_vec = detail::gaussian_vector(
                            derive_seed(opt.seed, detail::kTagTilt, static_cast<std::uint64_t>(tilt)), D,
                            inv_sqrt_d);
                        const std::size_t lattice =
                            (cell_idx * 4 + static_cast<std::size_t>(heading)) * opt.tilts + tilt;

                        std::optional<std::pair<std::size_t, Box>> seen;
                        for (std::size_t k = 0; k < n_obj; ++k) {
                            const Placement& p = placed[k];
                            if (tilt != p.height_class) continue;
                            const int dx = p.anchor.col - col;
                            const int dy = p.anchor.row - row;
                            const int cheb = std::max(std::abs(dx), std::abs(dy));
                            if (cheb == 0 || cheb > opt.visibility_range) continue;
                            const int ahead = dx * fwd[0] + dy * fwd[1];
                            const int lateral = dx * right[0] + dy * right[1];
                            if (ahead < 1 || std::abs(lateral) > ahead) continue;
                            const double dist = std::sqrt(static_cast<double>(ahead * ahead + lateral * lateral));
                            Rng jitter_rng(derive_seed(opt.seed, detail::kTagJitter, lattice * n_obj + k));
                            const double jitter = 1.0 + 0.04 * (2.0 * jitter_rng.uniform() - 1.0);
                            const double side = 0.5 / dist * std::sqrt(jitter);
                            Box b;
                            b.w = std::min(1.0, side * p.aspect);
                            b.h = std::min(1.0, side / p.aspect);
                            b.x = 0.5 + 0.4 * static_cast<double>(lateral) / ahead;
                            b.y = p.y;
                            if (!seen || b.area() > seen->second.area()) seen.emplace(k, b);
                        }

                        SceneData::StateRecord rec;
                        rec.state = RobotState{{col, row}, heading, tilt};
                        rec.feature.resize(static_cast<std::size_t>(D));
                        Rng noise(derive_seed(opt.seed, detail::kTagNoise, lattice));
                        for (std::size_t i = 0; i < static_cast<std::size_t>(D); ++i)
                            rec.feature[i] = cell_vec[i] + heading_vec[i] + tilt_vec[i] +
                                             0.2 * inv_sqrt_d * noise.normal();
                        if (seen) {
                            const auto& [k, b] = *seen;
                            findable[k] = 1;
                            const double amp = 1.0 + 4.0 * b.area();
                            const std::array<double, 4> coords{b.x - 0.5, b.y - 0.5, b.w - 0.25, b.h - 0.25};
                            for (std::size_t i = 0; i < static_cast<std::size_t>(D); ++i) {
                                double v = amp * signatures[k][i];
                                for (std::size_t c = 0; c < 4; ++c) v += 3.0 * coords[c] * box_basis[c][i];
                                rec.feature[i] += v;
                            }
                            rec.boxes.emplace_back(data.objects[k].id, b);
                        }
                        data.states.push_back(std::move(rec));
                    }
                }
            }
        }
        if (std::find(findable.begin(), findable.end(), 0) != findable.end()) continue;
        return Scene(std::move(data));
    }
    throw ConfigError("could not place objects so that every object is findable and the grid is connected");
}

} // namespace objsearch

#endif // OBJSEARCH_SCENE_HPP
