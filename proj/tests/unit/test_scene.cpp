#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "objsearch/scene.hpp"
#include "objsearch/scene_io.hpp"
#include "support.hpp"

using namespace objsearch;
using testing_support::fixture;

namespace {

// Sort-and-threshold: every index whose value reaches the rank-th largest.
std::set<std::size_t> top_k_with_ties(const std::vector<double>& areas, std::size_t k) {
    std::vector<double> sorted = areas;
    std::sort(sorted.rbegin(), sorted.rend());
    const double cut = sorted[std::min(k, sorted.size()) - 1];
    std::set<std::size_t> out;
    for (std::size_t i = 0; i < areas.size(); ++i)
        if (areas[i] >= cut) out.insert(i);
    return out;
}

std::vector<std::size_t> goal_count_for_areas(const std::vector<double>& areas) {
    const double t = goal_area_threshold(areas);
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < areas.size(); ++i)
        if (areas[i] >= t) idx.push_back(i);
    return idx;
}

Scene synthetic(std::uint64_t seed, int objects) {
    SyntheticOptions opt;
    opt.seed = seed;
    opt.n_objects = objects;
    return generate_synthetic(opt);
}

} // namespace

TEST(GoalThreshold, SevenDistinctAreasGiveFiveGoals) {
    const std::vector<double> areas{0.10, 0.09, 0.08, 0.07, 0.06, 0.05, 0.04};
    EXPECT_DOUBLE_EQ(goal_area_threshold(areas), 0.06);
    EXPECT_EQ(goal_count_for_areas(areas).size(), 5u);
}

TEST(GoalThreshold, SingleAreaIsItsOwnThreshold) {
    EXPECT_DOUBLE_EQ(goal_area_threshold({0.03}), 0.03);
    EXPECT_EQ(goal_count_for_areas({0.03}).size(), 1u);
}

TEST(GoalThreshold, TieAtFifthPlaceKeepsBoth) {
    const std::vector<double> areas{0.10, 0.09, 0.08, 0.07, 0.06, 0.06, 0.04};
    EXPECT_EQ(goal_count_for_areas(areas).size(), 6u);
}

TEST(GoalThreshold, EmptyInputRejected) { EXPECT_THROW(goal_area_threshold({}), InvariantError); }

TEST(GoalThreshold, MatchesSortOracleAndIgnoresRescaling) {
    Rng rng(41);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t n = 1 + rng.below(20);
        std::vector<double> areas(n);
        // Few distinct values so ties are common.
        for (double& a : areas) a = 0.01 * static_cast<double>(1 + rng.below(8));
        const auto expected = top_k_with_ties(areas, 5);
        const auto got = goal_count_for_areas(areas);
        EXPECT_EQ(std::set<std::size_t>(got.begin(), got.end()), expected);

        const double c = rng.uniform(0.1, 10.0);
        std::vector<double> scaled = areas;
        for (double& a : scaled) a *= c;
        const auto got_scaled = goal_count_for_areas(scaled);
        EXPECT_EQ(got_scaled, got);
    }
}

TEST(SceneFixture, LoadsAllLatticeStates) {
    const Scene s = load_scene(fixture("scene_5x5.json"));
    EXPECT_EQ(s.valid_states().size(), 5u * 5u * 4u * 3u);
    EXPECT_EQ(s.lattice_size(), 300u);
    EXPECT_EQ(s.objects().size(), 2u);
}

TEST(SceneFixture, NoTieObjectHasFiveGoalStates) {
    const Scene s = load_scene(fixture("scene_5x5.json"));
    EXPECT_EQ(goal_states(s, "mug").size(), 5u);
}

TEST(SceneFixture, TiedObjectKeepsBothTiedStates) {
    const Scene s = load_scene(fixture("scene_5x5.json"));
    const auto& goals = goal_states(s, "apple");
    EXPECT_EQ(goals.size(), 6u);
    const RobotState a{{3, 1}, 2, 2};
    const RobotState b{{2, 0}, 1, 2};
    EXPECT_NE(std::find(goals.begin(), goals.end(), a), goals.end());
    EXPECT_NE(std::find(goals.begin(), goals.end(), b), goals.end());
}

TEST(SceneFixture, GoalStatesHaveTruthBoxes) {
    const Scene s = load_scene(fixture("scene_5x5.json"));
    for (std::size_t k = 0; k < s.objects().size(); ++k)
        for (const auto& g : s.goal_states(k)) EXPECT_TRUE(s.truth_box(g, k).has_value());
}

TEST(SceneFixture, ZeroWidthBoxNamesTheState) {
    try {
        load_scene(fixture("scene_bad_box.json"));
        FAIL() << "expected an invariant error";
    } catch (const InvariantError& e) {
        EXPECT_NE(std::string(e.what()).find("(2,2,h0,t1)"), std::string::npos) << e.what();
        EXPECT_NE(std::string(e.what()).find("mug"), std::string::npos) << e.what();
    }
}

TEST(SceneFixture, EmptyObjectListRejected) {
    EXPECT_THROW(load_scene(fixture("scene_no_objects.json")), InvariantError);
}

TEST(SceneFixture, UnknownObjectId) {
    const Scene s = load_scene(fixture("scene_5x5.json"));
    EXPECT_THROW(s.object_index("teapot"), UnknownIdError);
    EXPECT_THROW(goal_states(s, "teapot"), UnknownIdError);
}

TEST(SceneLattice, IndexRoundTrip) {
    const Scene s = load_scene(fixture("scene_5x5.json"));
    for (std::size_t i = 0; i < s.lattice_size(); ++i) EXPECT_EQ(s.index(s.state_at(i)), i);
}

TEST(SceneValidation, MissingFeatureRejected) {
    SceneData d = load_scene(fixture("scene_5x5.json")).to_data();
    d.states.pop_back();
    EXPECT_THROW(Scene{d}, InvariantError);
}

TEST(SceneValidation, WrongFeatureDimensionRejected) {
    SceneData d = load_scene(fixture("scene_5x5.json")).to_data();
    d.states[3].feature.push_back(0.0);
    EXPECT_THROW(Scene{d}, InvariantError);
}

TEST(SceneValidation, ObjectWithoutBoxesRejected) {
    SceneData d = load_scene(fixture("scene_5x5.json")).to_data();
    d.objects.push_back({"ghost", {1, 0, 0, 0}, {0, 0}});
    EXPECT_THROW(Scene{d}, InvariantError);
}

TEST(Synthetic, SameSeedSameScene) {
    EXPECT_EQ(synthetic(3, 2), synthetic(3, 2));
    EXPECT_FALSE(synthetic(3, 2) == synthetic(4, 2));
}

TEST(Synthetic, PreconditionsEnforced) {
    SyntheticOptions opt;
    opt.n_objects = 0;
    EXPECT_THROW(generate_synthetic(opt), ConfigError);
    opt = {};
    opt.width = 1;
    EXPECT_THROW(generate_synthetic(opt), ConfigError);
    opt = {};
    opt.feature_dim = 4;
    EXPECT_THROW(generate_synthetic(opt), ConfigError);
}

TEST(Synthetic, SeedSevenEveryObjectFindable) {
    const Scene s = synthetic(7, 1);
    for (std::size_t k = 0; k < s.objects().size(); ++k) {
        std::size_t boxed = 0;
        for (const auto& st : s.valid_states()) boxed += s.truth_box(st, k).has_value();
        EXPECT_GT(boxed, 0u);
    }
}

TEST(Synthetic, SaveLoadRoundTrip) {
    const Scene s = synthetic(11, 3);
    const auto dir = testing_support::scratch_dir("scene_roundtrip");
    save_scene(s, dir / "s.json");
    EXPECT_EQ(load_scene(dir / "s.json"), s);
}

// Visibility geometry recomputed from the anchor: within range, in front of
// the camera and inside a 90 degree field of view, with boxes shrinking as the
// distance grows.
class SyntheticGeometry : public ::testing::TestWithParam<std::uint64_t> {};

TEST_P(SyntheticGeometry, BoxesFollowVisibilityRules) {
    const Scene s = synthetic(GetParam(), 1);
    const Cell anchor = s.objects()[0].anchor;
    EXPECT_TRUE(s.blocked(anchor));
    std::set<int> tilts;
    std::vector<std::pair<double, double>> dist_area;
    for (const auto& st : s.valid_states()) {
        const auto& box = s.truth_box(st, 0);
        if (!box) continue;
        EXPECT_TRUE(box->valid());
        tilts.insert(st.tilt);
        const int dx = anchor.col - st.cell.col;
        const int dy = anchor.row - st.cell.row;
        EXPECT_LE(std::max(std::abs(dx), std::abs(dy)), 2) << to_string(st);
        static const int fx[4] = {0, 1, 0, -1};
        static const int fy[4] = {-1, 0, 1, 0};
        const int ahead = dx * fx[st.heading] + dy * fy[st.heading];
        const int lateral = dx * fx[(st.heading + 1) % 4] + dy * fy[(st.heading + 1) % 4];
        EXPECT_GE(ahead, 1) << to_string(st);
        EXPECT_LE(std::abs(lateral), ahead) << to_string(st);
        dist_area.emplace_back(std::hypot(ahead, lateral), box->area());
    }
    EXPECT_EQ(tilts.size(), 1u);
    for (const auto& [d1, a1] : dist_area)
        for (const auto& [d2, a2] : dist_area)
            if (d1 < d2 - 1e-9) {
                EXPECT_GT(a1, a2);
            }
}

TEST_P(SyntheticGeometry, AdjacentFacingStateHoldsLargestBox) {
    const Scene s = synthetic(GetParam(), 1);
    const Cell anchor = s.objects()[0].anchor;
    double best = 0.0;
    RobotState best_state;
    for (const auto& st : s.valid_states())
        if (s.truth_area(st, 0) > best) best = s.truth_area(st, 0), best_state = st;
    const int dist = std::abs(anchor.col - best_state.cell.col) + std::abs(anchor.row - best_state.cell.row);
    EXPECT_EQ(dist, 1);
    EXPECT_TRUE(s.is_goal(0, best_state));
}

TEST_P(SyntheticGeometry, OcclusionLeavesOneBoxPerState) {
    const Scene s = synthetic(GetParam(), 4);
    for (const auto& st : s.valid_states()) {
        int boxes = 0;
        for (std::size_t k = 0; k < 4; ++k) boxes += s.truth_box(st, k).has_value();
        EXPECT_LE(boxes, 1) << to_string(st);
    }
    for (std::size_t k = 0; k < 4; ++k) EXPECT_FALSE(s.goal_states(k).empty());
}

TEST_P(SyntheticGeometry, FeaturesFiniteWithDeclaredDimension) {
    const Scene s = synthetic(GetParam(), 2);
    for (const auto& st : s.valid_states()) {
        const auto f = s.feature(st);
        ASSERT_EQ(f.size(), 32u);
        for (double v : f) EXPECT_TRUE(std::isfinite(v));
    }
}

INSTANTIATE_TEST_SUITE_P(Seeds, SyntheticGeometry, ::testing::Values(1, 7, 19, 23, 101));
