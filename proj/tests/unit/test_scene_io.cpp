#include <gtest/gtest.h>

#include <fstream>

#include "objsearch/scene_io.hpp"
#include "support.hpp"

using namespace objsearch;
using testing_support::fixture;

TEST(SceneIo, FixtureRoundTripsThroughJson) {
    const Scene s = load_scene(fixture("scene_5x5.json"));
    EXPECT_EQ(scene_from_json(scene_to_json(s)), s);
}

TEST(SceneIo, MissingFileIsIoError) {
    EXPECT_THROW(load_scene(fixture("does_not_exist.json")), IoError);
}

TEST(SceneIo, MalformedJsonIsParseError) {
    const auto dir = testing_support::scratch_dir("scene_io_bad");
    std::ofstream(dir / "bad.json") << "{\"grid\": [1, 2";
    EXPECT_THROW(load_scene(dir / "bad.json"), ParseError);
}

TEST(SceneIo, MissingGridIsParseError) {
    nlohmann::json j = scene_to_json(load_scene(fixture("scene_5x5.json")));
    j.erase("grid");
    EXPECT_THROW(scene_from_json(j), ParseError);
}

TEST(SceneIo, ShortBoxIsParseError) {
    nlohmann::json j = scene_to_json(load_scene(fixture("scene_5x5.json")));
    j["states"][0]["boxes"]["mug"] = {0.5, 0.5, 0.1};
    EXPECT_THROW(scene_from_json(j), ParseError);
}

TEST(SceneIo, FeatureDimInferredWhenAbsent) {
    nlohmann::json j = scene_to_json(load_scene(fixture("scene_5x5.json")));
    j.erase("feature_dim");
    EXPECT_EQ(scene_from_json(j).feature_dim(), 4);
}

TEST(SceneIo, UnwritablePathIsIoError) {
    const Scene s = load_scene(fixture("scene_5x5.json"));
    EXPECT_THROW(save_scene(s, "/nonexistent_dir/x/scene.json"), IoError);
}
