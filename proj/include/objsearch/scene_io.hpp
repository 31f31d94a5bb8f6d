#ifndef OBJSEARCH_SCENE_IO_HPP
#define OBJSEARCH_SCENE_IO_HPP

#include <filesystem>
#include <fstream>
#include <string>

#include <json.hpp>

#include "objsearch/error.hpp"
#include "objsearch/scene.hpp"

namespace objsearch {

// Scene file layout (JSON):
//   { "name": str,
//     "grid": {"width": int, "height": int, "headings": 4, "tilts": int},
//     "feature_dim": int,
//     "blocked": [[col, row], ...],
//     "objects": [{"id": str, "anchor": [col, row], "target_feature": [num...]}],
//     "states": [{"cell": [col, row], "heading": int, "tilt": int,
//                 "feature": [num...], "boxes": {id: [x, y, w, h]}}] }
// `feature_dim` is optional and inferred from the first object when absent.

inline nlohmann::json scene_to_json(const Scene& scene) {
    const SceneData d = scene.to_data();
    nlohmann::json j;
    j["name"] = d.name;
    j["grid"] = {{"width", d.grid.width}, {"height", d.grid.height}, {"headings", d.grid.headings},
                 {"tilts", d.grid.tilts}};
    j["feature_dim"] = d.feature_dim;
    j["blocked"] = nlohmann::json::array();
    for (const Cell& c : d.blocked) j["blocked"].push_back({c.col, c.row});
    j["objects"] = nlohmann::json::array();
    for (const ObjectSpec& o : d.objects)
        j["objects"].push_back(
            {{"id", o.id}, {"anchor", {o.anchor.col, o.anchor.row}}, {"target_feature", o.target_feature}});
    j["states"] = nlohmann::json::array();
    for (const auto& rec : d.states) {
        nlohmann::json boxes = nlohmann::json::object();
        for (const auto& [id, b] : rec.boxes) boxes[id] = {b.x, b.y, b.w, b.h};
        j["states"].push_back({{"cell", {rec.state.cell.col, rec.state.cell.row}},
                               {"heading", rec.state.heading},
                               {"tilt", rec.state.tilt},
                               {"feature", rec.feature},
                               {"boxes", std::move(boxes)}});
    }
    return j;
}

inline Scene scene_from_json(const nlohmann::json& j) {
    SceneData d;
    try {
        d.name = j.value("name", std::string("scene"));
        const auto& g = j.at("grid");
        d.grid.width = g.at("width").get<int>();
        d.grid.height = g.at("height").get<int>();
        d.grid.headings = g.value("headings", 4);
        d.grid.tilts = g.value("tilts", 3);
        const nlohmann::json blocked = j.value("blocked", nlohmann::json::array());
        for (const auto& c : blocked)
            d.blocked.push_back({c.at(0).get<int>(), c.at(1).get<int>()});
        for (const auto& o : j.at("objects")) {
            ObjectSpec spec;
            spec.id = o.at("id").get<std::string>();
            spec.anchor = {o.at("anchor").at(0).get<int>(), o.at("anchor").at(1).get<int>()};
            spec.target_feature = o.at("target_feature").get<std::vector<double>>();
            d.objects.push_back(std::move(spec));
        }
        if (j.contains("feature_dim")) {
            d.feature_dim = j.at("feature_dim").get<int>();
        } else if (!d.objects.empty()) {
            d.feature_dim = static_cast<int>(d.objects.front().target_feature.size());
        } else if (!j.at("states").empty()) {
            d.feature_dim = static_cast<int>(j.at("states").at(0).at("feature").size());
        }
        for (const auto& s : j.at("states")) {
            SceneData::StateRecord rec;
            rec.state.cell = {s.at("cell").at(0).get<int>(), s.at("cell").at(1).get<int>()};
            rec.state.heading = s.at("heading").get<int>();
            rec.state.tilt = s.at("tilt").get<int>();
            rec.feature = s.at("feature").get<std::vector<double>>();
            const nlohmann::json boxes = s.value("boxes", nlohmann::json::object());
            for (const auto& [id, arr] : boxes.items()) {
                if (arr.size() != 4) throw ParseError("box for object '" + id + "' must have 4 numbers");
                rec.boxes.emplace_back(id, Box{arr.at(0).get<double>(), arr.at(1).get<double>(),
                                               arr.at(2).get<double>(), arr.at(3).get<double>()});
            }
            d.states.push_back(std::move(rec));
        }
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("scene format: ") + e.what());
    }
    return Scene(std::move(d));
}

inline Scene load_scene(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open scene file " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
    return scene_from_json(j);
}

inline void save_scene(const Scene& scene, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write scene file " + path.string());
    out << scene_to_json(scene).dump(1) << '\n';
    if (!out) throw IoError("write failed for " + path.string());
}

} // namespace objsearch

#endif // OBJSEARCH_SCENE_IO_HPP
