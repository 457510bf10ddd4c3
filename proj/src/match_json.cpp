#include "pointmatch/match_json.hpp"

namespace pointmatch {

nlohmann::json to_json(const LevelTrace &t) {
    nlohmann::json j = {{"level", t.level},
                        {"grid_mm", t.grid_mm},
                        {"box_mm", nullptr},
                        {"best_point_mm", {t.best_point.x, t.best_point.y, t.best_point.z}},
                        {"best_score", t.best_score},
                        {"candidates", t.candidates}};
    if (t.box_mm) j["box_mm"] = *t.box_mm;
    return j;
}

nlohmann::json to_json(const MatchResult &r) {
    nlohmann::json levels = nlohmann::json::array();
    for (const auto &t : r.per_level) levels.push_back(to_json(t));
    return {{"matched_point_mm", {r.point.x, r.point.y, r.point.z}},
            {"score", r.score},
            {"per_level", levels},
            {"elapsed_ms", r.elapsed.count() * 1000.0}};
}

nlohmann::json without_timing(nlohmann::json match) {
    match.erase("elapsed_ms");
    return match;
}

} // namespace pointmatch
