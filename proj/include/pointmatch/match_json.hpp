#pragma once

#include <json.hpp>

#include "pointmatch/search.hpp"

namespace pointmatch {

// Wire form of a match, shared by the CLI and the HTTP service:
// {"matched_point_mm": [x,y,z], "score": s, "per_level": [...], "elapsed_ms": t}
nlohmann::json to_json(const MatchResult &r);
nlohmann::json to_json(const LevelTrace &t);

// Same object without timing, for comparing runs.
nlohmann::json without_timing(nlohmann::json match);

} // namespace pointmatch
