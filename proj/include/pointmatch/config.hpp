#pragma once

#include <filesystem>
#include <string>

#include "pointmatch/sampling.hpp"
#include "pointmatch/search.hpp"

namespace pointmatch {

// Everything the engine can be configured with. Files are plain `key = value` lines;
// '#' starts a comment. Recognised keys:
//   levels, level1_grid_mm, box_mm (comma list), metric, threads, bins,
//   cosine_weight, mi_weight, resolutions_mm (comma list), half_extent, intensity_offset,
//   early_exit (reserved, must be off)
struct EngineConfig {
    SearchConfig search;
    SamplingModel model;
    double intensity_offset = 0.0;

    // Throws InvalidConfig for unknown keys or malformed values.
    void set(const std::string &key, const std::string &value);
    void validate() const;
};

EngineConfig load_engine_config(const std::filesystem::path &path);

// Defaults, with threads taken from POINTMATCH_THREADS when set.
EngineConfig default_engine_config();

} // namespace pointmatch
