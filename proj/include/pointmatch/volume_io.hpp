#pragma once

#include <filesystem>

#include "pointmatch/volume.hpp"

namespace pointmatch {

// On-disk scalar types understood by the readers and writers.
enum class ElementType { Short, UShort, Float };

// Reads a MetaImage (.mha with a LOCAL payload, or .mhd with a detached raw file) or a
// raw+JSON sidecar pair (<name>.json describing <name>.raw). Stored values are promoted to
// float and intensity_offset is added to every voxel.
//
// Throws UnsupportedFormat, CorruptHeader or PayloadSizeMismatch.
Volume load_volume(const std::filesystem::path &path, double intensity_offset = 0.0);

// Writes a volume. The format follows the extension: .mha, .mhd (+ .raw), or .json (+ .raw).
// Integer element types round to nearest and saturate.
void write_volume(const Volume &volume, const std::filesystem::path &path, ElementType type = ElementType::Float);

} // namespace pointmatch
