#pragma once

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include "pointmatch/geometry.hpp"

namespace pointmatch {

enum class Modality { CT, MR, Other };

std::string_view to_string(Modality m);
Modality parse_modality(std::string_view s);

// Axis-aligned 3D scalar image. Intensities are stored x-fastest, then y, then z.
// Immutable once constructed, so a single instance can be shared by any number of readers.
class Volume {
  public:
    Volume(Dims dims, Spacing spacing, WorldPoint origin, std::vector<float> intensities,
           Modality modality = Modality::Other, double intensity_offset = 0.0);

    const Dims &dims() const { return dims_; }
    const Spacing &spacing() const { return spacing_; }
    const WorldPoint &origin() const { return origin_; }
    Modality modality() const { return modality_; }
    double intensity_offset() const { return intensity_offset_; }
    std::span<const float> intensities() const { return data_; }
    std::size_t voxel_count() const { return data_.size(); }

    bool contains(const VoxelPoint &q) const {
        return q.i >= 0 && q.j >= 0 && q.k >= 0 && q.i < dims_[0] && q.j < dims_[1] && q.k < dims_[2];
    }
    std::size_t linear_index(const VoxelPoint &q) const {
        return static_cast<std::size_t>((q.k * dims_[1] + q.j) * dims_[0] + q.i);
    }
    float at(const VoxelPoint &q) const { return data_[linear_index(q)]; }

    WorldPoint world_of(const VoxelPoint &q) const;
    VoxelPoint voxel_of(const WorldPoint &p) const;

    // World position of the last voxel centre; together with origin() this bounds the volume.
    WorldPoint far_corner() const;
    // True if p lies within the box spanned by the voxel centres (inclusive).
    bool contains_world(const WorldPoint &p, double tolerance = 1e-9) const;

  private:
    Dims dims_;
    Spacing spacing_;
    WorldPoint origin_;
    std::vector<float> data_;
    Modality modality_;
    double intensity_offset_;
};

struct Sample {
    float value = 0.0f;
    bool in_bounds = false;
};

// Total lookup: out-of-volume reads yield 0 with in_bounds = false.
inline Sample sample_at(const Volume &v, const VoxelPoint &q) {
    if (!v.contains(q)) return {};
    return {v.at(q), true};
}

VoxelPoint world_to_voxel(const Volume &v, const WorldPoint &p);
WorldPoint voxel_to_world(const Volume &v, const VoxelPoint &q);

} // namespace pointmatch
