#include "pointmatch/volume.hpp"

#include <string>

#include "pointmatch/error.hpp"

namespace pointmatch {

std::string_view to_string(Modality m) {
    switch (m) {
    case Modality::CT: return "CT";
    case Modality::MR: return "MR";
    case Modality::Other: break;
    }
    return "OTHER";
}

Modality parse_modality(std::string_view s) {
    if (s == "CT" || s == "MET_MOD_CT") return Modality::CT;
    if (s == "MR" || s == "MET_MOD_MR") return Modality::MR;
    return Modality::Other;
}

Volume::Volume(Dims dims, Spacing spacing, WorldPoint origin, std::vector<float> intensities, Modality modality,
               double intensity_offset)
    : dims_(dims), spacing_(spacing), origin_(origin), data_(std::move(intensities)), modality_(modality),
      intensity_offset_(intensity_offset) {
    for (int a = 0; a < 3; ++a) {
        if (dims_[a] < 1) throw CorruptHeader("volume dimension " + std::to_string(a) + " must be >= 1");
        if (!(spacing_[a] > 0.0) || !std::isfinite(spacing_[a]))
            throw CorruptHeader("volume spacing " + std::to_string(a) + " must be positive");
    }
    if (!origin_.finite()) throw CorruptHeader("volume origin must be finite");
    const auto expected = static_cast<std::size_t>(dims_[0] * dims_[1] * dims_[2]);
    if (data_.size() != expected)
        throw PayloadSizeMismatch("expected " + std::to_string(expected) + " intensities, got " +
                                  std::to_string(data_.size()));
}

WorldPoint Volume::world_of(const VoxelPoint &q) const {
    return {origin_.x + static_cast<double>(q.i) * spacing_[0], origin_.y + static_cast<double>(q.j) * spacing_[1],
            origin_.z + static_cast<double>(q.k) * spacing_[2]};
}

VoxelPoint Volume::voxel_of(const WorldPoint &p) const {
    return {round_half_away((p.x - origin_.x) / spacing_[0]), round_half_away((p.y - origin_.y) / spacing_[1]),
            round_half_away((p.z - origin_.z) / spacing_[2])};
}

WorldPoint Volume::far_corner() const { return world_of({dims_[0] - 1, dims_[1] - 1, dims_[2] - 1}); }

bool Volume::contains_world(const WorldPoint &p, double tolerance) const {
    const WorldPoint hi = far_corner();
    for (int a = 0; a < 3; ++a) {
        if (p[a] < origin_[a] - tolerance || p[a] > hi[a] + tolerance) return false;
    }
    return true;
}

VoxelPoint world_to_voxel(const Volume &v, const WorldPoint &p) { return v.voxel_of(p); }
WorldPoint voxel_to_world(const Volume &v, const VoxelPoint &q) { return v.world_of(q); }

} // namespace pointmatch
