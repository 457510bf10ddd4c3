#pragma once

#include <array>
#include <cmath>
#include <cstdint>

namespace pointmatch {

// Position in millimetres in a volume's world frame.
struct WorldPoint {
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;

    friend bool operator==(const WorldPoint &, const WorldPoint &) = default;

    WorldPoint operator+(const WorldPoint &o) const { return {x + o.x, y + o.y, z + o.z}; }
    WorldPoint operator-(const WorldPoint &o) const { return {x - o.x, y - o.y, z - o.z}; }
    WorldPoint operator*(double s) const { return {x * s, y * s, z * s}; }

    double operator[](int axis) const { return axis == 0 ? x : (axis == 1 ? y : z); }
    double &operator[](int axis) { return axis == 0 ? x : (axis == 1 ? y : z); }

    bool finite() const { return std::isfinite(x) && std::isfinite(y) && std::isfinite(z); }
};

inline double norm(const WorldPoint &p) { return std::sqrt(p.x * p.x + p.y * p.y + p.z * p.z); }
inline double distance(const WorldPoint &a, const WorldPoint &b) { return norm(a - b); }

// Integer voxel index. Not bounds-checked at construction.
struct VoxelPoint {
    int64_t i = 0;
    int64_t j = 0;
    int64_t k = 0;

    friend bool operator==(const VoxelPoint &, const VoxelPoint &) = default;
};

using Dims = std::array<int64_t, 3>;
using Spacing = std::array<double, 3>;

// Round to nearest, ties away from zero. Used for every mm -> voxel conversion.
inline int64_t round_half_away(double v) { return static_cast<int64_t>(std::round(v)); }

} // namespace pointmatch
