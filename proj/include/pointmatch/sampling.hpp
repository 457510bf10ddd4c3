#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <tuple>
#include <vector>

#include "pointmatch/volume.hpp"

namespace pointmatch {

// Multi-resolution sampling pattern defined in millimetres.
//
// Each resolution contributes a (2*half_extent+1)^3 grid of offsets centred on the query
// point. At search level L every offset is multiplied by 2^-(L-1).
//
// Dimension order is fixed: resolution-major (in the order given), then z, y, x ascending
// over the grid steps -half_extent..half_extent. Descriptors produced by different processes
// are therefore directly comparable.
struct SamplingModel {
    std::vector<double> resolutions_mm{8.0, 20.0, 48.0, 128.0};
    int half_extent = 3;

    std::size_t steps_per_axis() const { return static_cast<std::size_t>(2 * half_extent + 1); }
    std::size_t dimensionality() const;

    static double level_scale(int level);

    // Grid spacing of every resolution at the given level, in mm.
    std::vector<double> effective_spacings(int level) const;
    // Largest per-axis offset magnitude at the given level, in mm.
    double max_offset_mm(int level) const;
    // All offsets in mm at the given level, in descriptor order.
    std::vector<std::array<double, 3>> mm_offsets(int level) const;

    // Throws InvalidConfig.
    void validate() const;
};

struct VoxelOffset {
    int32_t dx = 0;
    int32_t dy = 0;
    int32_t dz = 0;

    friend bool operator==(const VoxelOffset &, const VoxelOffset &) = default;
};

// The sampling model realised as integer voxel offsets for one voxel spacing and level.
// Duplicate offsets are kept so the descriptor length never changes.
struct OffsetTable {
    int level = 1;
    Spacing spacing{1.0, 1.0, 1.0};
    std::vector<VoxelOffset> offsets;
    VoxelOffset min_offset;
    VoxelOffset max_offset;

    std::size_t size() const { return offsets.size(); }
};

OffsetTable build_offset_table(const SamplingModel &model, const Spacing &spacing, int level);

// Sampled intensities plus an in-volume mask. Invalid entries always hold 0.
struct Descriptor {
    std::vector<float> values;
    std::vector<uint8_t> valid;

    std::size_t size() const { return values.size(); }
    bool fully_valid() const;
};

Descriptor extract_descriptor(const Volume &v, const OffsetTable &table, const VoxelPoint &q);
// Same as above but reuses the storage of `out`.
void extract_descriptor(const Volume &v, const OffsetTable &table, const VoxelPoint &q, Descriptor &out);

// Rebuilds an image from a descriptor: each canvas voxel takes the value of the sampling
// position nearest to it (Euclidean, mm; the first such position on ties). Sampling positions
// are the realised voxel offsets times the table's spacing. The canvas is centred on `center`.
// Intended for visual inspection.
Volume decode_descriptor(const Descriptor &d, const OffsetTable &table, const Dims &canvas_dims,
                         const Spacing &canvas_spacing, const WorldPoint &center = {});

// Tables are built once per (spacing, level) and shared by every volume with that spacing.
class OffsetTableCache {
  public:
    explicit OffsetTableCache(SamplingModel model = {});

    std::shared_ptr<const OffsetTable> get(const Spacing &spacing, int level);
    const SamplingModel &model() const { return model_; }
    std::size_t size() const;

  private:
    using Key = std::tuple<double, double, double, int>;
    SamplingModel model_;
    mutable std::mutex mutex_;
    std::map<Key, std::shared_ptr<const OffsetTable>> tables_;
};

} // namespace pointmatch
