#include "pointmatch/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <string>

#include "pointmatch/error.hpp"

namespace pointmatch {

std::size_t SamplingModel::dimensionality() const {
    const std::size_t n = steps_per_axis();
    return resolutions_mm.size() * n * n * n;
}

double SamplingModel::level_scale(int level) { return std::ldexp(1.0, -(level - 1)); }

std::vector<double> SamplingModel::effective_spacings(int level) const {
    std::vector<double> out;
    out.reserve(resolutions_mm.size());
    for (double r : resolutions_mm) out.push_back(r * level_scale(level));
    return out;
}

double SamplingModel::max_offset_mm(int level) const {
    double m = 0.0;
    for (double r : resolutions_mm) m = std::max(m, r);
    return static_cast<double>(half_extent) * m * level_scale(level);
}

std::vector<std::array<double, 3>> SamplingModel::mm_offsets(int level) const {
    const double scale = level_scale(level);
    std::vector<std::array<double, 3>> out;
    out.reserve(dimensionality());
    for (double r : resolutions_mm) {
        const double step = r * scale;
        for (int z = -half_extent; z <= half_extent; ++z)
            for (int y = -half_extent; y <= half_extent; ++y)
                for (int x = -half_extent; x <= half_extent; ++x) out.push_back({x * step, y * step, z * step});
    }
    return out;
}

void SamplingModel::validate() const {
    if (resolutions_mm.empty()) throw InvalidConfig("sampling model needs at least one resolution");
    for (double r : resolutions_mm)
        if (!(r > 0.0) || !std::isfinite(r)) throw InvalidConfig("sampling resolutions must be positive");
    if (half_extent < 0) throw InvalidConfig("half_extent must be >= 0");
}

OffsetTable build_offset_table(const SamplingModel &model, const Spacing &spacing, int level) {
    if (level < 1) throw InvalidConfig("level must be >= 1, got " + std::to_string(level));
    for (double s : spacing)
        if (!(s > 0.0)) throw InvalidConfig("spacing must be positive");
    model.validate();

    OffsetTable table;
    table.level = level;
    table.spacing = spacing;
    const auto mm = model.mm_offsets(level);
    table.offsets.reserve(mm.size());
    constexpr int32_t lo = std::numeric_limits<int32_t>::min();
    constexpr int32_t hi = std::numeric_limits<int32_t>::max();
    table.min_offset = {hi, hi, hi};
    table.max_offset = {lo, lo, lo};
    for (const auto &o : mm) {
        const VoxelOffset v{static_cast<int32_t>(round_half_away(o[0] / spacing[0])),
                            static_cast<int32_t>(round_half_away(o[1] / spacing[1])),
                            static_cast<int32_t>(round_half_away(o[2] / spacing[2]))};
        table.offsets.push_back(v);
        table.min_offset = {std::min(table.min_offset.dx, v.dx), std::min(table.min_offset.dy, v.dy),
                            std::min(table.min_offset.dz, v.dz)};
        table.max_offset = {std::max(table.max_offset.dx, v.dx), std::max(table.max_offset.dy, v.dy),
                            std::max(table.max_offset.dz, v.dz)};
    }
    return table;
}

bool Descriptor::fully_valid() const {
    return valid.empty() || std::memchr(valid.data(), 0, valid.size()) == nullptr;
}

Descriptor extract_descriptor(const Volume &v, const OffsetTable &table, const VoxelPoint &q) {
    Descriptor d;
    extract_descriptor(v, table, q, d);
    return d;
}

void extract_descriptor(const Volume &v, const OffsetTable &table, const VoxelPoint &q, Descriptor &out) {
    const std::size_t n = table.offsets.size();
    out.values.resize(n);
    out.valid.resize(n);
    const auto &dims = v.dims();
    const int64_t nx = dims[0];
    const int64_t nxy = dims[0] * dims[1];
    const float *data = v.intensities().data();

    const bool inside = v.contains({q.i + table.min_offset.dx, q.j + table.min_offset.dy, q.k + table.min_offset.dz}) &&
                        v.contains({q.i + table.max_offset.dx, q.j + table.max_offset.dy, q.k + table.max_offset.dz});
    if (inside) {
        const int64_t base = q.k * nxy + q.j * nx + q.i;
        for (std::size_t d = 0; d < n; ++d) {
            const auto &o = table.offsets[d];
            out.values[d] = data[base + o.dz * nxy + o.dy * nx + o.dx];
        }
        std::memset(out.valid.data(), 1, n);
        return;
    }
    for (std::size_t d = 0; d < n; ++d) {
        const auto &o = table.offsets[d];
        const Sample s = sample_at(v, {q.i + o.dx, q.j + o.dy, q.k + o.dz});
        out.values[d] = s.value;
        out.valid[d] = s.in_bounds ? 1 : 0;
    }
}

namespace {

// Uniform bucket grid over the sampling positions for nearest-neighbour lookups.
class PositionIndex {
  public:
    explicit PositionIndex(std::vector<std::array<double, 3>> points) : points_(std::move(points)) {
        for (const auto &p : points_)
            for (int a = 0; a < 3; ++a) {
                lo_[a] = std::min(lo_[a], p[a]);
                hi_[a] = std::max(hi_[a], p[a]);
            }
        double extent = 0.0;
        for (int a = 0; a < 3; ++a) extent = std::max(extent, hi_[a] - lo_[a]);
        // About 16 buckets per axis keeps both the bucket count and the per-bucket lists small.
        cell_ = extent > 0.0 ? extent / 16.0 : 1.0;
        for (int a = 0; a < 3; ++a) cells_[a] = static_cast<int>(std::floor((hi_[a] - lo_[a]) / cell_)) + 1;
        buckets_.resize(static_cast<std::size_t>(cells_[0] * cells_[1] * cells_[2]));
        for (std::size_t i = 0; i < points_.size(); ++i) buckets_[bucket_of(points_[i])].push_back(i);
    }

    std::size_t nearest(const std::array<double, 3> &p) const {
        std::array<int, 3> c{};
        for (int a = 0; a < 3; ++a)
            c[a] = std::clamp(static_cast<int>(std::floor((p[a] - lo_[a]) / cell_)), 0, cells_[a] - 1);
        double best_d2 = std::numeric_limits<double>::infinity();
        std::size_t best = 0;
        const int max_ring = std::max({cells_[0], cells_[1], cells_[2]});
        for (int ring = 0; ring <= max_ring; ++ring) {
            // Everything outside this ring is at least `ring * cell_` away from the query's bucket,
            // minus the distance from the query to that bucket when the query lies outside the grid.
            double outside = 0.0;
            for (int a = 0; a < 3; ++a) {
                const double clamped = std::clamp(p[a], lo_[a], lo_[a] + cells_[a] * cell_);
                outside = std::max(outside, std::abs(p[a] - clamped));
            }
            const double reach = std::max(0.0, (ring - 1) * cell_ - outside);
            if (best_d2 < std::numeric_limits<double>::infinity() && reach * reach > best_d2) break;
            for (int z = c[2] - ring; z <= c[2] + ring; ++z)
                for (int y = c[1] - ring; y <= c[1] + ring; ++y)
                    for (int x = c[0] - ring; x <= c[0] + ring; ++x) {
                        if (std::max({std::abs(x - c[0]), std::abs(y - c[1]), std::abs(z - c[2])}) != ring) continue;
                        if (x < 0 || y < 0 || z < 0 || x >= cells_[0] || y >= cells_[1] || z >= cells_[2]) continue;
                        for (std::size_t i : buckets_[static_cast<std::size_t>((z * cells_[1] + y) * cells_[0] + x)]) {
                            const auto &q = points_[i];
                            const double d2 = (q[0] - p[0]) * (q[0] - p[0]) + (q[1] - p[1]) * (q[1] - p[1]) +
                                              (q[2] - p[2]) * (q[2] - p[2]);
                            if (d2 < best_d2 || (d2 == best_d2 && i < best)) {
                                best_d2 = d2;
                                best = i;
                            }
                        }
                    }
        }
        return best;
    }

  private:
    std::size_t bucket_of(const std::array<double, 3> &p) const {
        std::array<int, 3> c{};
        for (int a = 0; a < 3; ++a)
            c[a] = std::clamp(static_cast<int>(std::floor((p[a] - lo_[a]) / cell_)), 0, cells_[a] - 1);
        return static_cast<std::size_t>((c[2] * cells_[1] + c[1]) * cells_[0] + c[0]);
    }

    std::vector<std::array<double, 3>> points_;
    std::array<double, 3> lo_{std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity(),
                              std::numeric_limits<double>::infinity()};
    std::array<double, 3> hi_{-std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity(),
                              -std::numeric_limits<double>::infinity()};
    double cell_ = 1.0;
    std::array<int, 3> cells_{1, 1, 1};
    std::vector<std::vector<std::size_t>> buckets_;
};

} // namespace

Volume decode_descriptor(const Descriptor &d, const OffsetTable &table, const Dims &canvas_dims,
                         const Spacing &canvas_spacing, const WorldPoint &center) {
    if (d.size() != table.size()) throw InvalidConfig("descriptor and offset table lengths differ");
    std::vector<std::array<double, 3>> positions;
    positions.reserve(table.size());
    for (const auto &o : table.offsets)
        positions.push_back({o.dx * table.spacing[0], o.dy * table.spacing[1], o.dz * table.spacing[2]});
    const PositionIndex index(std::move(positions));

    const WorldPoint origin{center.x - 0.5 * static_cast<double>(canvas_dims[0] - 1) * canvas_spacing[0],
                            center.y - 0.5 * static_cast<double>(canvas_dims[1] - 1) * canvas_spacing[1],
                            center.z - 0.5 * static_cast<double>(canvas_dims[2] - 1) * canvas_spacing[2]};
    std::vector<float> canvas(static_cast<std::size_t>(canvas_dims[0] * canvas_dims[1] * canvas_dims[2]));
    std::size_t n = 0;
    for (int64_t k = 0; k < canvas_dims[2]; ++k)
        for (int64_t j = 0; j < canvas_dims[1]; ++j)
            for (int64_t i = 0; i < canvas_dims[0]; ++i) {
                const std::array<double, 3> rel{origin.x + i * canvas_spacing[0] - center.x,
                                                origin.y + j * canvas_spacing[1] - center.y,
                                                origin.z + k * canvas_spacing[2] - center.z};
                canvas[n++] = d.values[index.nearest(rel)];
            }
    return Volume(canvas_dims, canvas_spacing, origin, std::move(canvas));
}

OffsetTableCache::OffsetTableCache(SamplingModel model) : model_(std::move(model)) { model_.validate(); }

std::shared_ptr<const OffsetTable> OffsetTableCache::get(const Spacing &spacing, int level) {
    const Key key{spacing[0], spacing[1], spacing[2], level};
    std::lock_guard lock(mutex_);
    auto it = tables_.find(key);
    if (it != tables_.end()) return it->second;
    auto table = std::make_shared<const OffsetTable>(build_offset_table(model_, spacing, level));
    tables_.emplace(key, table);
    return table;
}

std::size_t OffsetTableCache::size() const {
    std::lock_guard lock(mutex_);
    return tables_.size();
}

} // namespace pointmatch
