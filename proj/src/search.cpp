#include "pointmatch/search.hpp"

#include <cmath>
#include <limits>
#include <memory>
#include <string>

#include "pointmatch/error.hpp"

namespace pointmatch {

namespace {

constexpr double kNodeTolerance = 1e-9;

struct AxisNodes {
    int64_t first = 0;
    int64_t count = 0;
};

AxisNodes axis_nodes(double anchor, double step, double lo, double hi) {
    const auto first = static_cast<int64_t>(std::ceil((lo - anchor) / step - kNodeTolerance));
    const auto last = static_cast<int64_t>(std::floor((hi - anchor) / step + kNodeTolerance));
    return {first, std::max<int64_t>(0, last - first + 1)};
}

std::shared_ptr<const OffsetTable> table_for(const SamplingModel &model, OffsetTableCache *cache,
                                             const Spacing &spacing, int level) {
    const SamplingModel &m = model;
    if (cache && cache->model().resolutions_mm == m.resolutions_mm && cache->model().half_extent == m.half_extent)
        return cache->get(spacing, level);
    return std::make_shared<const OffsetTable>(build_offset_table(m, spacing, level));
}

VoxelPoint query_voxel(const Volume &source, const WorldPoint &query) {
    if (!query.finite()) throw QueryOutOfBounds("query point is not finite");
    const VoxelPoint q = source.voxel_of(query);
    if (!source.contains(q)) {
        throw QueryOutOfBounds("query (" + std::to_string(query.x) + ", " + std::to_string(query.y) + ", " +
                               std::to_string(query.z) + ") mm lies outside the source volume");
    }
    return q;
}

} // namespace

double SearchConfig::grid_mm(int level) const { return std::ldexp(level1_grid_mm, -(level - 1)); }

double SearchConfig::box_half_width_mm(int level) const {
    if (level < 2) return std::numeric_limits<double>::infinity();
    const auto idx = static_cast<std::size_t>(level - 2);
    if (idx < box_mm.size()) return box_mm[idx];
    return std::ldexp(box_mm.back(), -static_cast<int>(idx - box_mm.size() + 1));
}

void SearchConfig::validate() const {
    if (levels < 1 || levels > 12) throw InvalidConfig("levels must be in [1, 12], got " + std::to_string(levels));
    if (!(level1_grid_mm > 0.0) || !std::isfinite(level1_grid_mm)) throw InvalidConfig("level-1 grid must be > 0");
    if (threads < 1) throw InvalidConfig("threads must be >= 1");
    if (levels > 1 && box_mm.empty()) throw InvalidConfig("box schedule is empty");
    for (std::size_t i = 0; i < box_mm.size(); ++i) {
        if (!(box_mm[i] > 0.0) || !std::isfinite(box_mm[i])) throw InvalidConfig("box sizes must be > 0");
        if (i > 0 && !(box_mm[i] < box_mm[i - 1])) throw InvalidConfig("box schedule must be strictly decreasing");
    }
    metric.validate();
}

SearchRegion SearchRegion::whole_volume(const Volume &target) {
    return {target.origin(), target.origin(), target.far_corner()};
}

SearchRegion SearchRegion::box_around(const WorldPoint &center, double half_width_mm) {
    const WorldPoint h{half_width_mm, half_width_mm, half_width_mm};
    return {center, center - h, center + h};
}

WorldPoint SimilarityMap::node(int64_t i, int64_t j, int64_t k) const {
    return {origin.x + static_cast<double>(i) * grid_mm, origin.y + static_cast<double>(j) * grid_mm,
            origin.z + static_cast<double>(k) * grid_mm};
}

std::pair<WorldPoint, double> SimilarityMap::argmax() const {
    if (scores.empty()) throw EmptySearchSpace("similarity map is empty");
    std::size_t best = 0;
    for (std::size_t n = 1; n < scores.size(); ++n)
        if (scores[n] > scores[best]) best = n;
    const auto nx = static_cast<std::size_t>(dims[0]);
    const auto nxy = nx * static_cast<std::size_t>(dims[1]);
    return {node(static_cast<int64_t>(best % nx), static_cast<int64_t>((best % nxy) / nx),
                 static_cast<int64_t>(best / nxy)),
            scores[best]};
}

Volume SimilarityMap::to_volume() const {
    std::vector<float> values(scores.begin(), scores.end());
    return Volume(dims, {grid_mm, grid_mm, grid_mm}, origin, std::move(values));
}

SimilarityMap similarity_map(const Volume &source, const Volume &target, const WorldPoint &query, int level,
                             const SearchRegion &region, double grid_mm, const MetricSpec &metric,
                             const SamplingModel &model, SearchResources resources, std::size_t max_parallelism) {
    if (!(grid_mm > 0.0)) throw InvalidConfig("grid spacing must be > 0");
    const VoxelPoint qv = query_voxel(source, query);

    SimilarityMap map;
    map.level = level;
    map.grid_mm = grid_mm;
    const WorldPoint vol_lo = target.origin();
    const WorldPoint vol_hi = target.far_corner();
    for (int a = 0; a < 3; ++a) {
        const AxisNodes nodes = axis_nodes(region.anchor[a], grid_mm, std::max(region.lo[a], vol_lo[a]),
                                           std::min(region.hi[a], vol_hi[a]));
        if (nodes.count == 0) throw EmptySearchSpace("search region does not intersect the target volume");
        map.dims[a] = nodes.count;
        map.origin[a] = region.anchor[a] + static_cast<double>(nodes.first) * grid_mm;
    }
    map.scores.assign(static_cast<std::size_t>(map.dims[0] * map.dims[1] * map.dims[2]), 0.0);

    const auto query_table = table_for(model, resources.tables, source.spacing(), level);
    const auto target_table = table_for(model, resources.tables, target.spacing(), level);
    const Descriptor query_desc = extract_descriptor(source, *query_table, qv);
    const QueryScorer scorer(query_desc, metric);

    const auto score_slice = [&](std::size_t k) {
        Descriptor candidate;
        QueryScorer::Scratch scratch;
        std::size_t n = k * static_cast<std::size_t>(map.dims[0] * map.dims[1]);
        for (int64_t j = 0; j < map.dims[1]; ++j)
            for (int64_t i = 0; i < map.dims[0]; ++i, ++n) {
                const VoxelPoint cv = target.voxel_of(map.node(i, j, static_cast<int64_t>(k)));
                extract_descriptor(target, *target_table, cv, candidate);
                map.scores[n] = scorer.score(candidate, scratch);
            }
    };
    const auto slices = static_cast<std::size_t>(map.dims[2]);
    if (resources.pool) {
        resources.pool->parallel_for(slices, score_slice, max_parallelism);
    } else {
        for (std::size_t k = 0; k < slices; ++k) score_slice(k);
    }
    return map;
}

MatchResult match_point(const Volume &source, const Volume &target, const WorldPoint &query, const SearchConfig &cfg,
                        const SamplingModel &model, SearchResources resources) {
    cfg.validate();
    model.validate();
    query_voxel(source, query);

    const WorldPoint extent = target.far_corner() - target.origin();
    if (extent.x < cfg.level1_grid_mm && extent.y < cfg.level1_grid_mm && extent.z < cfg.level1_grid_mm)
        throw EmptySearchSpace("target volume is smaller than one level-1 grid cell");

    std::unique_ptr<WorkerPool> local_pool;
    if (!resources.pool && cfg.threads > 1) {
        local_pool = std::make_unique<WorkerPool>(static_cast<std::size_t>(cfg.threads));
        resources.pool = local_pool.get();
    }
    const auto parallelism = static_cast<std::size_t>(cfg.threads);

    const auto start = std::chrono::steady_clock::now();
    MatchResult result;
    WorldPoint best = query;
    for (int level = 1; level <= cfg.levels; ++level) {
        const double grid = cfg.grid_mm(level);
        const bool whole = level == 1;
        const double box = cfg.box_half_width_mm(level);
        const SearchRegion region = whole ? SearchRegion::whole_volume(target) : SearchRegion::box_around(best, box);
        const SimilarityMap map =
            similarity_map(source, target, query, level, region, grid, cfg.metric, model, resources, parallelism);
        const auto [point, score] = map.argmax();
        best = point;

        LevelTrace t;
        t.level = level;
        t.grid_mm = grid;
        if (!whole) t.box_mm = box;
        t.best_point = point;
        t.best_score = score;
        t.candidates = map.scores.size();
        result.per_level.push_back(t);
    }
    result.point = result.per_level.back().best_point;
    result.score = result.per_level.back().best_score;
    result.elapsed = std::chrono::steady_clock::now() - start;
    return result;
}

std::pair<WorldPoint, double> exhaustive_match(const Volume &source, const Volume &target, const WorldPoint &query,
                                               double grid_mm, int level, const MetricSpec &metric,
                                               const SamplingModel &model) {
    if (!(grid_mm > 0.0)) throw InvalidConfig("grid spacing must be > 0");
    const VoxelPoint qv = query_voxel(source, query);
    const Descriptor q = extract_descriptor(source, build_offset_table(model, source.spacing(), level), qv);
    const OffsetTable table = build_offset_table(model, target.spacing(), level);

    const WorldPoint o = target.origin();
    const WorldPoint extent = target.far_corner() - o;
    int64_t n[3];
    for (int a = 0; a < 3; ++a) n[a] = static_cast<int64_t>(std::floor(extent[a] / grid_mm + kNodeTolerance)) + 1;

    WorldPoint best_point = o;
    double best_score = -std::numeric_limits<double>::infinity();
    bool first = true;
    for (int64_t k = 0; k < n[2]; ++k)
        for (int64_t j = 0; j < n[1]; ++j)
            for (int64_t i = 0; i < n[0]; ++i) {
                const WorldPoint p{o.x + static_cast<double>(i) * grid_mm, o.y + static_cast<double>(j) * grid_mm,
                                   o.z + static_cast<double>(k) * grid_mm};
                const double s = similarity(metric, q, extract_descriptor(target, table, target.voxel_of(p)));
                if (first || s > best_score) {
                    best_score = s;
                    best_point = p;
                    first = false;
                }
            }
    return {best_point, best_score};
}

} // namespace pointmatch
