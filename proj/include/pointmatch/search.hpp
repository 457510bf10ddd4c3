#pragma once

#include <chrono>
#include <optional>
#include <utility>
#include <vector>

#include "pointmatch/sampling.hpp"
#include "pointmatch/similarity.hpp"
#include "pointmatch/volume.hpp"
#include "pointmatch/worker_pool.hpp"

namespace pointmatch {

// Coarse-to-fine schedule. Level 1 searches the whole target on a grid of level1_grid_mm;
// every later level halves the grid and searches a box of half-width box_mm[L-2] around the
// running best. Missing box entries continue the halving from the last given one.
struct SearchConfig {
    int levels = 5;
    double level1_grid_mm = 16.0;
    std::vector<double> box_mm{96.0, 48.0, 24.0, 12.0};
    MetricSpec metric;
    int threads = 1;

    double grid_mm(int level) const;
    double box_half_width_mm(int level) const;

    // Throws InvalidConfig.
    void validate() const;
};

struct LevelTrace {
    int level = 1;
    double grid_mm = 0.0;
    std::optional<double> box_mm; // empty for the whole-volume level
    WorldPoint best_point;
    double best_score = 0.0;
    std::size_t candidates = 0;
};

struct MatchResult {
    WorldPoint point;
    double score = 0.0;
    std::vector<LevelTrace> per_level;
    std::chrono::duration<double> elapsed{0.0};
};

// Grid nodes are anchor + n * step (n integer) that fall inside [lo, hi] and inside the
// target volume's voxel-centre box.
struct SearchRegion {
    WorldPoint anchor;
    WorldPoint lo;
    WorldPoint hi;

    static SearchRegion whole_volume(const Volume &target);
    static SearchRegion box_around(const WorldPoint &center, double half_width_mm);
};

struct SimilarityMap {
    int level = 1;
    WorldPoint origin; // world position of node (0,0,0)
    double grid_mm = 0.0;
    Dims dims{0, 0, 0};
    std::vector<double> scores; // x fastest

    WorldPoint node(int64_t i, int64_t j, int64_t k) const;
    // First maximum in (z, y, x) order, i.e. the smallest node on ties.
    std::pair<WorldPoint, double> argmax() const;
    Volume to_volume() const;
};

struct SearchResources {
    WorkerPool *pool = nullptr;            // null: run on the calling thread
    OffsetTableCache *tables = nullptr;    // null: tables are built per call
};

// Throws QueryOutOfBounds, EmptySearchSpace, InvalidConfig.
MatchResult match_point(const Volume &source, const Volume &target, const WorldPoint &query, const SearchConfig &cfg,
                        const SamplingModel &model = {}, SearchResources resources = {});

// Scores every node of `region` with descriptors at `level`. Slices of constant z are spread
// over the pool; the scores do not depend on the thread count.
// Throws QueryOutOfBounds, EmptySearchSpace.
SimilarityMap similarity_map(const Volume &source, const Volume &target, const WorldPoint &query, int level,
                             const SearchRegion &region, double grid_mm, const MetricSpec &metric,
                             const SamplingModel &model = {}, SearchResources resources = {},
                             std::size_t max_parallelism = 0);

// Serial brute force over the whole-volume grid using the plain similarity functions.
// Shares only the tie-break rule with match_point.
std::pair<WorldPoint, double> exhaustive_match(const Volume &source, const Volume &target, const WorldPoint &query,
                                               double grid_mm, int level, const MetricSpec &metric,
                                               const SamplingModel &model = {});

} // namespace pointmatch
