// Shared helpers for the unit and acceptance tests: independent reference implementations
// ("oracles") that deliberately avoid the library's own code paths, plus small fixtures.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "pointmatch/eval.hpp"
#include "pointmatch/phantom.hpp"
#include "pointmatch/volume_io.hpp"
#include "pointmatch/sampling.hpp"
#include "pointmatch/similarity.hpp"
#include "pointmatch/volume.hpp"

namespace oracle {

using pointmatch::Descriptor;
using pointmatch::Volume;

// floor(|x| + 0.5) with the sign of x.
inline long long round_away(double x) {
    const double m = std::floor(std::fabs(x) + 0.5);
    return static_cast<long long>(x < 0 ? -m : m);
}

// Samples every offset directly: no offset tables, no bounding-box shortcut.
inline Descriptor descriptor(const Volume &v, const std::vector<double> &resolutions, int half_extent, int level,
                             long long qi, long long qj, long long qk) {
    Descriptor d;
    const double scale = 1.0 / std::pow(2.0, level - 1);
    const auto &sp = v.spacing();
    const auto &dims = v.dims();
    const auto data = v.intensities();
    for (double res : resolutions)
        for (int z = -half_extent; z <= half_extent; ++z)
            for (int y = -half_extent; y <= half_extent; ++y)
                for (int x = -half_extent; x <= half_extent; ++x) {
                    const long long i = qi + round_away(x * res * scale / sp[0]);
                    const long long j = qj + round_away(y * res * scale / sp[1]);
                    const long long k = qk + round_away(z * res * scale / sp[2]);
                    const bool in = i >= 0 && j >= 0 && k >= 0 && i < dims[0] && j < dims[1] && k < dims[2];
                    d.values.push_back(in ? data[static_cast<std::size_t>((k * dims[1] + j) * dims[0] + i)] : 0.0f);
                    d.valid.push_back(in ? 1 : 0);
                }
    return d;
}

inline double cosine(const Descriptor &a, const Descriptor &b) {
    long double ab = 0, aa = 0, bb = 0;
    for (std::size_t i = 0; i < a.values.size(); ++i) {
        ab += static_cast<long double>(a.values[i]) * b.values[i];
        aa += static_cast<long double>(a.values[i]) * a.values[i];
        bb += static_cast<long double>(b.values[i]) * b.values[i];
    }
    if (aa == 0 || bb == 0) return 0.0;
    return static_cast<double>(ab / std::sqrt(aa * bb));
}

inline double euclidean(const Descriptor &a, const Descriptor &b) {
    long double s = 0;
    for (std::size_t i = 0; i < a.values.size(); ++i) {
        const long double d = static_cast<long double>(a.values[i]) - b.values[i];
        s += d * d;
    }
    return -static_cast<double>(std::sqrt(s));
}

// Bin of v for a descriptor whose selected values span [lo, hi].
inline int bin_of(float v, float lo, float hi, int bins) {
    const double t = (static_cast<double>(v) - static_cast<double>(lo)) / (static_cast<double>(hi) - lo);
    return std::min(static_cast<int>(std::floor(t * bins)), bins - 1);
}

// Bins of the entries valid in both descriptors; empty when either side is degenerate.
inline std::pair<std::vector<int>, std::vector<int>> joint_bins(const Descriptor &a, const Descriptor &b, int bins) {
    std::vector<float> va, vb;
    for (std::size_t i = 0; i < a.values.size(); ++i)
        if (a.valid[i] && b.valid[i]) {
            va.push_back(a.values[i]);
            vb.push_back(b.values[i]);
        }
    if (va.size() < 2) return {};
    const auto [alo, ahi] = std::minmax_element(va.begin(), va.end());
    const auto [blo, bhi] = std::minmax_element(vb.begin(), vb.end());
    if (*alo == *ahi || *blo == *bhi) return {};
    std::vector<int> ba, bb;
    for (std::size_t i = 0; i < va.size(); ++i) {
        ba.push_back(bin_of(va[i], *alo, *ahi, bins));
        bb.push_back(bin_of(vb[i], *blo, *bhi, bins));
    }
    return {ba, bb};
}

// Plug-in mutual information, natural log, from explicit probability tables.
inline double mutual_info(const Descriptor &a, const Descriptor &b, int bins = 16) {
    const auto [ba, bb] = joint_bins(a, b, bins);
    if (ba.empty()) return 0.0;
    std::map<std::pair<int, int>, long double> pxy;
    std::map<int, long double> px, py;
    const long double w = 1.0L / ba.size();
    for (std::size_t i = 0; i < ba.size(); ++i) {
        pxy[{ba[i], bb[i]}] += w;
        px[ba[i]] += w;
        py[bb[i]] += w;
    }
    long double mi = 0;
    for (const auto &[xy, p] : pxy) mi += p * std::log(p / (px[xy.first] * py[xy.second]));
    return static_cast<double>(std::max(mi, 0.0L));
}

} // namespace oracle

namespace fixtures {

// Random descriptor: integer-valued intensities, a few invalid entries when `holes` is set.
inline pointmatch::Descriptor random_descriptor(std::mt19937_64 &rng, std::size_t n, bool holes) {
    std::uniform_int_distribution<int> value(0, 4095);
    std::bernoulli_distribution hole(0.1);
    pointmatch::Descriptor d;
    d.values.resize(n);
    d.valid.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const bool on = !(holes && hole(rng));
        d.values[i] = on ? static_cast<float>(value(rng)) : 0.0f;
        d.valid[i] = on ? 1 : 0;
    }
    return d;
}

// Small, coarse phantoms for tests that need many volumes.
inline pointmatch::PhantomSpec small_spec() {
    pointmatch::PhantomSpec s;
    s.fov_mm = {96.0, 96.0, 64.0};
    s.spacings = {{2.0, 2.0, 2.0}, {2.5, 2.5, 3.0}, {3.0, 2.0, 2.5}};
    s.max_translation_mm = 20.0;
    s.lesions = 6;
    return s;
}

inline pointmatch::Volume constant_volume(pointmatch::Dims dims, float value, pointmatch::Spacing spacing = {1, 1, 1},
                                          pointmatch::WorldPoint origin = {}) {
    return pointmatch::Volume(dims, spacing, origin,
                              std::vector<float>(static_cast<std::size_t>(dims[0] * dims[1] * dims[2]), value));
}

// A fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string &name) {
    const auto dir = std::filesystem::temp_directory_path() / ("pointmatch_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

// Ten annotations on a textured self-pair. Queries sit on level-1 grid nodes of a volume with
// its origin at zero, so matching returns the query exactly and the distance to the truth is
// the designed offset. Hand counts for the designed (distance, radius) list:
//   hits under min(r, 10): rows 0, 1, 2, 4, 5, 9 -> CPM 0.6
//   mean 6.4 mm, lower median 5.5 mm
struct MetricsFixture {
    std::vector<pointmatch::AnnotationPair> pairs;
    std::vector<double> distances;
    std::vector<double> radii;
};

// Small phantoms on a 1 mm grid, where every finest-level node has its own voxel.
inline pointmatch::PhantomSpec fine_spec() {
    pointmatch::PhantomSpec s = small_spec();
    s.spacings = {{1.0, 1.0, 1.0}};
    return s;
}

inline MetricsFixture metrics_fixture(const std::filesystem::path &dir) {
    const pointmatch::PhantomPair p = pointmatch::make_phantom_pair(99, fine_spec());
    const pointmatch::Volume v(p.source.dims(), p.source.spacing(), {0.0, 0.0, 0.0},
                               std::vector<float>(p.source.intensities().begin(), p.source.intensities().end()));
    const auto path = dir / "self.mha";
    pointmatch::write_volume(v, path, pointmatch::ElementType::UShort);

    MetricsFixture f;
    f.distances = {0.0, 3.0, 5.0, 5.5, 9.0, 10.0, 10.5, 2.0, 12.0, 7.0};
    f.radii = {5.0, 5.0, 5.0, 5.0, 20.0, 20.0, 20.0, 1.0, 30.0, 8.0};
    const std::vector<pointmatch::WorldPoint> queries{{32, 32, 32}, {48, 48, 32}, {64, 48, 32}, {48, 32, 16},
                                                      {32, 64, 16}, {48, 48, 48}, {64, 32, 48}, {32, 48, 32},
                                                      {64, 64, 32}, {48, 64, 16}};
    for (std::size_t n = 0; n < queries.size(); ++n) {
        pointmatch::AnnotationPair a;
        a.pair_id = "fx" + std::to_string(n);
        a.cohort = n < 5 ? "A" : "B";
        a.source = path;
        a.target = path;
        a.query = queries[n];
        // offsets alternate between axes; every value is exact in binary
        a.truth = queries[n];
        a.truth[static_cast<int>(n % 3)] += (n % 2 ? -1.0 : 1.0) * f.distances[n];
        a.radius_mm = f.radii[n];
        f.pairs.push_back(a);
    }
    return f;
}

} // namespace fixtures
