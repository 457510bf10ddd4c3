#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "pointmatch/volume.hpp"

namespace pointmatch {

struct AnnotationPair;

// Known mapping between the two phantom scans.
//
// target_to_source(p) = c + S (p - t - c) + d(p - t), where S is a per-axis scaling about c
// and d a smooth sinusoidal displacement. With S = I and d = 0 a source point q reappears at
// q + t in the target.
struct PhantomTransform {
    WorldPoint translation;
    std::array<double, 3> scale{1.0, 1.0, 1.0};
    WorldPoint center;
    double warp_amplitude_mm = 0.0;
    double warp_wavelength_mm = 200.0;
    std::array<double, 3> warp_phase{0.0, 0.0, 0.0};

    static PhantomTransform identity() { return {}; }
    static PhantomTransform translation_only(const WorldPoint &t);

    WorldPoint target_to_source(const WorldPoint &p) const;
    // Inverse of target_to_source, solved by fixed-point iteration.
    WorldPoint source_to_target(const WorldPoint &q) const;
};

struct PhantomSpec {
    WorldPoint fov_mm{160.0, 160.0, 128.0};
    std::vector<Spacing> spacings{{1.0, 1.0, 1.0}, {1.2, 1.2, 1.0}, {0.8, 0.8, 1.25}};
    double max_translation_mm = 60.0;
    double max_scale_deviation = 0.03;
    double warp_amplitude_mm = 2.0;
    double warp_wavelength_mm = 200.0;
    double noise_sigma = 6.0;
    int findings_per_pair = 5;
    double mr_fraction = 0.3;
    int lesions = 24;
};

struct PhantomFinding {
    WorldPoint query; // source frame
    WorldPoint truth; // target frame
    double radius_mm = 5.0;
};

struct PhantomPair {
    Volume source;
    Volume target;
    PhantomTransform transform;
    std::vector<PhantomFinding> findings;
};

// One synthetic subject scanned twice. Volumes hold CT values shifted by +1024 (or an MR-like
// contrast), with independent noise per scan. When `forced` is given it replaces the random
// transform. Deterministic in (seed, spec, modality).
PhantomPair make_phantom_pair(uint64_t seed, const PhantomSpec &spec, Modality modality = Modality::CT,
                              const PhantomTransform *forced = nullptr);

// Writes n_pairs annotated findings (spread over ceil(n_pairs / findings_per_pair) scan pairs)
// plus a manifest.jsonl into out_dir, and returns the annotations.
std::vector<AnnotationPair> generate_phantom_suite(uint64_t seed, int n_pairs, const PhantomSpec &spec,
                                                   const std::filesystem::path &out_dir);

} // namespace pointmatch
