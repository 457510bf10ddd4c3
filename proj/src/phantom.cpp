#include "pointmatch/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>
#include <string>

#include "pointmatch/error.hpp"
#include "pointmatch/eval.hpp"
#include "pointmatch/volume_io.hpp"

namespace pointmatch {

namespace {

constexpr double kAirHu = -1000.0;
constexpr double kGridMarginMm = 16.0;

struct Shape {
    enum class Kind { Ellipsoid, ColumnZ };
    Kind kind = Kind::Ellipsoid;
    WorldPoint center;
    WorldPoint semi;
    double value = 0.0;
    double edge_mm = 1.0;
    double z_period_mm = 0.0;
    double z_amplitude = 0.0;
};

// Canonical anatomy in Hounsfield units on a 1 mm grid in the source frame.
class CanonicalGrid {
  public:
    explicit CanonicalGrid(const WorldPoint &fov) {
        for (int a = 0; a < 3; ++a) {
            origin_[a] = -0.5 * fov[a] - kGridMarginMm;
            dims_[a] = static_cast<int64_t>(std::ceil(fov[a] + 2.0 * kGridMarginMm)) + 1;
        }
        hu_.assign(static_cast<std::size_t>(dims_[0] * dims_[1] * dims_[2]), static_cast<float>(kAirHu));
    }

    void paint(const Shape &s) {
        int64_t lo[3], hi[3];
        const double reach = 4.0 * s.edge_mm;
        for (int a = 0; a < 3; ++a) {
            const bool unbounded = s.kind == Shape::Kind::ColumnZ && a == 2;
            const double l = unbounded ? origin_[a] : s.center[a] - s.semi[a] - reach;
            const double h = unbounded ? origin_[a] + static_cast<double>(dims_[a] - 1) : s.center[a] + s.semi[a] + reach;
            lo[a] = std::max<int64_t>(0, static_cast<int64_t>(std::floor(l - origin_[a])));
            hi[a] = std::min<int64_t>(dims_[a] - 1, static_cast<int64_t>(std::ceil(h - origin_[a])));
        }
        const double min_semi = s.kind == Shape::Kind::ColumnZ ? std::min(s.semi.x, s.semi.y)
                                                               : std::min({s.semi.x, s.semi.y, s.semi.z});
        for (int64_t k = lo[2]; k <= hi[2]; ++k)
            for (int64_t j = lo[1]; j <= hi[1]; ++j)
                for (int64_t i = lo[0]; i <= hi[0]; ++i) {
                    const WorldPoint p{origin_.x + static_cast<double>(i), origin_.y + static_cast<double>(j),
                                       origin_.z + static_cast<double>(k)};
                    const double rx = (p.x - s.center.x) / s.semi.x;
                    const double ry = (p.y - s.center.y) / s.semi.y;
                    const double rz = s.kind == Shape::Kind::ColumnZ ? 0.0 : (p.z - s.center.z) / s.semi.z;
                    const double rho = std::sqrt(rx * rx + ry * ry + rz * rz);
                    const double inside = (1.0 - rho) * min_semi;
                    if (inside < -reach) continue;
                    const double w = 0.5 * (1.0 + std::tanh(inside / s.edge_mm));
                    double value = s.value;
                    if (s.z_period_mm > 0.0)
                        value += s.z_amplitude * std::cos(2.0 * std::numbers::pi * p.z / s.z_period_mm);
                    float &v = hu_[static_cast<std::size_t>((k * dims_[1] + j) * dims_[0] + i)];
                    v = static_cast<float>(v + w * (value - v));
                }
    }

    double sample(const WorldPoint &p) const {
        double f[3];
        int64_t c[3];
        for (int a = 0; a < 3; ++a) {
            const double t = p[a] - origin_[a];
            if (t < 0.0 || t > static_cast<double>(dims_[a] - 1)) return kAirHu;
            c[a] = std::min<int64_t>(static_cast<int64_t>(t), dims_[a] - 2);
            f[a] = t - static_cast<double>(c[a]);
        }
        const auto at = [&](int64_t i, int64_t j, int64_t k) {
            return static_cast<double>(hu_[static_cast<std::size_t>((k * dims_[1] + j) * dims_[0] + i)]);
        };
        double out = 0.0;
        for (int dz = 0; dz < 2; ++dz)
            for (int dy = 0; dy < 2; ++dy)
                for (int dx = 0; dx < 2; ++dx) {
                    const double w = (dx ? f[0] : 1.0 - f[0]) * (dy ? f[1] : 1.0 - f[1]) * (dz ? f[2] : 1.0 - f[2]);
                    if (w != 0.0) out += w * at(c[0] + dx, c[1] + dy, c[2] + dz);
                }
        return out;
    }

  private:
    WorldPoint origin_;
    Dims dims_{};
    std::vector<float> hu_;
};

double uniform(std::mt19937_64 &rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }

struct Anatomy {
    std::vector<Shape> shapes;
    std::vector<Shape> lesions;
    WorldPoint inner_center;
    WorldPoint inner_semi;
};

Anatomy random_anatomy(std::mt19937_64 &rng, const WorldPoint &fov, int lesion_count) {
    const WorldPoint h = fov * 0.5;
    Anatomy an;
    const WorldPoint body_c{uniform(rng, -0.03, 0.03) * h.x, uniform(rng, -0.03, 0.03) * h.y, 0.0};
    const WorldPoint body_s{0.86 * h.x, 0.72 * h.y, 1.6 * h.z};
    an.shapes.push_back({Shape::Kind::Ellipsoid, body_c, body_s, -90.0, 1.2});
    const double fat = uniform(rng, 6.0, 10.0);
    an.inner_center = body_c;
    an.inner_semi = {body_s.x - fat, body_s.y - fat, body_s.z - fat};
    an.shapes.push_back({Shape::Kind::Ellipsoid, body_c, an.inner_semi, 40.0, 1.0});

    // Lungs with vessels.
    for (int side : {-1, 1}) {
        const WorldPoint c{body_c.x + side * uniform(rng, 0.34, 0.42) * h.x, body_c.y + uniform(rng, 0.0, 0.1) * h.y,
                           uniform(rng, 0.25, 0.45) * h.z};
        const WorldPoint s{uniform(rng, 0.24, 0.3) * h.x, uniform(rng, 0.38, 0.46) * h.y, uniform(rng, 0.45, 0.6) * h.z};
        an.shapes.push_back({Shape::Kind::Ellipsoid, c, s, -830.0, 1.0});
        for (int v = 0; v < 10; ++v) {
            const double r = uniform(rng, 1.5, 3.5);
            const WorldPoint p{c.x + uniform(rng, -0.6, 0.6) * s.x, c.y + uniform(rng, -0.6, 0.6) * s.y,
                               c.z + uniform(rng, -0.6, 0.6) * s.z};
            an.shapes.push_back({Shape::Kind::Ellipsoid, p, {r, r, r}, uniform(rng, 0.0, 50.0), 0.8});
        }
    }

    // Spine with vertebral modulation along z, and an aorta.
    an.shapes.push_back({Shape::Kind::ColumnZ, {body_c.x, body_c.y - 0.48 * h.y, 0.0}, {0.13 * h.x, 0.13 * h.y, 1.0},
                         380.0, 1.0, uniform(rng, 24.0, 30.0), 220.0});
    an.shapes.push_back({Shape::Kind::ColumnZ, {body_c.x + 0.16 * h.x, body_c.y - 0.25 * h.y, 0.0},
                         {0.08 * h.x, 0.08 * h.y, 1.0}, 70.0, 1.0, uniform(rng, 60.0, 90.0), 25.0});

    const auto inside_body = [&](double fill) {
        for (;;) {
            const WorldPoint u{uniform(rng, -1, 1), uniform(rng, -1, 1), uniform(rng, -1, 1)};
            if (norm(u) > 1.0) continue;
            const WorldPoint p{an.inner_center.x + fill * u.x * an.inner_semi.x,
                               an.inner_center.y + fill * u.y * an.inner_semi.y,
                               std::clamp(an.inner_center.z + fill * u.z * an.inner_semi.z, -0.9 * h.z, 0.9 * h.z)};
            return p;
        }
    };

    for (int o = 0; o < 7; ++o) {
        const WorldPoint c = inside_body(0.6);
        const WorldPoint s{uniform(rng, 0.1, 0.28) * h.x, uniform(rng, 0.1, 0.28) * h.y, uniform(rng, 0.1, 0.3) * h.z};
        an.shapes.push_back({Shape::Kind::Ellipsoid, c, s, uniform(rng, -20.0, 100.0), 1.2});
    }
    for (int l = 0; l < lesion_count; ++l) {
        const double r = uniform(rng, 3.0, 10.0);
        const Shape s{Shape::Kind::Ellipsoid, inside_body(0.75), {r, r, r}, uniform(rng, 110.0, 240.0), 0.8};
        an.shapes.push_back(s);
        an.lesions.push_back(s);
    }
    return an;
}

// MR-like contrast: piecewise linear and deliberately not monotone in HU.
double mr_contrast(double hu) {
    static constexpr std::array<std::array<double, 2>, 8> knots{{{-1000.0, 0.0},
                                                                 {-830.0, 40.0},
                                                                 {-90.0, 900.0},
                                                                 {40.0, 450.0},
                                                                 {100.0, 620.0},
                                                                 {240.0, 760.0},
                                                                 {380.0, 240.0},
                                                                 {600.0, 180.0}}};
    if (hu <= knots.front()[0]) return knots.front()[1];
    for (std::size_t n = 1; n < knots.size(); ++n) {
        if (hu <= knots[n][0]) {
            const double t = (hu - knots[n - 1][0]) / (knots[n][0] - knots[n - 1][0]);
            return knots[n - 1][1] + t * (knots[n][1] - knots[n - 1][1]);
        }
    }
    return knots.back()[1];
}

Dims dims_for(const WorldPoint &fov, const Spacing &s) {
    return {static_cast<int64_t>(std::floor(fov.x / s[0])) + 1, static_cast<int64_t>(std::floor(fov.y / s[1])) + 1,
            static_cast<int64_t>(std::floor(fov.z / s[2])) + 1};
}

WorldPoint centred_origin(const Dims &d, const Spacing &s) {
    return {-0.5 * static_cast<double>(d[0] - 1) * s[0], -0.5 * static_cast<double>(d[1] - 1) * s[1],
            -0.5 * static_cast<double>(d[2] - 1) * s[2]};
}

Volume render_scan(const CanonicalGrid &grid, const Dims &dims, const Spacing &spacing, const WorldPoint &origin,
                   const PhantomTransform *transform, Modality modality, double gain, double bias, double noise_sigma,
                   uint64_t noise_seed) {
    std::mt19937_64 rng(noise_seed);
    std::normal_distribution<double> noise(0.0, noise_sigma > 0.0 ? noise_sigma : 1.0);
    std::vector<float> values(static_cast<std::size_t>(dims[0] * dims[1] * dims[2]));
    std::size_t n = 0;
    for (int64_t k = 0; k < dims[2]; ++k)
        for (int64_t j = 0; j < dims[1]; ++j)
            for (int64_t i = 0; i < dims[0]; ++i) {
                const WorldPoint p{origin.x + static_cast<double>(i) * spacing[0],
                                   origin.y + static_cast<double>(j) * spacing[1],
                                   origin.z + static_cast<double>(k) * spacing[2]};
                const double hu = grid.sample(transform ? transform->target_to_source(p) : p);
                double v = modality == Modality::MR ? mr_contrast(hu) : hu + 1024.0;
                v = gain * v + bias;
                if (noise_sigma > 0.0) v += noise(rng);
                values[n++] = static_cast<float>(std::clamp(std::round(v), 0.0, 65535.0));
            }
    return Volume(dims, spacing, origin, std::move(values), modality);
}

bool inside_with_margin(const Volume &v, const WorldPoint &p, double margin) {
    const WorldPoint lo = v.origin(), hi = v.far_corner();
    for (int a = 0; a < 3; ++a)
        if (p[a] < lo[a] + margin || p[a] > hi[a] - margin) return false;
    return true;
}

} // namespace

PhantomTransform PhantomTransform::translation_only(const WorldPoint &t) {
    PhantomTransform x;
    x.translation = t;
    return x;
}

WorldPoint PhantomTransform::target_to_source(const WorldPoint &p) const {
    const WorldPoint r = p - translation;
    WorldPoint out;
    for (int a = 0; a < 3; ++a) out[a] = center[a] + scale[a] * (r[a] - center[a]);
    if (warp_amplitude_mm != 0.0) {
        const double w = 2.0 * std::numbers::pi / warp_wavelength_mm;
        out.x += warp_amplitude_mm * std::sin(w * r.y + warp_phase[0]);
        out.y += warp_amplitude_mm * std::sin(w * r.z + warp_phase[1]);
        out.z += warp_amplitude_mm * std::sin(w * r.x + warp_phase[2]);
    }
    return out;
}

WorldPoint PhantomTransform::source_to_target(const WorldPoint &q) const {
    // p = t + c + S^-1 (q - c - d(p - t)) is a contraction for small warps.
    WorldPoint p = q + translation;
    for (int iter = 0; iter < 200; ++iter) {
        WorldPoint d{};
        if (warp_amplitude_mm != 0.0) {
            const WorldPoint r = p - translation;
            const double w = 2.0 * std::numbers::pi / warp_wavelength_mm;
            d = {warp_amplitude_mm * std::sin(w * r.y + warp_phase[0]),
                 warp_amplitude_mm * std::sin(w * r.z + warp_phase[1]),
                 warp_amplitude_mm * std::sin(w * r.x + warp_phase[2])};
        }
        WorldPoint next;
        for (int a = 0; a < 3; ++a) next[a] = translation[a] + center[a] + (q[a] - center[a] - d[a]) / scale[a];
        const double step = distance(next, p);
        p = next;
        if (step < 1e-13) break;
    }
    return p;
}

PhantomPair make_phantom_pair(uint64_t seed, const PhantomSpec &spec, Modality modality,
                              const PhantomTransform *forced) {
    if (spec.spacings.empty()) throw InvalidConfig("phantom spec needs at least one spacing");
    std::mt19937_64 rng(seed);
    const Anatomy anatomy = random_anatomy(rng, spec.fov_mm, spec.lesions);
    CanonicalGrid grid(spec.fov_mm);
    for (const auto &s : anatomy.shapes) grid.paint(s);

    const auto pick_spacing = [&] {
        return spec.spacings[std::uniform_int_distribution<std::size_t>(0, spec.spacings.size() - 1)(rng)];
    };
    const Spacing s_src = pick_spacing();
    const Spacing s_tgt = pick_spacing();

    PhantomTransform transform;
    if (forced) {
        transform = *forced;
    } else {
        WorldPoint t;
        do {
            t = {uniform(rng, -1, 1), uniform(rng, -1, 1), uniform(rng, -1, 1)};
        } while (norm(t) > 1.0);
        transform.translation = t * spec.max_translation_mm;
        if (uniform(rng, 0, 1) < 0.5)
            for (auto &s : transform.scale) s = 1.0 + uniform(rng, -spec.max_scale_deviation, spec.max_scale_deviation);
        if (uniform(rng, 0, 1) < 0.5) {
            transform.warp_amplitude_mm = spec.warp_amplitude_mm;
            transform.warp_wavelength_mm = spec.warp_wavelength_mm;
            for (auto &ph : transform.warp_phase) ph = uniform(rng, 0.0, 2.0 * std::numbers::pi);
        }
    }

    double gain = 1.0, bias = 0.0;
    if (modality == Modality::MR) {
        gain = uniform(rng, 0.8, 1.25);
        bias = uniform(rng, -40.0, 40.0);
    }
    const uint64_t noise_seed = rng();

    const Dims d_src = dims_for(spec.fov_mm, s_src);
    const Dims d_tgt = dims_for(spec.fov_mm, s_tgt);
    Volume source = render_scan(grid, d_src, s_src, centred_origin(d_src, s_src), nullptr, modality, 1.0, 0.0,
                                spec.noise_sigma, noise_seed);
    Volume target = render_scan(grid, d_tgt, s_tgt, centred_origin(d_tgt, s_tgt) + transform.translation, &transform,
                                modality, gain, bias, spec.noise_sigma, noise_seed ^ 0x9e3779b97f4a7c15ULL);

    PhantomPair pair{std::move(source), std::move(target), transform, {}};
    const auto try_add = [&](const WorldPoint &q, double radius) {
        const WorldPoint truth = transform.source_to_target(q);
        if (!inside_with_margin(pair.source, q, 6.0) || !inside_with_margin(pair.target, truth, 6.0)) return;
        pair.findings.push_back({q, truth, radius});
    };
    for (const auto &lesion : anatomy.lesions) {
        if (static_cast<int>(pair.findings.size()) >= spec.findings_per_pair) break;
        try_add(lesion.center, lesion.semi.x);
    }
    for (int attempt = 0; attempt < 1000 && static_cast<int>(pair.findings.size()) < spec.findings_per_pair;
         ++attempt) {
        const WorldPoint u{uniform(rng, -1, 1), uniform(rng, -1, 1), uniform(rng, -1, 1)};
        if (norm(u) > 1.0) continue;
        const WorldPoint q{anatomy.inner_center.x + 0.8 * u.x * anatomy.inner_semi.x,
                           anatomy.inner_center.y + 0.8 * u.y * anatomy.inner_semi.y,
                           anatomy.inner_center.z + 0.8 * u.z * anatomy.inner_semi.z};
        try_add(q, uniform(rng, 5.0, 20.0));
    }
    return pair;
}

std::vector<AnnotationPair> generate_phantom_suite(uint64_t seed, int n_pairs, const PhantomSpec &spec,
                                                   const std::filesystem::path &out_dir) {
    if (n_pairs < 1) throw InvalidConfig("n_pairs must be >= 1");
    if (spec.findings_per_pair < 1) throw InvalidConfig("findings_per_pair must be >= 1");
    std::filesystem::create_directories(out_dir);

    std::vector<AnnotationPair> pairs;
    std::mt19937_64 rng(seed);
    for (int scan = 0; static_cast<int>(pairs.size()) < n_pairs; ++scan) {
        if (scan > 4 * n_pairs) throw Error("phantom generator could not place enough findings");
        const Modality modality = uniform(rng, 0.0, 1.0) < spec.mr_fraction ? Modality::MR : Modality::CT;
        const uint64_t scan_seed = rng();
        const PhantomPair pair = make_phantom_pair(scan_seed, spec, modality);

        char stem[32];
        std::snprintf(stem, sizeof stem, "scan%03d", scan);
        const std::string source_name = std::string(stem) + "_a.mha";
        const std::string target_name = std::string(stem) + "_b.mha";
        write_volume(pair.source, out_dir / source_name, ElementType::UShort);
        write_volume(pair.target, out_dir / target_name, ElementType::UShort);

        for (std::size_t f = 0; f < pair.findings.size() && static_cast<int>(pairs.size()) < n_pairs; ++f) {
            AnnotationPair a;
            a.pair_id = std::string(stem) + "_f" + std::to_string(f);
            a.cohort = std::string(to_string(modality));
            a.source = source_name;
            a.target = target_name;
            a.query = pair.findings[f].query;
            a.truth = pair.findings[f].truth;
            a.radius_mm = pair.findings[f].radius_mm;
            pairs.push_back(std::move(a));
        }
    }
    write_manifest(out_dir / "manifest.jsonl", pairs);
    for (auto &p : pairs) {
        p.source = out_dir / p.source;
        p.target = out_dir / p.target;
    }
    return pairs;
}

} // namespace pointmatch
