#include <doctest.h>

#include <fstream>
#include <iterator>

#include "pointmatch/phantom.hpp"
#include "support.hpp"

using namespace pointmatch;

namespace {

std::string slurp(const std::filesystem::path &p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

} // namespace

TEST_CASE("phantom transform inverse") {
    PhantomTransform t;
    t.translation = {12.0, -30.0, 7.5};
    t.scale = {1.02, 0.98, 1.01};
    t.center = {3, 4, 5};
    t.warp_amplitude_mm = 2.0;
    t.warp_phase = {0.3, 1.1, 2.0};
    for (const WorldPoint q : {WorldPoint{0, 0, 0}, WorldPoint{40, -20, 10}, WorldPoint{-60, 55, -30}}) {
        const WorldPoint p = t.source_to_target(q);
        CHECK(distance(t.target_to_source(p), q) < 1e-9);
    }
    const auto shift = PhantomTransform::translation_only({5, 6, 7});
    CHECK(distance(shift.source_to_target({1, 1, 1}), {6, 7, 8}) < 1e-12);
    CHECK(distance(PhantomTransform::identity().target_to_source({1, 2, 3}), {1, 2, 3}) == 0.0);
}

TEST_CASE("phantom pairs are deterministic and annotated consistently") {
    const PhantomSpec spec = fixtures::small_spec();
    const PhantomPair a = make_phantom_pair(17, spec);
    const PhantomPair b = make_phantom_pair(17, spec);
    CHECK(std::equal(a.target.intensities().begin(), a.target.intensities().end(), b.target.intensities().begin()));
    CHECK(a.findings.size() == static_cast<std::size_t>(spec.findings_per_pair));
    CHECK(norm(a.transform.translation) <= spec.max_translation_mm);
    for (const auto &f : a.findings) {
        CHECK(a.source.contains_world(f.query));
        CHECK(a.target.contains_world(f.truth));
        CHECK(distance(a.transform.source_to_target(f.query), f.truth) < 1e-9);
        CHECK(f.radius_mm > 0.0);
    }
    const PhantomPair c = make_phantom_pair(18, spec);
    CHECK_FALSE(std::equal(a.target.intensities().begin(), a.target.intensities().end(),
                           c.target.intensities().begin(), c.target.intensities().end()));
}

TEST_CASE("mr phantoms use a different contrast") {
    const PhantomSpec spec = fixtures::small_spec();
    const PhantomPair ct = make_phantom_pair(3, spec, Modality::CT);
    const PhantomPair mr = make_phantom_pair(3, spec, Modality::MR);
    CHECK(ct.source.modality() == Modality::CT);
    CHECK(mr.source.modality() == Modality::MR);
    CHECK(ct.source.dims() == mr.source.dims());
}

TEST_CASE("forced transform recovers the translation") {
    const PhantomSpec spec = fixtures::small_spec();
    const auto t = PhantomTransform::translation_only({8.0, -6.0, 4.0});
    const PhantomPair p = make_phantom_pair(4, spec, Modality::CT, &t);
    for (const auto &f : p.findings) CHECK(distance(f.truth, f.query + WorldPoint{8, -6, 4}) < 1e-9);
}

TEST_CASE("suite generation is byte-identical across runs") {
    const PhantomSpec spec = fixtures::small_spec();
    const auto d1 = fixtures::scratch_dir("suite_a");
    const auto d2 = fixtures::scratch_dir("suite_b");
    const auto s1 = generate_phantom_suite(7, 7, spec, d1);
    generate_phantom_suite(7, 7, spec, d2);
    CHECK(s1.size() == 7);
    CHECK(s1[0].source.parent_path() == d1);
    int files = 0;
    for (const auto &entry : std::filesystem::directory_iterator(d1)) {
        ++files;
        CHECK(slurp(entry.path()) == slurp(d2 / entry.path().filename()));
    }
    CHECK(files == 5); // two scan pairs plus the manifest
    const auto manifest = read_manifest(d1 / "manifest.jsonl");
    REQUIRE(manifest.size() == 7);
    CHECK(manifest[3].source == s1[3].source);
    CHECK(manifest[3].query == s1[3].query);
}
