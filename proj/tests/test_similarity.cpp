#include <doctest.h>

#include <cmath>
#include <random>

#include "pointmatch/error.hpp"
#include "pointmatch/similarity.hpp"
#include "support.hpp"

using namespace pointmatch;

namespace {

Descriptor make(std::vector<float> values) {
    Descriptor d;
    d.valid.assign(values.size(), 1);
    d.values = std::move(values);
    return d;
}

// 16 * m entries, m per bin.
Descriptor uniform16(int m) {
    std::vector<float> v;
    for (int b = 0; b < 16; ++b)
        for (int r = 0; r < m; ++r) v.push_back(static_cast<float>(b));
    return make(v);
}

} // namespace

TEST_CASE("cosine closed forms") {
    CHECK(cosine_sim(make({1, 2, 3}), make({1, 2, 3})) == doctest::Approx(1.0));
    CHECK(cosine_sim(make({1, 0, 0}), make({0, 1, 0})) == 0.0);
    CHECK(cosine_sim(make({1, 2}), make({-1, -2})) == doctest::Approx(-1.0));
    CHECK(cosine_sim(make({0, 0}), make({1, 2})) == 0.0);
    CHECK_THROWS_AS(cosine_sim(make({1, 2}), make({1, 2, 3})), InvalidConfig);
}

TEST_CASE("euclidean closed forms") {
    CHECK(euclidean_sim(make({4, 5, 6}), make({4, 5, 6})) == 0.0);
    CHECK(euclidean_sim(make(std::vector<float>(9, 0.0f)), make(std::vector<float>(9, 1.0f))) ==
          doctest::Approx(-3.0));
}

TEST_CASE("mutual information closed forms") {
    CHECK(mutual_info(uniform16(4), uniform16(4)) == doctest::Approx(std::log(16.0)).epsilon(1e-12));
    // constant side: one occupied bin
    CHECK(mutual_info(make(std::vector<float>(64, 2.0f)), uniform16(4)) == 0.0);
    // fewer than two jointly valid entries
    Descriptor a = uniform16(1), b = uniform16(1);
    std::fill(a.valid.begin() + 1, a.valid.end(), 0);
    CHECK(mutual_info(a, b) == 0.0);
}

TEST_CASE("bin assignment follows min-max scaling over the selected entries") {
    const std::vector<float> v{10, 20, 30, 40, 50, 1000};
    const std::vector<uint8_t> mask{1, 1, 1, 1, 1, 0};
    std::vector<int16_t> out(v.size());
    REQUIRE(assign_bins(v, mask, 4, out));
    CHECK(out == std::vector<int16_t>{0, 1, 2, 3, 3, -1});
    CHECK_FALSE(assign_bins(std::vector<float>{3, 3, 3}, std::vector<uint8_t>{1, 1, 1}, 4, out));
}

TEST_CASE("metrics agree with brute-force oracles") {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 60; ++trial) {
        const bool holes = trial % 2 == 1;
        const Descriptor a = fixtures::random_descriptor(rng, 1372, holes);
        const Descriptor b = fixtures::random_descriptor(rng, 1372, holes);
        CHECK(cosine_sim(a, b) == doctest::Approx(oracle::cosine(a, b)).epsilon(1e-6));
        CHECK(std::abs(euclidean_sim(a, b) - oracle::euclidean(a, b)) <= 1e-6 * std::abs(oracle::euclidean(a, b)));
        CHECK(std::abs(mutual_info(a, b) - oracle::mutual_info(a, b)) <= 1e-9);
        const double want = oracle::cosine(a, b) + oracle::mutual_info(a, b) / std::log(16.0);
        CHECK(combined_sim(a, b) == doctest::Approx(want).epsilon(1e-9));
    }
}

TEST_CASE("mutual information is symmetric and invariant to increasing affine maps") {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 40; ++trial) {
        const Descriptor a = fixtures::random_descriptor(rng, 1372, trial % 2 == 0);
        const Descriptor b = fixtures::random_descriptor(rng, 1372, trial % 3 == 0);
        CHECK(mutual_info(a, b) == mutual_info(b, a));
        // integer values and integer coefficients keep every mapped value exact in float
        Descriptor mapped = a;
        const float alpha = static_cast<float>(1 + trial % 7), beta = static_cast<float>(trial * 13 - 200);
        for (std::size_t i = 0; i < a.size(); ++i)
            if (a.valid[i]) mapped.values[i] = alpha * a.values[i] + beta;
        std::vector<int16_t> bins_a(a.size()), bins_m(a.size());
        assign_bins(a.values, a.valid, 16, bins_a);
        assign_bins(mapped.values, mapped.valid, 16, bins_m);
        CHECK(bins_a == bins_m);
        CHECK(mutual_info(a, b) == mutual_info(mapped, b));
    }
}

TEST_CASE("combined score is bounded") {
    std::mt19937_64 rng(9);
    for (int trial = 0; trial < 30; ++trial) {
        const Descriptor a = fixtures::random_descriptor(rng, 343, false);
        const Descriptor b = fixtures::random_descriptor(rng, 343, false);
        const double c = combined_sim(a, b);
        CHECK(c <= 2.0);
        CHECK(c >= -1.0);
    }
    CHECK(combined_sim(uniform16(8), uniform16(8)) == doctest::Approx(2.0));
}

TEST_CASE("query scorer is bit-identical to the plain functions") {
    std::mt19937_64 rng(21);
    for (auto kind : {SimilarityKind::Cosine, SimilarityKind::Euclidean, SimilarityKind::MutualInfo,
                      SimilarityKind::Combined}) {
        MetricSpec metric;
        metric.kind = kind;
        for (int qi = 0; qi < 4; ++qi) {
            const Descriptor q = fixtures::random_descriptor(rng, 1372, qi % 2 == 1);
            const QueryScorer scorer(q, metric);
            QueryScorer::Scratch scratch;
            for (int ci = 0; ci < 8; ++ci) {
                const Descriptor c = fixtures::random_descriptor(rng, 1372, ci % 2 == 1);
                CHECK(scorer.score(c, scratch) == similarity(metric, q, c));
            }
        }
    }
}

TEST_CASE("metric names") {
    CHECK(parse_similarity_kind("mi") == SimilarityKind::MutualInfo);
    CHECK(parse_similarity_kind("combined") == SimilarityKind::Combined);
    CHECK_FALSE(parse_similarity_kind("ncc").has_value());
    for (auto kind : {SimilarityKind::Cosine, SimilarityKind::Euclidean, SimilarityKind::MutualInfo,
                      SimilarityKind::Combined})
        CHECK(parse_similarity_kind(to_string(kind)) == kind);
    MetricSpec bad;
    bad.histogram.bins = 1;
    CHECK_THROWS_AS(bad.validate(), InvalidConfig);
}
