#include "pointmatch/similarity.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "pointmatch/error.hpp"

namespace pointmatch {

std::string_view to_string(SimilarityKind k) {
    switch (k) {
    case SimilarityKind::Cosine: return "cosine";
    case SimilarityKind::Euclidean: return "euclidean";
    case SimilarityKind::MutualInfo: return "mi";
    case SimilarityKind::Combined: break;
    }
    return "combined";
}

std::optional<SimilarityKind> parse_similarity_kind(std::string_view s) {
    if (s == "cosine") return SimilarityKind::Cosine;
    if (s == "euclidean") return SimilarityKind::Euclidean;
    if (s == "mi" || s == "mutual_info") return SimilarityKind::MutualInfo;
    if (s == "combined") return SimilarityKind::Combined;
    return std::nullopt;
}

void MetricSpec::validate() const {
    if (histogram.bins < 2 || histogram.bins > 4096) throw InvalidConfig("histogram bins must be in [2, 4096]");
    if (!std::isfinite(weights.cosine) || !std::isfinite(weights.mutual_info))
        throw InvalidConfig("combined weights must be finite");
}

namespace {

void check_lengths(const Descriptor &a, const Descriptor &b) {
    if (a.values.size() != b.values.size() || a.valid.size() != a.values.size() || b.valid.size() != b.values.size())
        throw InvalidConfig("descriptor lengths differ");
}

// Four interleaved partial sums, added pairwise at the end.
double dot(std::span<const float> a, std::span<const float> b) {
    double s[4] = {0.0, 0.0, 0.0, 0.0};
    const std::size_t n = a.size();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        for (std::size_t l = 0; l < 4; ++l) s[l] += static_cast<double>(a[i + l]) * static_cast<double>(b[i + l]);
    for (; i < n; ++i) s[i % 4] += static_cast<double>(a[i]) * static_cast<double>(b[i]);
    return (s[0] + s[1]) + (s[2] + s[3]);
}

double cosine_from(double ab, double aa, double bb) {
    if (aa == 0.0 || bb == 0.0) return 0.0;
    return std::clamp(ab / (std::sqrt(aa) * std::sqrt(bb)), -1.0, 1.0);
}

// log(i) for small integer counts.
const std::vector<double> &log_table() {
    static const std::vector<double> table = [] {
        std::vector<double> t(1 << 16);
        t[0] = 0.0;
        for (std::size_t i = 1; i < t.size(); ++i) t[i] = std::log(static_cast<double>(i));
        return t;
    }();
    return table;
}

double log_count(std::size_t c, const std::vector<double> &table) {
    return c < table.size() ? table[c] : std::log(static_cast<double>(c));
}

// Mutual information (natural log) of two bin assignments; entries with a negative bin are
// ignored. Each term is c/n * ((log c + log n) - (log row + log col)), and the double loop
// pairs (x, y) with (y, x), so swapping the inputs gives the same sum bit for bit.
double mi_from_bins(std::span<const int16_t> a, std::span<const int16_t> b, int bins, std::vector<uint32_t> &joint) {
    const auto k = static_cast<std::size_t>(bins);
    // Four sub-histograms so repeated cells do not serialise the increments.
    const std::size_t kk = k * k;
    joint.assign(4 * kk + 2 * k, 0);
    uint32_t *rows = joint.data() + 4 * kk;
    uint32_t *cols = rows + k;
    std::size_t total = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i] < 0 || b[i] < 0) continue;
        ++joint[(i & 3) * kk + static_cast<std::size_t>(a[i]) * k + static_cast<std::size_t>(b[i])];
        ++total;
    }
    for (std::size_t c = 0; c < kk; ++c) joint[c] += joint[kk + c] + joint[2 * kk + c] + joint[3 * kk + c];
    if (total < 2) return 0.0;
    for (std::size_t x = 0; x < k; ++x)
        for (std::size_t y = 0; y < k; ++y) {
            rows[x] += joint[x * k + y];
            cols[y] += joint[x * k + y];
        }
    const auto &lt = log_table();
    const double n = static_cast<double>(total);
    const double log_n = log_count(total, lt);
    const auto term = [&](std::size_t x, std::size_t y) {
        const uint32_t c = joint[x * k + y];
        if (c == 0) return 0.0;
        return (c / n) * ((log_count(c, lt) + log_n) - (log_count(rows[x], lt) + log_count(cols[y], lt)));
    };
    double mi = 0.0;
    for (std::size_t x = 0; x < k; ++x) {
        mi += term(x, x);
        for (std::size_t y = x + 1; y < k; ++y) mi += term(x, y) + term(y, x);
    }
    return std::max(mi, 0.0);
}

double combine(const CombinedWeights &w, double cosine, double mi, int bins) {
    return w.cosine * cosine + w.mutual_info * (mi / std::log(static_cast<double>(bins)));
}

} // namespace

namespace {

// assign_bins with every entry selected.
bool assign_bins_dense(std::span<const float> values, int bins, std::span<int16_t> out) {
    const std::size_t n = values.size();
    if (n < 2) {
        std::fill(out.begin(), out.end(), int16_t{-1});
        return false;
    }
    float lo = values[0], hi = values[0];
    for (std::size_t i = 1; i < n; ++i) {
        lo = std::min(lo, values[i]);
        hi = std::max(hi, values[i]);
    }
    if (lo == hi) {
        std::fill(out.begin(), out.end(), int16_t{-1});
        return false;
    }
    const double base = lo;
    const double range = static_cast<double>(hi) - base;
    const int top = bins - 1;
    for (std::size_t i = 0; i < n; ++i) {
        const double t = (static_cast<double>(values[i]) - base) / range;
        out[i] = static_cast<int16_t>(std::min(static_cast<int>(t * bins), top));
    }
    return true;
}

} // namespace

bool assign_bins(std::span<const float> values, std::span<const uint8_t> mask, int bins, std::span<int16_t> out) {
    const std::size_t n = values.size();
    std::size_t count = 0;
    float lo = std::numeric_limits<float>::infinity();
    float hi = -std::numeric_limits<float>::infinity();
    for (std::size_t i = 0; i < n; ++i) {
        const bool on = mask[i] != 0;
        lo = on ? std::min(lo, values[i]) : lo;
        hi = on ? std::max(hi, values[i]) : hi;
        count += on;
    }
    if (count < 2 || lo == hi) {
        std::fill(out.begin(), out.end(), int16_t{-1});
        return false;
    }
    const double base = lo;
    const double range = static_cast<double>(hi) - base;
    const int top = bins - 1;
    for (std::size_t i = 0; i < n; ++i) {
        const double t = (static_cast<double>(values[i]) - base) / range;
        const int bin = std::clamp(static_cast<int>(t * bins), -1, top);
        out[i] = static_cast<int16_t>(mask[i] ? bin : -1);
    }
    return true;
}

double cosine_sim(const Descriptor &a, const Descriptor &b) {
    check_lengths(a, b);
    return cosine_from(dot(a.values, b.values), dot(a.values, a.values), dot(b.values, b.values));
}

double euclidean_sim(const Descriptor &a, const Descriptor &b) {
    check_lengths(a, b);
    double s = 0.0;
    for (std::size_t i = 0; i < a.values.size(); ++i) {
        const double d = static_cast<double>(a.values[i]) - static_cast<double>(b.values[i]);
        s += d * d;
    }
    return -std::sqrt(s);
}

double mutual_info(const Descriptor &a, const Descriptor &b, const HistogramSpec &spec) {
    check_lengths(a, b);
    const std::size_t n = a.size();
    std::vector<uint8_t> mask(n);
    for (std::size_t i = 0; i < n; ++i) mask[i] = (a.valid[i] && b.valid[i]) ? 1 : 0;
    std::vector<int16_t> bins_a(n), bins_b(n);
    if (!assign_bins(a.values, mask, spec.bins, bins_a)) return 0.0;
    if (!assign_bins(b.values, mask, spec.bins, bins_b)) return 0.0;
    std::vector<uint32_t> joint;
    return mi_from_bins(bins_a, bins_b, spec.bins, joint);
}

double combined_sim(const Descriptor &a, const Descriptor &b, const HistogramSpec &spec,
                    const CombinedWeights &weights) {
    return combine(weights, cosine_sim(a, b), mutual_info(a, b, spec), spec.bins);
}

double similarity(const MetricSpec &metric, const Descriptor &a, const Descriptor &b) {
    switch (metric.kind) {
    case SimilarityKind::Cosine: return cosine_sim(a, b);
    case SimilarityKind::Euclidean: return euclidean_sim(a, b);
    case SimilarityKind::MutualInfo: return mutual_info(a, b, metric.histogram);
    case SimilarityKind::Combined: break;
    }
    return combined_sim(a, b, metric.histogram, metric.weights);
}

QueryScorer::QueryScorer(const Descriptor &query, MetricSpec metric) : query_(query), metric_(metric) {
    metric_.validate();
    if (query.valid.size() != query.values.size()) throw InvalidConfig("malformed query descriptor");
    query_norm2_ = dot(query.values, query.values);
    query_bins_.resize(query.size());
    query_binnable_ = assign_bins(query.values, query.valid, metric_.histogram.bins, query_bins_);
    query_fully_valid_ = query.fully_valid();
}

double QueryScorer::mutual_info_cached(const Descriptor &candidate, Scratch &s) const {
    const std::size_t n = candidate.size();
    const int bins = metric_.histogram.bins;
    s.candidate_bins.resize(n);
    if (candidate.fully_valid()) {
        // The joint mask reduces to the query's own mask, so the cached query bins apply.
        if (!query_binnable_) return 0.0;
        const bool ok = query_fully_valid_ ? assign_bins_dense(candidate.values, bins, s.candidate_bins)
                                           : assign_bins(candidate.values, query_.valid, bins, s.candidate_bins);
        if (!ok) return 0.0;
        return mi_from_bins(query_bins_, s.candidate_bins, bins, s.joint);
    }
    s.mask.resize(n);
    s.query_bins.resize(n);
    for (std::size_t i = 0; i < n; ++i) s.mask[i] = (query_.valid[i] && candidate.valid[i]) ? 1 : 0;
    if (!assign_bins(query_.values, s.mask, bins, s.query_bins)) return 0.0;
    if (!assign_bins(candidate.values, s.mask, bins, s.candidate_bins)) return 0.0;
    return mi_from_bins(s.query_bins, s.candidate_bins, bins, s.joint);
}

double QueryScorer::score(const Descriptor &candidate, Scratch &scratch) const {
    check_lengths(query_, candidate);
    switch (metric_.kind) {
    case SimilarityKind::Cosine:
        return cosine_from(dot(query_.values, candidate.values), query_norm2_,
                           dot(candidate.values, candidate.values));
    case SimilarityKind::Euclidean: return euclidean_sim(query_, candidate);
    case SimilarityKind::MutualInfo: return mutual_info_cached(candidate, scratch);
    case SimilarityKind::Combined: break;
    }
    const double c = cosine_from(dot(query_.values, candidate.values), query_norm2_,
                                 dot(candidate.values, candidate.values));
    return combine(metric_.weights, c, mutual_info_cached(candidate, scratch), metric_.histogram.bins);
}

} // namespace pointmatch
