#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "pointmatch/sampling.hpp"

namespace pointmatch {

// Every metric is oriented so that a larger score means more similar.
enum class SimilarityKind { Cosine, Euclidean, MutualInfo, Combined };

std::string_view to_string(SimilarityKind k);
// Accepts cosine, euclidean, mi (or mutual_info) and combined.
std::optional<SimilarityKind> parse_similarity_kind(std::string_view s);

struct HistogramSpec {
    int bins = 16;
};

// combined = cosine_weight * cosine + mi_weight * MI / ln(bins)
struct CombinedWeights {
    double cosine = 1.0;
    double mutual_info = 1.0;
};

struct MetricSpec {
    SimilarityKind kind = SimilarityKind::Combined;
    HistogramSpec histogram;
    CombinedWeights weights;

    // Throws InvalidConfig.
    void validate() const;
};

double cosine_sim(const Descriptor &a, const Descriptor &b);
double euclidean_sim(const Descriptor &a, const Descriptor &b);
double mutual_info(const Descriptor &a, const Descriptor &b, const HistogramSpec &spec = {});
double combined_sim(const Descriptor &a, const Descriptor &b, const HistogramSpec &spec = {},
                    const CombinedWeights &weights = {});
double similarity(const MetricSpec &metric, const Descriptor &a, const Descriptor &b);

// Per-descriptor histogram binning over the entries selected by `mask`. Values are mapped
// linearly from [min, max] onto bins 0..bins-1 with the maximum landing in the last bin.
// Unselected entries get -1. Returns false when fewer than two entries are selected or
// the selected values are constant.
bool assign_bins(std::span<const float> values, std::span<const uint8_t> mask, int bins, std::span<int16_t> out);

// Scores many candidates against one query descriptor. Results are bit-identical to
// similarity(metric, query, candidate); work that only depends on the query is done once.
class QueryScorer {
  public:
    QueryScorer(const Descriptor &query, MetricSpec metric);

    // Per-thread scratch space.
    struct Scratch {
        std::vector<int16_t> query_bins;
        std::vector<int16_t> candidate_bins;
        std::vector<uint8_t> mask;
        std::vector<uint32_t> joint;
    };

    double score(const Descriptor &candidate, Scratch &scratch) const;
    const MetricSpec &metric() const { return metric_; }

  private:
    double mutual_info_cached(const Descriptor &candidate, Scratch &scratch) const;

    const Descriptor &query_;
    MetricSpec metric_;
    double query_norm2_ = 0.0;
    std::vector<int16_t> query_bins_;
    bool query_binnable_ = false;
    bool query_fully_valid_ = false;
};

} // namespace pointmatch
