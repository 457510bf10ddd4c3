#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "pointmatch/sampling.hpp"
#include "pointmatch/search.hpp"

namespace pointmatch {

// One annotated correspondence: `query` in the source frame maps to `truth` in the target frame.
struct AnnotationPair {
    std::string pair_id;
    std::string cohort;
    std::filesystem::path source;
    std::filesystem::path target;
    WorldPoint query;
    WorldPoint truth;
    double radius_mm = 10.0;
};

// Manifest: one JSON object per line with keys pair_id, cohort, source, target, query_mm,
// truth_mm and radius_mm. Relative volume paths are resolved against the manifest directory.
std::vector<AnnotationPair> read_manifest(const std::filesystem::path &path);
// Writes paths exactly as stored in the pairs.
void write_manifest(const std::filesystem::path &path, std::span<const AnnotationPair> pairs);
// Imports a CSV with header pair_id,cohort,source,target,qx,qy,qz,tx,ty,tz,radius_mm.
std::vector<AnnotationPair> import_correspondence_csv(const std::filesystem::path &path);

struct FrocPoint {
    double threshold_mm = 0.0;
    double sensitivity = 0.0;
};

// Fraction of distances <= t for every threshold t. Throws EmptyInput, InvalidConfig (unsorted).
std::vector<FrocPoint> froc_curve(std::span<const double> distances, std::span<const double> thresholds);
// 0, 0.5, ..., 25 mm
std::vector<double> default_froc_thresholds();

// Hit threshold for a finding of radius r: min(r, 10 mm).
inline double hit_threshold_mm(double radius_mm) { return radius_mm < 10.0 ? radius_mm : 10.0; }
// Lower median: for an even count the smaller of the two middle values.
double lower_median(std::vector<double> values);

struct PairOutcome {
    std::string pair_id;
    std::string cohort;
    std::string direction; // "forward" or "backward"
    WorldPoint query;
    WorldPoint truth;
    WorldPoint predicted;
    double radius_mm = 0.0;
    double distance_mm = 0.0;
    double threshold_mm = 0.0;
    bool hit = false;
    double score = 0.0;
    double search_seconds = 0.0;
};

struct Exclusion {
    std::string pair_id;
    std::string direction;
    std::string reason;
};

struct EvalSummary {
    std::size_t count = 0;
    double cpm = 0.0;
    double mean_mm = 0.0;
    double median_mm = 0.0;
    double mean_seconds = 0.0;
    std::vector<FrocPoint> froc;
};

EvalSummary summarize(std::span<const PairOutcome> outcomes, std::span<const double> froc_thresholds);

struct EvalReport {
    std::string label;
    std::vector<PairOutcome> outcomes;
    std::vector<Exclusion> excluded;
    EvalSummary pooled;
    std::optional<EvalSummary> forward;
    std::optional<EvalSummary> backward;
    std::map<std::string, EvalSummary> by_cohort;
    double total_seconds = 0.0;
};

struct EvalOptions {
    bool both_directions = false;
    std::size_t pair_parallelism = 1;
    std::vector<double> froc_thresholds = default_froc_thresholds();
    double intensity_offset = 0.0;
    SamplingModel model;
};

// Matches every pair and scores it against the truth. Pairs whose volumes fail to load or
// whose search fails are listed in `excluded` and do not stop the batch. Outcomes keep the
// input order. Throws EmptyInput when `pairs` is empty.
EvalReport evaluate(std::span<const AnnotationPair> pairs, const SearchConfig &cfg, const EvalOptions &options = {});

struct AblationSpec {
    enum class Sweep { Metric, Levels, Threads };
    Sweep sweep = Sweep::Levels;
    std::vector<std::string> values;

    static Sweep parse_sweep(const std::string &name); // throws InvalidConfig
    // Config for one sweep value. Throws InvalidConfig.
    SearchConfig apply(const SearchConfig &base, const std::string &value) const;
};

std::string to_string(AblationSpec::Sweep s);

// One report per sweep value over the same pairs.
std::vector<EvalReport> run_ablation(std::span<const AnnotationPair> pairs, const SearchConfig &base,
                                     const AblationSpec &spec, const EvalOptions &options = {});

// Comparative table. A metric sweep is laid out with cohorts as rows, one median-error column
// per metric and a final "All" row; other sweeps list one row per value.
std::string format_ablation_table(const AblationSpec &spec, std::span<const EvalReport> reports);

nlohmann::json to_json(const EvalSummary &s);
nlohmann::json to_json(const EvalReport &r);
void write_report(const EvalReport &report, const std::filesystem::path &path);
void write_froc_csv(std::span<const FrocPoint> froc, const std::filesystem::path &path);

} // namespace pointmatch
