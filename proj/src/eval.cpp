#include "pointmatch/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <memory>
#include <sstream>

#include "pointmatch/error.hpp"
#include "pointmatch/volume_io.hpp"
#include "pointmatch/worker_pool.hpp"

namespace pointmatch {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

json point_json(const WorldPoint &p) { return json::array({p.x, p.y, p.z}); }

WorldPoint point_from(const json &j, const std::string &key) {
    if (!j.contains(key) || !j[key].is_array() || j[key].size() != 3)
        throw InvalidConfig("manifest record needs a 3-element '" + key + "'");
    return {j[key][0].get<double>(), j[key][1].get<double>(), j[key][2].get<double>()};
}

fs::path resolve(const fs::path &base, const fs::path &p) { return p.is_absolute() ? p : base / p; }

std::vector<std::string> split(const std::string &line, char sep) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream in(line);
    while (std::getline(in, cell, sep)) out.push_back(cell);
    if (!line.empty() && line.back() == sep) out.emplace_back();
    return out;
}

std::string fixed(double v, int digits = 3) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

std::string metric_column_name(const std::string &value) {
    const auto kind = parse_similarity_kind(value);
    if (!kind) return value;
    switch (*kind) {
    case SimilarityKind::Cosine: return "Cosine";
    case SimilarityKind::Euclidean: return "Euclidean";
    case SimilarityKind::MutualInfo: return "Mutual Info";
    case SimilarityKind::Combined: break;
    }
    return "Combined";
}

} // namespace

std::vector<AnnotationPair> read_manifest(const fs::path &path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open manifest '" + path.string() + "'");
    const fs::path base = path.parent_path();
    std::vector<AnnotationPair> pairs;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            const json j = json::parse(line);
            AnnotationPair a;
            a.pair_id = j.at("pair_id").get<std::string>();
            a.cohort = j.value("cohort", std::string());
            a.source = resolve(base, j.at("source").get<std::string>());
            a.target = resolve(base, j.at("target").get<std::string>());
            a.query = point_from(j, "query_mm");
            a.truth = point_from(j, "truth_mm");
            a.radius_mm = j.at("radius_mm").get<double>();
            if (!(a.radius_mm > 0.0)) throw InvalidConfig("radius_mm must be > 0");
            pairs.push_back(std::move(a));
        } catch (const json::exception &e) {
            throw InvalidConfig(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
        } catch (const InvalidConfig &e) {
            throw InvalidConfig(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    return pairs;
}

void write_manifest(const fs::path &path, std::span<const AnnotationPair> pairs) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error("cannot write manifest '" + path.string() + "'");
    for (const auto &a : pairs) {
        const json j = {{"pair_id", a.pair_id},           {"cohort", a.cohort},
                        {"source", a.source.string()},    {"target", a.target.string()},
                        {"query_mm", point_json(a.query)}, {"truth_mm", point_json(a.truth)},
                        {"radius_mm", a.radius_mm}};
        out << j.dump() << '\n';
    }
}

std::vector<AnnotationPair> import_correspondence_csv(const fs::path &path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open '" + path.string() + "'");
    const fs::path base = path.parent_path();
    std::string line;
    if (!std::getline(in, line)) throw EmptyInput("'" + path.string() + "' is empty");
    std::vector<AnnotationPair> pairs;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto cells = split(line, ',');
        if (cells.size() != 11)
            throw InvalidConfig(path.string() + ":" + std::to_string(line_no) + ": expected 11 columns");
        try {
            AnnotationPair a;
            a.pair_id = cells[0];
            a.cohort = cells[1];
            a.source = resolve(base, cells[2]);
            a.target = resolve(base, cells[3]);
            a.query = {std::stod(cells[4]), std::stod(cells[5]), std::stod(cells[6])};
            a.truth = {std::stod(cells[7]), std::stod(cells[8]), std::stod(cells[9])};
            a.radius_mm = std::stod(cells[10]);
            pairs.push_back(std::move(a));
        } catch (const std::logic_error &) {
            throw InvalidConfig(path.string() + ":" + std::to_string(line_no) + ": non-numeric coordinate");
        }
    }
    return pairs;
}

std::vector<double> default_froc_thresholds() {
    std::vector<double> t;
    for (int i = 0; i <= 50; ++i) t.push_back(0.5 * i);
    return t;
}

std::vector<FrocPoint> froc_curve(std::span<const double> distances, std::span<const double> thresholds) {
    if (distances.empty()) throw EmptyInput("froc_curve needs at least one distance");
    if (!std::is_sorted(thresholds.begin(), thresholds.end()))
        throw InvalidConfig("froc thresholds must be sorted ascending");
    std::vector<double> sorted(distances.begin(), distances.end());
    std::sort(sorted.begin(), sorted.end());
    std::vector<FrocPoint> out;
    out.reserve(thresholds.size());
    for (double t : thresholds) {
        const auto hits = std::upper_bound(sorted.begin(), sorted.end(), t) - sorted.begin();
        out.push_back({t, static_cast<double>(hits) / static_cast<double>(sorted.size())});
    }
    return out;
}

double lower_median(std::vector<double> values) {
    if (values.empty()) throw EmptyInput("median of an empty set");
    const std::size_t mid = (values.size() - 1) / 2;
    std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid), values.end());
    return values[mid];
}

EvalSummary summarize(std::span<const PairOutcome> outcomes, std::span<const double> froc_thresholds) {
    EvalSummary s;
    s.count = outcomes.size();
    if (outcomes.empty()) return s;
    std::vector<double> d;
    d.reserve(outcomes.size());
    std::size_t hits = 0;
    double sum = 0.0, seconds = 0.0;
    for (const auto &o : outcomes) {
        d.push_back(o.distance_mm);
        hits += o.hit ? 1 : 0;
        sum += o.distance_mm;
        seconds += o.search_seconds;
    }
    const auto n = static_cast<double>(outcomes.size());
    s.cpm = static_cast<double>(hits) / n;
    s.mean_mm = sum / n;
    s.mean_seconds = seconds / n;
    s.median_mm = lower_median(d);
    s.froc = froc_curve(d, froc_thresholds);
    return s;
}

EvalReport evaluate(std::span<const AnnotationPair> pairs, const SearchConfig &cfg, const EvalOptions &options) {
    if (pairs.empty()) throw EmptyInput("no annotation pairs to evaluate");
    cfg.validate();
    const auto wall_start = std::chrono::steady_clock::now();

    struct Loaded {
        std::shared_ptr<const Volume> volume;
        std::string error;
    };
    std::map<fs::path, Loaded> volumes;
    OffsetTableCache tables(options.model);
    for (const auto &p : pairs) {
        for (const fs::path &path : {p.source, p.target}) {
            if (volumes.count(path)) continue;
            Loaded l;
            try {
                l.volume = std::make_shared<const Volume>(load_volume(path, options.intensity_offset));
                for (int level = 1; level <= cfg.levels; ++level) tables.get(l.volume->spacing(), level);
            } catch (const std::exception &e) {
                l.error = e.what();
            }
            volumes.emplace(path, std::move(l));
        }
    }

    struct Job {
        const AnnotationPair *pair;
        bool backward;
    };
    std::vector<Job> jobs;
    for (const auto &p : pairs) {
        jobs.push_back({&p, false});
        if (options.both_directions) jobs.push_back({&p, true});
    }

    std::vector<std::optional<PairOutcome>> outcomes(jobs.size());
    std::vector<std::optional<Exclusion>> exclusions(jobs.size());
    const std::size_t width = std::max<std::size_t>({options.pair_parallelism, static_cast<std::size_t>(cfg.threads), 1});
    WorkerPool pool(width);

    pool.parallel_for(
        jobs.size(),
        [&](std::size_t n) {
            const auto &job = jobs[n];
            const AnnotationPair &p = *job.pair;
            const std::string direction = job.backward ? "backward" : "forward";
            const Loaded &src = volumes.at(job.backward ? p.target : p.source);
            const Loaded &tgt = volumes.at(job.backward ? p.source : p.target);
            if (!src.volume || !tgt.volume) {
                exclusions[n] = Exclusion{p.pair_id, direction, src.volume ? tgt.error : src.error};
                return;
            }
            PairOutcome o;
            o.pair_id = p.pair_id;
            o.cohort = p.cohort;
            o.direction = direction;
            o.query = job.backward ? p.truth : p.query;
            o.truth = job.backward ? p.query : p.truth;
            o.radius_mm = p.radius_mm;
            try {
                const MatchResult r =
                    match_point(*src.volume, *tgt.volume, o.query, cfg, options.model, SearchResources{&pool, &tables});
                o.predicted = r.point;
                o.score = r.score;
                o.search_seconds = r.elapsed.count();
            } catch (const Error &e) {
                exclusions[n] = Exclusion{p.pair_id, direction, e.what()};
                return;
            }
            o.distance_mm = distance(o.predicted, o.truth);
            o.threshold_mm = hit_threshold_mm(o.radius_mm);
            o.hit = o.distance_mm <= o.threshold_mm;
            outcomes[n] = std::move(o);
        },
        options.pair_parallelism);

    EvalReport report;
    for (std::size_t n = 0; n < jobs.size(); ++n) {
        if (outcomes[n]) report.outcomes.push_back(std::move(*outcomes[n]));
        if (exclusions[n]) report.excluded.push_back(std::move(*exclusions[n]));
    }
    report.pooled = summarize(report.outcomes, options.froc_thresholds);
    if (options.both_directions) {
        std::vector<PairOutcome> fwd, bwd;
        for (const auto &o : report.outcomes) (o.direction == "forward" ? fwd : bwd).push_back(o);
        report.forward = summarize(fwd, options.froc_thresholds);
        report.backward = summarize(bwd, options.froc_thresholds);
    }
    std::map<std::string, std::vector<PairOutcome>> cohorts;
    for (const auto &o : report.outcomes) cohorts[o.cohort].push_back(o);
    for (const auto &[name, list] : cohorts) report.by_cohort[name] = summarize(list, options.froc_thresholds);
    report.total_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - wall_start).count();
    return report;
}

AblationSpec::Sweep AblationSpec::parse_sweep(const std::string &name) {
    if (name == "metric") return Sweep::Metric;
    if (name == "levels") return Sweep::Levels;
    if (name == "threads") return Sweep::Threads;
    throw InvalidConfig("unknown sweep '" + name + "' (expected metric, levels or threads)");
}

std::string to_string(AblationSpec::Sweep s) {
    switch (s) {
    case AblationSpec::Sweep::Metric: return "metric";
    case AblationSpec::Sweep::Levels: return "levels";
    case AblationSpec::Sweep::Threads: break;
    }
    return "threads";
}

SearchConfig AblationSpec::apply(const SearchConfig &base, const std::string &value) const {
    SearchConfig cfg = base;
    const auto as_int = [&](const std::string &v) {
        std::size_t used = 0;
        int n = 0;
        try {
            n = std::stoi(v, &used);
        } catch (const std::logic_error &) {
            used = 0;
        }
        if (used == 0 || used != v.size()) throw InvalidConfig("sweep value '" + v + "' is not an integer");
        return n;
    };
    switch (sweep) {
    case Sweep::Metric: {
        const auto kind = parse_similarity_kind(value);
        if (!kind) throw InvalidConfig("unknown metric '" + value + "'");
        cfg.metric.kind = *kind;
        break;
    }
    case Sweep::Levels: cfg.levels = as_int(value); break;
    case Sweep::Threads: cfg.threads = as_int(value); break;
    }
    cfg.validate();
    return cfg;
}

std::vector<EvalReport> run_ablation(std::span<const AnnotationPair> pairs, const SearchConfig &base,
                                     const AblationSpec &spec, const EvalOptions &options) {
    if (spec.values.empty()) throw InvalidConfig("ablation needs at least one value");
    std::vector<SearchConfig> configs;
    for (const auto &v : spec.values) configs.push_back(spec.apply(base, v));
    std::vector<EvalReport> reports;
    for (std::size_t i = 0; i < configs.size(); ++i) {
        EvalReport r = evaluate(pairs, configs[i], options);
        r.label = to_string(spec.sweep) + "=" + spec.values[i];
        reports.push_back(std::move(r));
    }
    return reports;
}

std::string format_ablation_table(const AblationSpec &spec, std::span<const EvalReport> reports) {
    std::ostringstream out;
    if (spec.sweep == AblationSpec::Sweep::Metric) {
        std::vector<std::string> cohorts;
        for (const auto &r : reports)
            for (const auto &[name, _] : r.by_cohort)
                if (std::find(cohorts.begin(), cohorts.end(), name) == cohorts.end()) cohorts.push_back(name);
        std::sort(cohorts.begin(), cohorts.end());
        out << "Name";
        for (std::size_t i = 0; i < reports.size(); ++i)
            out << " | " << metric_column_name(i < spec.values.size() ? spec.values[i] : reports[i].label);
        out << '\n';
        const auto row = [&](const std::string &name, auto &&summary_of) {
            out << name;
            for (const auto &r : reports) {
                const EvalSummary *s = summary_of(r);
                out << " | " << (s && s->count ? fixed(s->median_mm) : std::string("-"));
            }
            out << '\n';
        };
        for (const auto &c : cohorts)
            row(c, [&](const EvalReport &r) -> const EvalSummary * {
                auto it = r.by_cohort.find(c);
                return it == r.by_cohort.end() ? nullptr : &it->second;
            });
        row("All", [](const EvalReport &r) -> const EvalSummary * { return &r.pooled; });
        return out.str();
    }
    out << to_string(spec.sweep) << " | count | CPM | mean_mm | median_mm | speed_s\n";
    for (std::size_t i = 0; i < reports.size(); ++i) {
        const auto &s = reports[i].pooled;
        out << (i < spec.values.size() ? spec.values[i] : reports[i].label) << " | " << s.count << " | "
            << fixed(s.cpm) << " | " << fixed(s.mean_mm) << " | " << fixed(s.median_mm) << " | "
            << fixed(s.mean_seconds, 4) << '\n';
    }
    return out.str();
}

nlohmann::json to_json(const EvalSummary &s) {
    json froc = json::array();
    for (const auto &f : s.froc) froc.push_back({f.threshold_mm, f.sensitivity});
    return {{"count", s.count},         {"cpm", s.cpm},
            {"mean_mm", s.mean_mm},     {"median_mm", s.median_mm},
            {"speed_s", s.mean_seconds}, {"froc", froc}};
}

nlohmann::json to_json(const EvalReport &r) {
    json pairs = json::array();
    for (const auto &o : r.outcomes) {
        pairs.push_back({{"pair_id", o.pair_id},
                         {"cohort", o.cohort},
                         {"direction", o.direction},
                         {"query_mm", point_json(o.query)},
                         {"truth_mm", point_json(o.truth)},
                         {"predicted_mm", point_json(o.predicted)},
                         {"radius_mm", o.radius_mm},
                         {"distance_mm", o.distance_mm},
                         {"threshold_mm", o.threshold_mm},
                         {"hit", o.hit},
                         {"score", o.score},
                         {"search_s", o.search_seconds}});
    }
    json excluded = json::array();
    for (const auto &e : r.excluded)
        excluded.push_back({{"pair_id", e.pair_id}, {"direction", e.direction}, {"reason", e.reason}});
    json cohorts = json::object();
    for (const auto &[name, s] : r.by_cohort) cohorts[name] = to_json(s);
    json out = {{"label", r.label},
                {"pairs", pairs},
                {"excluded", excluded},
                {"aggregate", to_json(r.pooled)},
                {"cohorts", cohorts},
                {"total_s", r.total_seconds}};
    if (r.forward) out["forward"] = to_json(*r.forward);
    if (r.backward) out["backward"] = to_json(*r.backward);
    return out;
}

void write_report(const EvalReport &report, const fs::path &path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error("cannot write report '" + path.string() + "'");
    out << to_json(report).dump(2) << '\n';
}

void write_froc_csv(std::span<const FrocPoint> froc, const fs::path &path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error("cannot write '" + path.string() + "'");
    out << "threshold_mm,sensitivity\n";
    for (const auto &f : froc) out << f.threshold_mm << ',' << f.sensitivity << '\n';
}

} // namespace pointmatch
