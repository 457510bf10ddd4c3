#include "pointmatch/cli.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <CLI11.hpp>

#include "pointmatch/config.hpp"
#include "pointmatch/error.hpp"
#include "pointmatch/eval.hpp"
#include "pointmatch/match_json.hpp"
#include "pointmatch/phantom.hpp"
#include "pointmatch/search.hpp"
#include "pointmatch/service.hpp"
#include "pointmatch/volume_io.hpp"

namespace pointmatch {

namespace {

struct UsageError : Error {
    using Error::Error;
};

struct EngineFlags {
    std::string config;
    std::string metric;
    int levels = 0;
    int threads = 0;
};

void add_engine_flags(CLI::App *sub, EngineFlags &f) {
    sub->add_option("--config", f.config, "key = value engine config file");
    sub->add_option("--metric", f.metric, "cosine | euclidean | mi | combined");
    sub->add_option("--levels", f.levels, "number of search levels");
    sub->add_option("--threads", f.threads, "worker threads");
}

EngineConfig resolve_engine(const EngineFlags &f) {
    try {
        EngineConfig cfg = f.config.empty() ? default_engine_config() : load_engine_config(f.config);
        if (!f.metric.empty()) cfg.set("metric", f.metric);
        if (f.levels != 0) cfg.search.levels = f.levels;
        if (f.threads != 0) cfg.search.threads = f.threads;
        cfg.validate();
        return cfg;
    } catch (const InvalidConfig &e) {
        throw UsageError(e.what());
    } catch (const Error &e) {
        // Config file could not be read.
        throw UsageError(e.what());
    }
}

WorldPoint require_point(const std::string &flag, const std::string &text) {
    auto p = parse_point_arg(text);
    if (!p) throw UsageError(flag + " expects x,y,z in mm, got '" + text + "'");
    return *p;
}

Volume load_or_fail(const std::string &path, double offset) {
    try {
        return load_volume(path, offset);
    } catch (const std::exception &e) {
        throw Error("cannot load '" + path + "': " + e.what());
    }
}

std::vector<AnnotationPair> load_annotations(const std::string &path) {
    const std::filesystem::path p(path);
    if (!std::filesystem::exists(p)) throw Error("cannot open '" + path + "'");
    if (p.extension() == ".csv") return import_correspondence_csv(p);
    return read_manifest(p);
}

} // namespace

std::optional<WorldPoint> parse_point_arg(const std::string &text) {
    std::istringstream in(text);
    std::string cell;
    std::vector<double> values;
    while (std::getline(in, cell, ',')) {
        try {
            std::size_t used = 0;
            const double v = std::stod(cell, &used);
            if (used != cell.size() || !std::isfinite(v)) return std::nullopt;
            values.push_back(v);
        } catch (const std::logic_error &) {
            return std::nullopt;
        }
    }
    if (values.size() != 3 || (!text.empty() && text.back() == ',')) return std::nullopt;
    return WorldPoint{values[0], values[1], values[2]};
}

int run_cli(int argc, const char *const *argv, std::ostream &out, std::ostream &err) {
    CLI::App app{"pointmatch: sparse-sampling point correspondence for 3D volumes"};
    app.require_subcommand(1);

    // match
    EngineFlags match_flags;
    std::string match_source, match_target, match_point_text;
    auto *match_cmd = app.add_subcommand("match", "find the target point matching a source point");
    match_cmd->add_option("source", match_source, "source volume")->required();
    match_cmd->add_option("target", match_target, "target volume")->required();
    match_cmd->add_option("--point", match_point_text, "query point x,y,z in mm")->required();
    add_engine_flags(match_cmd, match_flags);

    // map
    EngineFlags map_flags;
    std::string map_source, map_target, map_point_text, map_out, map_center_text;
    int map_level = 1;
    double map_grid = 0.0, map_box = 0.0;
    auto *map_cmd = app.add_subcommand("map", "write the similarity map of one level as a volume");
    map_cmd->add_option("source", map_source, "source volume")->required();
    map_cmd->add_option("target", map_target, "target volume")->required();
    map_cmd->add_option("--point", map_point_text, "query point x,y,z in mm")->required();
    map_cmd->add_option("--level", map_level, "descriptor level");
    map_cmd->add_option("--grid", map_grid, "grid spacing in mm (default: the level's)");
    map_cmd->add_option("--center", map_center_text, "restrict to a box around x,y,z");
    map_cmd->add_option("--box", map_box, "box half-width in mm");
    map_cmd->add_option("--out", map_out, "output volume (.mha)")->required();
    add_engine_flags(map_cmd, map_flags);

    // eval
    EngineFlags eval_flags;
    std::string eval_pairs, eval_out, eval_froc;
    bool eval_both = false;
    std::size_t eval_par = 1;
    auto *eval_cmd = app.add_subcommand("eval", "evaluate against annotated pairs");
    eval_cmd->add_option("--pairs", eval_pairs, "manifest (.jsonl) or correspondence .csv")->required();
    eval_cmd->add_option("--out", eval_out, "report JSON path (default: standard output)");
    eval_cmd->add_option("--froc", eval_froc, "FROC curve CSV path");
    eval_cmd->add_flag("--both-directions", eval_both, "also match target to source");
    eval_cmd->add_option("--pair-parallelism", eval_par, "pairs evaluated concurrently");
    add_engine_flags(eval_cmd, eval_flags);

    // ablate
    EngineFlags ablate_flags;
    std::string ablate_pairs, ablate_sweep, ablate_values, ablate_out;
    auto *ablate_cmd = app.add_subcommand("ablate", "sweep one setting over annotated pairs");
    ablate_cmd->add_option("--pairs", ablate_pairs, "manifest (.jsonl) or correspondence .csv")->required();
    ablate_cmd->add_option("--sweep", ablate_sweep, "metric | levels | threads")->required();
    ablate_cmd->add_option("--values", ablate_values, "comma-separated values")->required();
    ablate_cmd->add_option("--out", ablate_out, "directory for per-value reports");
    add_engine_flags(ablate_cmd, ablate_flags);

    // phantom
    uint64_t phantom_seed = 7;
    int phantom_pairs = 20;
    int phantom_findings = PhantomSpec{}.findings_per_pair;
    std::string phantom_out = "phantom";
    auto *phantom_cmd = app.add_subcommand("phantom", "generate a synthetic annotated suite");
    phantom_cmd->add_option("--seed", phantom_seed, "random seed");
    phantom_cmd->add_option("--pairs", phantom_pairs, "number of annotated pairs")->check(CLI::PositiveNumber);
    phantom_cmd->add_option("--findings-per-scan", phantom_findings, "findings per scan pair")
        ->check(CLI::PositiveNumber);
    phantom_cmd->add_option("--out", phantom_out, "output directory");

    // serve
    EngineFlags serve_flags;
    std::string serve_host = "127.0.0.1";
    int serve_port = 8080;
    std::size_t serve_cache = 8;
    auto *serve_cmd = app.add_subcommand("serve", "run the HTTP match service");
    serve_cmd->add_option("--host", serve_host, "bind address");
    serve_cmd->add_option("--port", serve_port, "port (0 picks a free one)");
    serve_cmd->add_option("--cache", serve_cache, "pair cache capacity")->check(CLI::PositiveNumber);
    add_engine_flags(serve_cmd, serve_flags);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp &) {
        out << app.help();
        return 0;
    } catch (const CLI::CallForAllHelp &) {
        out << app.help("", CLI::AppFormatMode::All);
        return 0;
    } catch (const CLI::ParseError &e) {
        err << "usage error: " << e.what() << "\n";
        return 2;
    }

    try {
        if (match_cmd->parsed()) {
            const WorldPoint q = require_point("--point", match_point_text);
            const EngineConfig cfg = resolve_engine(match_flags);
            const Volume source = load_or_fail(match_source, cfg.intensity_offset);
            const Volume target = load_or_fail(match_target, cfg.intensity_offset);
            const MatchResult r = match_point(source, target, q, cfg.search, cfg.model);
            out << to_json(r).dump() << "\n";
            return 0;
        }
        if (map_cmd->parsed()) {
            const WorldPoint q = require_point("--point", map_point_text);
            const EngineConfig cfg = resolve_engine(map_flags);
            if (map_level < 1) throw UsageError("--level must be >= 1");
            const Volume source = load_or_fail(map_source, cfg.intensity_offset);
            const Volume target = load_or_fail(map_target, cfg.intensity_offset);
            SearchRegion region = SearchRegion::whole_volume(target);
            if (!map_center_text.empty()) {
                const double half = map_box > 0.0 ? map_box : cfg.search.box_half_width_mm(std::max(map_level, 2));
                region = SearchRegion::box_around(require_point("--center", map_center_text), half);
            }
            const double grid = map_grid > 0.0 ? map_grid : cfg.search.grid_mm(map_level);
            std::unique_ptr<WorkerPool> pool;
            if (cfg.search.threads > 1) pool = std::make_unique<WorkerPool>(cfg.search.threads);
            const SimilarityMap m =
                similarity_map(source, target, q, map_level, region, grid, cfg.search.metric, cfg.model, {pool.get()});
            write_volume(m.to_volume(), map_out, ElementType::Float);
            const auto [best, score] = m.argmax();
            out << nlohmann::json{{"out", map_out},
                                  {"dims", {m.dims[0], m.dims[1], m.dims[2]}},
                                  {"grid_mm", m.grid_mm},
                                  {"best_point_mm", {best.x, best.y, best.z}},
                                  {"best_score", score}}
                       .dump()
                << "\n";
            return 0;
        }
        if (eval_cmd->parsed()) {
            const EngineConfig cfg = resolve_engine(eval_flags);
            const auto pairs = load_annotations(eval_pairs);
            EvalOptions opts;
            opts.both_directions = eval_both;
            opts.pair_parallelism = std::max<std::size_t>(1, eval_par);
            opts.intensity_offset = cfg.intensity_offset;
            opts.model = cfg.model;
            const EvalReport report = evaluate(pairs, cfg.search, opts);
            if (!eval_froc.empty()) write_froc_csv(report.pooled.froc, eval_froc);
            for (const auto &x : report.excluded)
                err << "excluded " << x.pair_id << " (" << x.direction << "): " << x.reason << "\n";
            if (eval_out.empty()) {
                out << to_json(report).dump() << "\n";
            } else {
                write_report(report, eval_out);
                out << to_json(report.pooled).dump() << "\n";
            }
            return 0;
        }
        if (ablate_cmd->parsed()) {
            const EngineConfig cfg = resolve_engine(ablate_flags);
            AblationSpec spec;
            try {
                spec.sweep = AblationSpec::parse_sweep(ablate_sweep);
                std::istringstream in(ablate_values);
                std::string v;
                while (std::getline(in, v, ',')) spec.values.push_back(v);
                if (spec.values.empty()) throw InvalidConfig("--values is empty");
                for (const auto &value : spec.values) spec.apply(cfg.search, value).validate();
            } catch (const InvalidConfig &e) {
                throw UsageError(e.what());
            }
            const auto pairs = load_annotations(ablate_pairs);
            EvalOptions opts;
            opts.intensity_offset = cfg.intensity_offset;
            opts.model = cfg.model;
            const auto reports = run_ablation(pairs, cfg.search, spec, opts);
            if (!ablate_out.empty()) {
                std::filesystem::create_directories(ablate_out);
                for (std::size_t i = 0; i < reports.size(); ++i)
                    write_report(reports[i], std::filesystem::path(ablate_out) /
                                                 ("ablation_" + to_string(spec.sweep) + "_" + spec.values[i] + ".json"));
            }
            out << format_ablation_table(spec, reports);
            return 0;
        }
        if (phantom_cmd->parsed()) {
            PhantomSpec spec;
            spec.findings_per_pair = phantom_findings;
            const auto pairs = generate_phantom_suite(phantom_seed, phantom_pairs, spec, phantom_out);
            out << nlohmann::json{{"manifest", (std::filesystem::path(phantom_out) / "manifest.jsonl").string()},
                                  {"pairs", pairs.size()}}
                       .dump()
                << "\n";
            return 0;
        }
        if (serve_cmd->parsed()) {
            ServiceOptions opts;
            opts.engine = resolve_engine(serve_flags);
            opts.cache_capacity = serve_cache;
            MatchService service(opts);
            const int port = service.bind(serve_host, serve_port);
            if (port < 0) {
                err << "cannot bind " << serve_host << ":" << serve_port << "\n";
                return 1;
            }
            out << nlohmann::json{{"host", serve_host}, {"port", port}}.dump() << std::endl;
            service.serve();
            return 0;
        }
    } catch (const UsageError &e) {
        err << "usage error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception &e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}

} // namespace pointmatch
