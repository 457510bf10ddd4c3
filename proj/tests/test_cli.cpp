#include <doctest.h>

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "pointmatch/cli.hpp"
#include "pointmatch/config.hpp"
#include "pointmatch/error.hpp"
#include "support.hpp"

using namespace pointmatch;

namespace {

struct Run {
    int code;
    std::string out;
    std::string err;
};

Run run(std::vector<std::string> args) {
    args.insert(args.begin(), "pointmatch");
    std::vector<const char *> argv;
    for (const auto &a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
    return {code, out.str(), err.str()};
}

} // namespace

TEST_CASE("point argument parsing") {
    CHECK(parse_point_arg("1,2,3") == WorldPoint{1, 2, 3});
    CHECK(parse_point_arg("-1.5,2e1,0") == WorldPoint{-1.5, 20, 0});
    CHECK_FALSE(parse_point_arg("1,2").has_value());
    CHECK_FALSE(parse_point_arg("1,2,3,4").has_value());
    CHECK_FALSE(parse_point_arg("1,2,x").has_value());
    CHECK_FALSE(parse_point_arg("1,2,3,").has_value());
    CHECK_FALSE(parse_point_arg("1,2,nan").has_value());
}

TEST_CASE("engine config file and keys") {
    const auto dir = fixtures::scratch_dir("config");
    {
        std::ofstream f(dir / "engine.cfg");
        f << "# engine\nlevels = 4\nmetric = mi   # trailing comment\nbox_mm = 80, 40, 20\nbins = 32\n";
    }
    const EngineConfig cfg = load_engine_config(dir / "engine.cfg");
    CHECK(cfg.search.levels == 4);
    CHECK(cfg.search.metric.kind == SimilarityKind::MutualInfo);
    CHECK(cfg.search.box_mm == std::vector<double>{80, 40, 20});
    CHECK(cfg.search.metric.histogram.bins == 32);

    EngineConfig c;
    CHECK_THROWS_AS(c.set("nonsense", "1"), InvalidConfig);
    CHECK_THROWS_AS(c.set("levels", "many"), InvalidConfig);
    CHECK_THROWS_AS(c.set("early_exit", "on"), InvalidConfig);
    c.set("early_exit", "off");
    {
        std::ofstream f(dir / "bad.cfg");
        f << "levels 3\n";
    }
    CHECK_THROWS_AS(load_engine_config(dir / "bad.cfg"), InvalidConfig);
}

TEST_CASE("usage errors exit with 2") {
    CHECK(run({}).code == 2);
    CHECK(run({"frobnicate"}).code == 2);
    CHECK(run({"match", "a.mha", "b.mha", "--point", "1,2"}).code == 2);
    CHECK(run({"match", "a.mha", "b.mha", "--point", "1,2,3", "--bogus"}).code == 2);
    CHECK(run({"match", "a.mha", "b.mha", "--point", "1,2,3", "--metric", "ncc"}).code == 2);
    CHECK(run({"ablate", "--pairs", "m.jsonl", "--sweep", "bins", "--values", "1"}).code == 2);
    CHECK(run({"--help"}).code == 0);
}

TEST_CASE("match command") {
    const auto dir = fixtures::scratch_dir("cli_match");
    const auto fx = fixtures::metrics_fixture(dir);
    const std::string vol = fx.pairs[0].source.string();

    const Run ok = run({"match", vol, vol, "--point", "32,32,32", "--levels", "3"});
    REQUIRE(ok.code == 0);
    CHECK(ok.out.find('\n') == ok.out.size() - 1); // one record
    const auto j = nlohmann::json::parse(ok.out);
    CHECK(j["matched_point_mm"] == nlohmann::json::array({32.0, 32.0, 32.0}));
    CHECK(j["per_level"].size() == 3);
    CHECK(j.contains("elapsed_ms"));
    CHECK(j.contains("score"));

    const Run missing = run({"match", (dir / "nope.mha").string(), vol, "--point", "1,2,3"});
    CHECK(missing.code == 1);
    CHECK(missing.err.find("nope.mha") != std::string::npos);
    CHECK(missing.out.empty());

    const Run outside = run({"match", vol, vol, "--point", "1000,0,0"});
    CHECK(outside.code == 1);

    const Run threaded = run({"match", vol, vol, "--point", "48,48,32", "--threads", "3"});
    const Run serial = run({"match", vol, vol, "--point", "48,48,32", "--threads", "1"});
    CHECK(nlohmann::json::parse(threaded.out)["per_level"] == nlohmann::json::parse(serial.out)["per_level"]);
}

TEST_CASE("eval, ablate, map and phantom commands") {
    const auto dir = fixtures::scratch_dir("cli_batch");
    auto fx = fixtures::metrics_fixture(dir);
    fx.pairs.resize(3);
    write_manifest(dir / "m.jsonl", fx.pairs);

    const Run ev = run({"eval", "--pairs", (dir / "m.jsonl").string(), "--metric", "combined", "--levels", "2",
                        "--out", (dir / "report.json").string(), "--froc", (dir / "froc.csv").string()});
    REQUIRE(ev.code == 0);
    std::ifstream in(dir / "report.json");
    const auto report = nlohmann::json::parse(in);
    for (const char *key : {"cpm", "mean_mm", "median_mm"}) CHECK(report["aggregate"].contains(key));
    CHECK(std::filesystem::exists(dir / "froc.csv"));

    CHECK(run({"eval", "--pairs", (dir / "absent.jsonl").string()}).code == 1);

    const Run ab = run({"ablate", "--pairs", (dir / "m.jsonl").string(), "--sweep", "levels", "--values", "1,2",
                        "--out", (dir / "abl").string()});
    REQUIRE(ab.code == 0);
    CHECK(ab.out.rfind("levels | count", 0) == 0);
    CHECK(std::filesystem::exists(dir / "abl" / "ablation_levels_2.json"));

    const std::string vol = fx.pairs[0].source.string();
    const Run mp = run({"map", vol, vol, "--point", "32,32,32", "--level", "1", "--out", (dir / "map.mha").string()});
    REQUIRE(mp.code == 0);
    CHECK(nlohmann::json::parse(mp.out)["best_point_mm"] == nlohmann::json::array({32.0, 32.0, 32.0}));
    CHECK(std::filesystem::exists(dir / "map.mha"));

    const Run ph = run({"phantom", "--seed", "3", "--pairs", "2", "--out", (dir / "ph").string()});
    REQUIRE(ph.code == 0);
    CHECK(std::filesystem::exists(dir / "ph" / "manifest.jsonl"));
}
