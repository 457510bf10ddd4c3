#include <doctest.h>

#include <future>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "pointmatch/match_json.hpp"
#include "pointmatch/search.hpp"
#include "pointmatch/service.hpp"
#include "pointmatch/volume_io.hpp"
#include "support.hpp"

using namespace pointmatch;
using nlohmann::json;

namespace {

ServiceOptions quiet(std::size_t capacity = 8) {
    ServiceOptions o;
    o.cache_capacity = capacity;
    o.access_log = false;
    return o;
}

std::string pair_body(const std::filesystem::path &s, const std::filesystem::path &t) {
    return json{{"source_path", s.string()}, {"target_path", t.string()}}.dump();
}

std::string point_body(const WorldPoint &p) { return json{{"point_mm", {p.x, p.y, p.z}}}.dump(); }

} // namespace

TEST_CASE("windowing arithmetic") {
    CHECK(window_to_u8(1024.0f, 0.0, 2048.0) == 128); // 127.5 rounds away from zero
    CHECK(window_to_u8(-5.0f, 0.0, 100.0) == 0);
    CHECK(window_to_u8(500.0f, 0.0, 100.0) == 255);
    CHECK(window_to_u8(50.0f, 0.0, 100.0) == 128);
    CHECK(window_to_u8(9.0f, 10.0, 10.0) == 0);
    CHECK(window_to_u8(10.0f, 10.0, 10.0) == 255);
    CHECK(base64_encode({}) == "");
    CHECK(base64_encode({'f'}) == "Zg==");
    CHECK(base64_encode({'f', 'o'}) == "Zm8=");
    CHECK(base64_encode({'f', 'o', 'o', 'b', 'a', 'r'}) == "Zm9vYmFy");
}

TEST_CASE("pair registration") {
    const auto dir = fixtures::scratch_dir("svc_pairs");
    const auto fx = fixtures::metrics_fixture(dir);
    MatchService svc(quiet());

    const auto ok = svc.create_pair(pair_body(fx.pairs[0].source, fx.pairs[0].target));
    REQUIRE(ok.status == 200);
    const json meta = json::parse(ok.body);
    CHECK(meta["source"]["dims"] == json::array({97, 97, 65}));
    CHECK(meta["target"]["spacing"] == json::array({1.0, 1.0, 1.0}));
    CHECK(meta["pair_id"].is_string());

    const auto missing = svc.create_pair(pair_body(dir / "gone.mha", fx.pairs[0].target));
    CHECK(missing.status == 422);
    CHECK(missing.body.find("gone.mha") != std::string::npos);
    CHECK(svc.create_pair("{not json").status == 400);
    CHECK(svc.create_pair(R"({"source_path": 3})").status == 400);
}

TEST_CASE("match endpoint") {
    const auto dir = fixtures::scratch_dir("svc_match");
    const auto fx = fixtures::metrics_fixture(dir);
    MatchService svc(quiet());
    const std::string id = json::parse(svc.create_pair(pair_body(fx.pairs[0].source, fx.pairs[0].source)).body)["pair_id"];

    CHECK(svc.match("nope", point_body({1, 2, 3})).status == 404);
    CHECK(svc.match(id, point_body({5000, 0, 0})).status == 422);
    CHECK(svc.match(id, R"({"point_mm": [1, 2]})").status == 400);
    CHECK(svc.match(id, R"({"point_mm": [30, 30, 30], "metric": "ncc"})").status == 400);
    CHECK(svc.match(id, R"({"point_mm": [30, 30, 30], "levels": 0})").status == 400);

    const auto r = svc.match(id, point_body({40, 40, 40}));
    REQUIRE(r.status == 200);
    const json j = json::parse(r.body);
    CHECK(distance({j["matched_point_mm"][0], j["matched_point_mm"][1], j["matched_point_mm"][2]}, {40, 40, 40}) <= 1.0);

    // the same engine call made directly
    const Volume v = load_volume(fx.pairs[0].source);
    const auto direct = to_json(match_point(v, v, {40, 40, 40}, SearchConfig{}));
    CHECK(without_timing(j).dump() == without_timing(direct).dump());
}

TEST_CASE("concurrent matches equal serial ones") {
    const auto dir = fixtures::scratch_dir("svc_concurrent");
    const auto fx = fixtures::metrics_fixture(dir);
    ServiceOptions opts = quiet();
    opts.engine.search.threads = 3;
    opts.engine.search.levels = 3;
    MatchService svc(opts);
    const std::string id = json::parse(svc.create_pair(pair_body(fx.pairs[0].source, fx.pairs[0].source)).body)["pair_id"];

    std::vector<std::string> serial;
    for (const auto &p : fx.pairs) serial.push_back(without_timing(json::parse(svc.match(id, point_body(p.query)).body)).dump());
    std::vector<std::future<std::string>> futures;
    for (const auto &p : fx.pairs)
        futures.push_back(std::async(std::launch::async, [&svc, &id, q = p.query] {
            return without_timing(json::parse(svc.match(id, point_body(q)).body)).dump();
        }));
    for (std::size_t n = 0; n < futures.size(); ++n) CHECK(futures[n].get() == serial[n]);
}

TEST_CASE("slice endpoint") {
    const auto dir = fixtures::scratch_dir("svc_slice");
    const Volume flat = fixtures::constant_volume({6, 5, 4}, 1024.0f, {0.5, 0.75, 2.0}, {1, 2, 3});
    write_volume(flat, dir / "flat.mha", ElementType::UShort);
    MatchService svc(quiet());
    const std::string id = json::parse(svc.create_pair(pair_body(dir / "flat.mha", dir / "flat.mha")).body)["pair_id"];

    const auto r = svc.slice(id, {{"volume", "target"}, {"axis", "z"}, {"index", "2"}, {"window", "0,2048"}});
    REQUIRE(r.status == 200);
    const json j = json::parse(r.body);
    CHECK(j["width"] == 6);
    CHECK(j["height"] == 5);
    CHECK(j["encoding"] == "base64-u8");
    CHECK(j["origin_mm"] == json::array({1.0, 2.0, 7.0}));
    CHECK(j["pixels"] == base64_encode(std::vector<uint8_t>(30, 128)));

    const auto at = svc.slice(id, {{"index", "0"}, {"window", "1024,1024"}});
    CHECK(json::parse(at.body)["pixels"] == base64_encode(std::vector<uint8_t>(30, 255)));
    const auto below = svc.slice(id, {{"index", "0"}, {"window", "1025,1025"}});
    CHECK(json::parse(below.body)["pixels"] == base64_encode(std::vector<uint8_t>(30, 0)));

    CHECK(svc.slice(id, {{"index", "4"}}).status == 416);
    CHECK(svc.slice(id, {{"index", "-1"}}).status == 416);
    CHECK(svc.slice(id, {{"index", "x"}}).status == 400);
    CHECK(svc.slice(id, {{"index", "1"}, {"axis", "x"}}).status == 400);
    CHECK(svc.slice("nope", {{"index", "1"}}).status == 404);
}

TEST_CASE("pair cache evicts the oldest idle pair") {
    const auto dir = fixtures::scratch_dir("svc_cache");
    const auto fx = fixtures::metrics_fixture(dir);
    MatchService svc(quiet(2));
    const auto body = pair_body(fx.pairs[0].source, fx.pairs[0].source);
    const std::string a = json::parse(svc.create_pair(body).body)["pair_id"];
    const std::string b = json::parse(svc.create_pair(body).body)["pair_id"];
    svc.cache().find(a); // a becomes the most recently used
    const auto third = svc.create_pair(body);
    CHECK(third.status == 200);
    CHECK(svc.cache().size() == 2);
    CHECK(svc.cache().find(b) == nullptr);
    CHECK(svc.cache().find(a) != nullptr);

    // every cached pair held by a request
    const std::string c = json::parse(third.body)["pair_id"];
    const auto hold_a = svc.cache().find(a);
    const auto hold_c = svc.cache().find(c);
    CHECK(svc.create_pair(body).status == 507);
}

TEST_CASE("http transport") {
    const auto dir = fixtures::scratch_dir("svc_http");
    const auto fx = fixtures::metrics_fixture(dir);
    MatchService svc(quiet());
    const int port = svc.bind("127.0.0.1", 0);
    REQUIRE(port > 0);
    std::thread server([&] { svc.serve(); });

    httplib::Client client("127.0.0.1", port);
    client.set_read_timeout(60, 0);
    const auto health = client.Get("/health");
    REQUIRE(health);
    CHECK(health->status == 200);

    const auto created = client.Post("/pairs", pair_body(fx.pairs[0].source, fx.pairs[0].source), "application/json");
    REQUIRE(created);
    REQUIRE(created->status == 200);
    CHECK(created->get_header_value("Access-Control-Allow-Origin") == "*");
    const std::string id = json::parse(created->body)["pair_id"];

    const auto matched = client.Post("/pairs/" + id + "/match", point_body({48, 48, 32}), "application/json");
    REQUIRE(matched);
    CHECK(matched->status == 200);
    CHECK(json::parse(matched->body)["matched_point_mm"] == json::array({48.0, 48.0, 32.0}));

    const auto mapped = client.Post("/pairs/" + id + "/map", R"({"point_mm": [48, 48, 32], "level": 1})",
                                    "application/json");
    REQUIRE(mapped);
    CHECK(mapped->status == 200);
    CHECK(json::parse(mapped->body)["best_point_mm"] == json::array({48.0, 48.0, 32.0}));

    const auto slice = client.Get("/pairs/" + id + "/slice?volume=source&axis=z&index=3");
    REQUIRE(slice);
    CHECK(slice->status == 200);
    const auto unknown = client.Post("/pairs/zzz/match", point_body({1, 1, 1}), "application/json");
    REQUIRE(unknown);
    CHECK(unknown->status == 404);

    svc.stop();
    server.join();
}
