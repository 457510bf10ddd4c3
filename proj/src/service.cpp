#include "pointmatch/service.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include <httplib.h>
#include <json.hpp>

#include "pointmatch/error.hpp"
#include "pointmatch/match_json.hpp"
#include "pointmatch/search.hpp"
#include "pointmatch/volume_io.hpp"

namespace pointmatch {

namespace {

using nlohmann::json;

MatchService::Reply error_reply(int status, const std::string &message) {
    return {status, json{{"error", message}}.dump()};
}

MatchService::Reply ok(const json &body) { return {200, body.dump()}; }

json volume_meta(const Volume &v) {
    const auto &d = v.dims();
    const auto &s = v.spacing();
    const auto &o = v.origin();
    return {{"dims", {d[0], d[1], d[2]}},
            {"spacing", {s[0], s[1], s[2]}},
            {"origin", {o.x, o.y, o.z}},
            {"modality", std::string(to_string(v.modality()))}};
}

// Throws std::invalid_argument with a client-facing message.
WorldPoint parse_point(const json &body, const char *key) {
    if (!body.contains(key) || !body[key].is_array() || body[key].size() != 3)
        throw std::invalid_argument(std::string("'") + key + "' must be an array of three numbers");
    WorldPoint p;
    for (int a = 0; a < 3; ++a) {
        if (!body[key][a].is_number()) throw std::invalid_argument(std::string("'") + key + "' must be numeric");
        p[a] = body[key][a].get<double>();
    }
    if (!p.finite()) throw std::invalid_argument(std::string("'") + key + "' must be finite");
    return p;
}

} // namespace

PairCache::PairCache(std::size_t capacity) : capacity_(std::max<std::size_t>(1, capacity)) {}

std::vector<std::string> PairCache::insert(std::shared_ptr<const SessionPair> pair) {
    std::lock_guard lock(mutex_);
    std::vector<std::string> evicted;
    if (auto it = index_.find(pair->id); it != index_.end()) {
        lru_.erase(it->second);
        index_.erase(it);
    }
    while (lru_.size() >= capacity_) {
        // Only the cache holds an idle pair.
        auto victim = std::find_if(lru_.rbegin(), lru_.rend(), [](const Entry &e) { return e.use_count() == 1; });
        if (victim == lru_.rend()) throw CacheFull("all cached pairs are in use");
        evicted.push_back((*victim)->id);
        index_.erase((*victim)->id);
        lru_.erase(std::next(victim).base());
    }
    lru_.push_front(std::move(pair));
    index_[lru_.front()->id] = lru_.begin();
    return evicted;
}

std::shared_ptr<const SessionPair> PairCache::find(const std::string &id) {
    std::lock_guard lock(mutex_);
    auto it = index_.find(id);
    if (it == index_.end()) return nullptr;
    lru_.splice(lru_.begin(), lru_, it->second);
    return *it->second;
}

std::size_t PairCache::size() const {
    std::lock_guard lock(mutex_);
    return lru_.size();
}

uint8_t window_to_u8(float v, double lo, double hi) {
    if (!(hi > lo)) return static_cast<double>(v) < lo ? 0 : 255;
    const double t = (static_cast<double>(v) - lo) / (hi - lo) * 255.0;
    return static_cast<uint8_t>(std::clamp<int64_t>(round_half_away(std::clamp(t, -1.0, 256.0)), 0, 255));
}

std::string base64_encode(const std::vector<uint8_t> &bytes) {
    static constexpr char table[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
    std::string out;
    out.reserve((bytes.size() + 2) / 3 * 4);
    std::size_t i = 0;
    for (; i + 2 < bytes.size(); i += 3) {
        const uint32_t n = (uint32_t{bytes[i]} << 16) | (uint32_t{bytes[i + 1]} << 8) | bytes[i + 2];
        out += table[(n >> 18) & 63];
        out += table[(n >> 12) & 63];
        out += table[(n >> 6) & 63];
        out += table[n & 63];
    }
    if (i < bytes.size()) {
        const bool two = i + 1 < bytes.size();
        const uint32_t n = (uint32_t{bytes[i]} << 16) | (two ? uint32_t{bytes[i + 1]} << 8 : 0);
        out += table[(n >> 18) & 63];
        out += table[(n >> 12) & 63];
        out += two ? table[(n >> 6) & 63] : '=';
        out += '=';
    }
    return out;
}

MatchService::MatchService(ServiceOptions options)
    : options_(std::move(options)), cache_(options_.cache_capacity), tables_(options_.engine.model),
      pool_(static_cast<std::size_t>(std::max(1, options_.engine.search.threads))) {
    options_.engine.validate();
}

MatchService::~MatchService() { stop(); }

MatchService::Reply MatchService::create_pair(const std::string &body) {
    json req;
    try {
        req = json::parse(body);
    } catch (const json::exception &) {
        return error_reply(400, "body is not valid JSON");
    }
    if (!req.is_object() || !req.contains("source_path") || !req.contains("target_path") ||
        !req["source_path"].is_string() || !req["target_path"].is_string())
        return error_reply(400, "body needs string fields 'source_path' and 'target_path'");

    auto pair = std::make_shared<SessionPair>();
    pair->source_path = req["source_path"].get<std::string>();
    pair->target_path = req["target_path"].get<std::string>();
    try {
        pair->source = std::make_shared<const Volume>(load_volume(pair->source_path, options_.engine.intensity_offset));
    } catch (const std::exception &e) {
        return error_reply(422, "cannot load '" + pair->source_path.string() + "': " + e.what());
    }
    try {
        pair->target = std::make_shared<const Volume>(load_volume(pair->target_path, options_.engine.intensity_offset));
    } catch (const std::exception &e) {
        return error_reply(422, "cannot load '" + pair->target_path.string() + "': " + e.what());
    }
    for (int level = 1; level <= options_.engine.search.levels; ++level) {
        pair->source_tables.push_back(tables_.get(pair->source->spacing(), level));
        pair->target_tables.push_back(tables_.get(pair->target->spacing(), level));
    }
    pair->created = std::chrono::system_clock::now();
    {
        std::lock_guard lock(id_mutex_);
        pair->id = "pair-" + std::to_string(next_id_++);
    }
    const std::string id = pair->id;
    const json meta = {{"pair_id", id}, {"source", volume_meta(*pair->source)}, {"target", volume_meta(*pair->target)}};
    try {
        cache_.insert(std::move(pair));
    } catch (const CacheFull &e) {
        return error_reply(507, e.what());
    }
    return ok(meta);
}

MatchService::Reply MatchService::match(const std::string &pair_id, const std::string &body) {
    const auto pair = cache_.find(pair_id);
    if (!pair) return error_reply(404, "unknown pair '" + pair_id + "'");
    SearchConfig cfg = options_.engine.search;
    WorldPoint point;
    try {
        const json req = json::parse(body);
        point = parse_point(req, "point_mm");
        if (req.contains("metric")) {
            const auto kind = req["metric"].is_string() ? parse_similarity_kind(req["metric"].get<std::string>())
                                                        : std::nullopt;
            if (!kind) return error_reply(400, "unknown metric");
            cfg.metric.kind = *kind;
        }
        if (req.contains("levels")) {
            if (!req["levels"].is_number_integer()) return error_reply(400, "'levels' must be an integer");
            cfg.levels = req["levels"].get<int>();
        }
        cfg.validate();
    } catch (const json::exception &) {
        return error_reply(400, "body is not valid JSON");
    } catch (const std::invalid_argument &e) {
        return error_reply(400, e.what());
    } catch (const InvalidConfig &e) {
        return error_reply(400, e.what());
    }
    try {
        const MatchResult r =
            match_point(*pair->source, *pair->target, point, cfg, options_.engine.model, {&pool_, &tables_});
        return ok(to_json(r));
    } catch (const QueryOutOfBounds &e) {
        return error_reply(422, e.what());
    } catch (const EmptySearchSpace &e) {
        return error_reply(422, e.what());
    } catch (const Error &e) {
        return error_reply(500, e.what());
    }
}

MatchService::Reply MatchService::map(const std::string &pair_id, const std::string &body) {
    const auto pair = cache_.find(pair_id);
    if (!pair) return error_reply(404, "unknown pair '" + pair_id + "'");
    try {
        const json req = json::parse(body);
        const WorldPoint point = parse_point(req, "point_mm");
        const int level = req.value("level", 1);
        if (level < 1) return error_reply(400, "'level' must be >= 1");
        const SearchConfig &cfg = options_.engine.search;
        const double grid = req.value("grid_mm", cfg.grid_mm(level));
        SearchRegion region = SearchRegion::whole_volume(*pair->target);
        if (req.contains("center_mm"))
            region = SearchRegion::box_around(parse_point(req, "center_mm"),
                                              req.value("box_mm", cfg.box_half_width_mm(std::max(level, 2))));
        const SimilarityMap m = similarity_map(*pair->source, *pair->target, point, level, region, grid, cfg.metric,
                                               options_.engine.model, {&pool_, &tables_},
                                               static_cast<std::size_t>(cfg.threads));
        const auto [best, score] = m.argmax();
        return ok({{"level", m.level},
                   {"origin_mm", {m.origin.x, m.origin.y, m.origin.z}},
                   {"grid_mm", m.grid_mm},
                   {"dims", {m.dims[0], m.dims[1], m.dims[2]}},
                   {"scores", m.scores},
                   {"best_point_mm", {best.x, best.y, best.z}},
                   {"best_score", score}});
    } catch (const json::exception &) {
        return error_reply(400, "malformed request body");
    } catch (const std::invalid_argument &e) {
        return error_reply(400, e.what());
    } catch (const QueryOutOfBounds &e) {
        return error_reply(422, e.what());
    } catch (const EmptySearchSpace &e) {
        return error_reply(422, e.what());
    } catch (const Error &e) {
        return error_reply(400, e.what());
    }
}

MatchService::Reply MatchService::slice(const std::string &pair_id, const std::map<std::string, std::string> &params) {
    const auto pair = cache_.find(pair_id);
    if (!pair) return error_reply(404, "unknown pair '" + pair_id + "'");
    const auto param = [&](const std::string &key, const std::string &fallback) {
        auto it = params.find(key);
        return it == params.end() ? fallback : it->second;
    };
    const std::string which = param("volume", "source");
    if (which != "source" && which != "target") return error_reply(400, "volume must be 'source' or 'target'");
    if (param("axis", "z") != "z") return error_reply(400, "only axis=z is supported");
    const Volume &v = which == "source" ? *pair->source : *pair->target;

    int64_t index = 0;
    try {
        std::size_t used = 0;
        const std::string s = param("index", "");
        index = std::stoll(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
    } catch (const std::logic_error &) {
        return error_reply(400, "'index' must be an integer");
    }
    if (index < 0 || index >= v.dims()[2])
        return error_reply(416, "slice index " + std::to_string(index) + " outside [0, " +
                                    std::to_string(v.dims()[2] - 1) + "]");

    const int64_t nx = v.dims()[0], ny = v.dims()[1];
    const auto slice_values = v.intensities().subspan(static_cast<std::size_t>(index * nx * ny),
                                                      static_cast<std::size_t>(nx * ny));
    double lo = 0.0, hi = 0.0;
    if (auto it = params.find("window"); it != params.end()) {
        const auto comma = it->second.find(',');
        try {
            if (comma == std::string::npos) throw std::invalid_argument(it->second);
            lo = std::stod(it->second.substr(0, comma));
            hi = std::stod(it->second.substr(comma + 1));
        } catch (const std::logic_error &) {
            return error_reply(400, "window must be 'lo,hi'");
        }
        if (hi < lo) return error_reply(400, "window needs lo <= hi");
    } else {
        const auto [mn, mx] = std::minmax_element(slice_values.begin(), slice_values.end());
        lo = *mn;
        hi = *mx;
    }
    std::vector<uint8_t> pixels(slice_values.size());
    std::transform(slice_values.begin(), slice_values.end(), pixels.begin(),
                   [&](float x) { return window_to_u8(x, lo, hi); });
    const WorldPoint origin = v.world_of({0, 0, index});
    return ok({{"volume", which},
               {"axis", "z"},
               {"index", index},
               {"width", nx},
               {"height", ny},
               {"spacing_mm", {v.spacing()[0], v.spacing()[1]}},
               {"origin_mm", {origin.x, origin.y, origin.z}},
               {"window", {lo, hi}},
               {"encoding", "base64-u8"},
               {"pixels", base64_encode(pixels)}});
}

void MatchService::install_routes() {
    auto &srv = *server_;
    const auto send = [](httplib::Response &res, const Reply &r) {
        res.status = r.status;
        res.set_header("Access-Control-Allow-Origin", "*");
        res.set_content(r.body, "application/json");
    };
    srv.Get("/health", [send](const httplib::Request &, httplib::Response &res) { send(res, {200, "{\"ok\":true}"}); });
    srv.Post("/pairs", [this, send](const httplib::Request &req, httplib::Response &res) {
        send(res, create_pair(req.body));
    });
    srv.Post(R"(/pairs/([^/]+)/match)", [this, send](const httplib::Request &req, httplib::Response &res) {
        send(res, match(req.matches[1], req.body));
    });
    srv.Post(R"(/pairs/([^/]+)/map)", [this, send](const httplib::Request &req, httplib::Response &res) {
        send(res, map(req.matches[1], req.body));
    });
    srv.Get(R"(/pairs/([^/]+)/slice)", [this, send](const httplib::Request &req, httplib::Response &res) {
        std::map<std::string, std::string> params;
        for (const auto &[k, v] : req.params) params[k] = v;
        send(res, slice(req.matches[1], params));
    });
    srv.Options(R"(.*)", [](const httplib::Request &, httplib::Response &res) {
        res.set_header("Access-Control-Allow-Origin", "*");
        res.set_header("Access-Control-Allow-Headers", "Content-Type");
        res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
        res.status = 204;
    });
    if (options_.access_log) {
        srv.set_logger([](const httplib::Request &req, const httplib::Response &res) {
            const json line = {{"method", req.method}, {"path", req.path}, {"status", res.status},
                               {"remote", req.remote_addr}};
            std::fprintf(stderr, "%s\n", line.dump().c_str());
        });
    }
}

int MatchService::bind(const std::string &host, int port) {
    if (!server_) {
        server_ = std::make_unique<httplib::Server>();
        install_routes();
    }
    if (port == 0) return server_->bind_to_any_port(host);
    return server_->bind_to_port(host, port) ? port : -1;
}

void MatchService::serve() {
    if (!server_) throw Error("bind() must be called before serve()");
    server_->listen_after_bind();
}

void MatchService::stop() {
    if (server_) server_->stop();
}

} // namespace pointmatch
