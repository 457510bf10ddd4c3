#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <list>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "pointmatch/config.hpp"
#include "pointmatch/error.hpp"
#include "pointmatch/sampling.hpp"
#include "pointmatch/volume.hpp"
#include "pointmatch/worker_pool.hpp"

namespace httplib {
class Server;
}

namespace pointmatch {

class CacheFull : public Error {
  public:
    using Error::Error;
};

// A registered source/target pair. Immutable once published.
struct SessionPair {
    std::string id;
    std::filesystem::path source_path;
    std::filesystem::path target_path;
    std::shared_ptr<const Volume> source;
    std::shared_ptr<const Volume> target;
    std::vector<std::shared_ptr<const OffsetTable>> source_tables; // index = level - 1
    std::vector<std::shared_ptr<const OffsetTable>> target_tables;
    std::chrono::system_clock::time_point created;
};

// LRU cache of session pairs. A pair is idle when no request holds a reference to it; when
// the cache is full the least recently used idle pair is evicted, and if every pair is busy
// insertion fails with CacheFull.
class PairCache {
  public:
    explicit PairCache(std::size_t capacity);

    // Returns the ids evicted to make room.
    std::vector<std::string> insert(std::shared_ptr<const SessionPair> pair);
    std::shared_ptr<const SessionPair> find(const std::string &id);
    std::size_t size() const;
    std::size_t capacity() const { return capacity_; }

  private:
    using Entry = std::shared_ptr<const SessionPair>;
    std::size_t capacity_;
    mutable std::mutex mutex_;
    std::list<Entry> lru_; // most recent first
    std::map<std::string, std::list<Entry>::iterator> index_;
};

// Maps v linearly from [lo, hi] onto [0, 255], rounding half away from zero and clamping.
// When lo == hi the result is 0 below lo and 255 at or above it.
uint8_t window_to_u8(float v, double lo, double hi);

std::string base64_encode(const std::vector<uint8_t> &bytes);

struct ServiceOptions {
    std::size_t cache_capacity = 8;
    EngineConfig engine;
    bool access_log = true;
};

// HTTP/1.1 + JSON front end:
//   POST /pairs                {source_path, target_path}
//   POST /pairs/{id}/match     {point_mm, metric?, levels?}
//   POST /pairs/{id}/map       {point_mm, level?, center_mm?, box_mm?, grid_mm?}
//   GET  /pairs/{id}/slice?volume=source|target&axis=z&index=k&window=lo,hi
//   GET  /health
class MatchService {
  public:
    struct Reply {
        int status = 200;
        std::string body;
    };

    explicit MatchService(ServiceOptions options);
    ~MatchService();

    MatchService(const MatchService &) = delete;
    MatchService &operator=(const MatchService &) = delete;

    Reply create_pair(const std::string &body);
    Reply match(const std::string &pair_id, const std::string &body);
    Reply map(const std::string &pair_id, const std::string &body);
    Reply slice(const std::string &pair_id, const std::map<std::string, std::string> &params);

    // Binds to host:port (port 0 picks a free one) and returns the bound port, or -1.
    int bind(const std::string &host, int port);
    // Serves until stop() is called. Call bind() first.
    void serve();
    void stop();

    PairCache &cache() { return cache_; }

  private:
    void install_routes();

    ServiceOptions options_;
    PairCache cache_;
    OffsetTableCache tables_;
    WorkerPool pool_;
    std::mutex id_mutex_;
    uint64_t next_id_ = 1;
    std::unique_ptr<httplib::Server> server_;
};

} // namespace pointmatch
