#pragma once

#include <condition_variable>
#include <cstddef>
#include <deque>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace pointmatch {

// Fixed set of long-lived worker threads.
//
// parallel_for lets the calling thread take part in the work, so it never waits on a task
// that has not started. That makes nested use (a pool task calling parallel_for on the same
// pool) and sharing one pool across concurrent callers safe.
class WorkerPool {
  public:
    // `concurrency` counts the calling thread, so a pool of 1 owns no threads.
    explicit WorkerPool(std::size_t concurrency);
    ~WorkerPool();

    WorkerPool(const WorkerPool &) = delete;
    WorkerPool &operator=(const WorkerPool &) = delete;

    std::size_t concurrency() const { return workers_.size() + 1; }

    // Runs fn(0) .. fn(count-1), using at most `max_parallelism` threads including the caller
    // (0 means the whole pool). The first exception thrown by fn is rethrown after all items ran.
    void parallel_for(std::size_t count, const std::function<void(std::size_t)> &fn, std::size_t max_parallelism = 0);

  private:
    void run();

    std::vector<std::thread> workers_;
    std::mutex mutex_;
    std::condition_variable wake_;
    std::deque<std::function<void()>> tasks_;
    bool stopping_ = false;
};

} // namespace pointmatch
