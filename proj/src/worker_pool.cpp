#include "pointmatch/worker_pool.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <memory>

namespace pointmatch {

WorkerPool::WorkerPool(std::size_t concurrency) {
    const std::size_t helpers = concurrency > 1 ? concurrency - 1 : 0;
    workers_.reserve(helpers);
    for (std::size_t i = 0; i < helpers; ++i) workers_.emplace_back([this] { run(); });
}

WorkerPool::~WorkerPool() {
    {
        std::lock_guard lock(mutex_);
        stopping_ = true;
    }
    wake_.notify_all();
    for (auto &t : workers_) t.join();
}

void WorkerPool::run() {
    for (;;) {
        std::function<void()> task;
        {
            std::unique_lock lock(mutex_);
            wake_.wait(lock, [this] { return stopping_ || !tasks_.empty(); });
            if (tasks_.empty()) return;
            task = std::move(tasks_.front());
            tasks_.pop_front();
        }
        task();
    }
}

namespace {

struct LoopState {
    std::size_t count = 0;
    const std::function<void(std::size_t)> *fn = nullptr;
    std::atomic<std::size_t> next{0};
    std::atomic<std::size_t> active{0};
    std::mutex mutex;
    std::condition_variable idle;
    std::exception_ptr error;

    // Helpers may start after the loop finished; they must not touch `fn` then.
    void drain() {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= count) return;
            try {
                (*fn)(i);
            } catch (...) {
                std::lock_guard lock(mutex);
                if (!error) error = std::current_exception();
            }
        }
    }
};

} // namespace

void WorkerPool::parallel_for(std::size_t count, const std::function<void(std::size_t)> &fn,
                              std::size_t max_parallelism) {
    if (count == 0) return;
    std::size_t width = max_parallelism == 0 ? concurrency() : std::min(max_parallelism, concurrency());
    width = std::min(width, count);
    if (width <= 1) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }

    auto state = std::make_shared<LoopState>();
    state->count = count;
    state->fn = &fn;
    {
        std::lock_guard lock(mutex_);
        for (std::size_t h = 0; h + 1 < width; ++h) {
            tasks_.emplace_back([state] {
                state->active.fetch_add(1);
                if (state->next.load() < state->count) state->drain();
                if (state->active.fetch_sub(1) == 1) {
                    std::lock_guard l(state->mutex);
                    state->idle.notify_all();
                }
            });
        }
    }
    wake_.notify_all();
    state->drain();

    // Every index has been claimed; wait for helpers still running one.
    std::unique_lock lock(state->mutex);
    state->idle.wait(lock, [&] { return state->active.load() == 0; });
    if (state->error) std::rethrow_exception(state->error);
}

} // namespace pointmatch
