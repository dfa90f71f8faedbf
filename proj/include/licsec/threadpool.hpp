#pragma once

#include <condition_variable>
#include <functional>
#include <mutex>
#include <queue>
#include <thread>
#include <vector>

namespace licsec {

// Bounded worker pool for per-image / per-patch work. Results must be
// collected by index by the caller so output order stays deterministic.
class ThreadPool {
public:
    explicit ThreadPool(unsigned workers = 0) {
        if (workers == 0) workers = std::max(1u, std::thread::hardware_concurrency());
        for (unsigned i = 0; i < workers; ++i)
            threads_.emplace_back([this] { run(); });
    }

    ~ThreadPool() {
        {
            std::lock_guard lk(mu_);
            stop_ = true;
        }
        cv_.notify_all();
        for (auto& t : threads_) t.join();
    }

    void submit(std::function<void()> job) {
        {
            std::lock_guard lk(mu_);
            jobs_.push(std::move(job));
            ++pending_;
        }
        cv_.notify_one();
    }

    void wait_idle() {
        std::unique_lock lk(mu_);
        idle_cv_.wait(lk, [this] { return pending_ == 0; });
    }

    // Runs fn(i) for i in [0,n) across the pool and waits for completion.
    void parallel_for(size_t n, const std::function<void(size_t)>& fn) {
        for (size_t i = 0; i < n; ++i) submit([&fn, i] { fn(i); });
        wait_idle();
    }

    unsigned size() const { return unsigned(threads_.size()); }

private:
    void run() {
        for (;;) {
            std::function<void()> job;
            {
                std::unique_lock lk(mu_);
                cv_.wait(lk, [this] { return stop_ || !jobs_.empty(); });
                if (stop_ && jobs_.empty()) return;
                job = std::move(jobs_.front());
                jobs_.pop();
            }
            job();
            {
                std::lock_guard lk(mu_);
                if (--pending_ == 0) idle_cv_.notify_all();
            }
        }
    }

    std::mutex mu_;
    std::condition_variable cv_, idle_cv_;
    std::queue<std::function<void()>> jobs_;
    std::vector<std::thread> threads_;
    size_t pending_ = 0;
    bool stop_ = false;
};

}  // namespace licsec
