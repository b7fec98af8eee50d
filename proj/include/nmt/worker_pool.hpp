#pragma once

#include <condition_variable>
#include <cstddef>
#include <deque>
#include <exception>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "nmt/error.hpp"

namespace nmt {

// A job failed inside a worker; `sample` is the id of the input that caused it.
class WorkerError : public Error {
public:
    WorkerError(std::size_t sample, const std::string& what)
        : Error("sample " + std::to_string(sample) + ": " + what), sample_(sample) {}
    std::size_t sample() const { return sample_; }

private:
    std::size_t sample_;
};

// Bounded multi-producer/multi-consumer queue. close() wakes everybody; pop() then drains
// what is left and returns nullopt.
template <class T>
class BlockingQueue {
public:
    explicit BlockingQueue(std::size_t capacity) : capacity_(capacity == 0 ? 1 : capacity) {}

    bool push(T item) {
        std::unique_lock lock(mu_);
        not_full_.wait(lock, [&] { return closed_ || items_.size() < capacity_; });
        if (closed_) return false;
        items_.push_back(std::move(item));
        not_empty_.notify_one();
        return true;
    }

    std::optional<T> pop() {
        std::unique_lock lock(mu_);
        not_empty_.wait(lock, [&] { return closed_ || !items_.empty(); });
        if (items_.empty()) return std::nullopt;
        T item = std::move(items_.front());
        items_.pop_front();
        not_full_.notify_one();
        return item;
    }

    void close() {
        std::lock_guard lock(mu_);
        closed_ = true;
        not_empty_.notify_all();
        not_full_.notify_all();
    }

private:
    std::size_t capacity_;
    std::deque<T> items_;
    bool closed_ = false;
    std::mutex mu_;
    std::condition_variable not_empty_;
    std::condition_variable not_full_;
};

// One producer feeds jobs 0..n-1 through a shared queue, `workers` threads run `work` and
// the calling thread hands results to `sink` strictly in job order, buffering anything
// that finishes early. The first failing job aborts the run with a WorkerError.
template <class Result>
void run_ordered(std::size_t n_jobs, std::size_t workers, const std::function<Result(std::size_t)>& work,
                 const std::function<void(std::size_t, Result&&)>& sink) {
    if (workers == 0) throw ConfigError("number of workers must be >= 1");
    if (n_jobs == 0) return;

    BlockingQueue<std::size_t> jobs(2 * workers);
    std::mutex mu;
    std::condition_variable ready;
    std::map<std::size_t, Result> done;
    std::optional<WorkerError> failure;
    std::size_t alive = workers;

    std::vector<std::thread> pool;
    pool.reserve(workers + 1);
    pool.emplace_back([&] {
        for (std::size_t i = 0; i < n_jobs; ++i)
            if (!jobs.push(i)) break;
        jobs.close();
    });
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            while (auto job = jobs.pop()) {
                try {
                    Result r = work(*job);
                    std::lock_guard lock(mu);
                    done.emplace(*job, std::move(r));
                } catch (const std::exception& e) {
                    std::lock_guard lock(mu);
                    if (!failure) failure.emplace(*job, e.what());
                    jobs.close();
                }
                ready.notify_one();
            }
            std::lock_guard lock(mu);
            --alive;
            ready.notify_one();
        });
    }

    std::size_t next = 0;
    std::exception_ptr sink_error;
    {
        std::unique_lock lock(mu);
        while (next < n_jobs) {
            ready.wait(lock, [&] { return failure || done.contains(next) || alive == 0; });
            if (failure) break;
            auto it = done.find(next);
            if (it == done.end()) break;  // workers gone without producing `next`
            Result r = std::move(it->second);
            done.erase(it);
            lock.unlock();
            try {
                sink(next, std::move(r));
            } catch (...) {
                sink_error = std::current_exception();
                jobs.close();
                lock.lock();
                break;
            }
            ++next;
            lock.lock();
        }
    }
    jobs.close();
    for (auto& t : pool) t.join();
    if (sink_error) std::rethrow_exception(sink_error);
    if (failure) throw *failure;
    if (next < n_jobs) throw Error("worker pool stopped before job " + std::to_string(next) + " completed");
}

}  // namespace nmt
