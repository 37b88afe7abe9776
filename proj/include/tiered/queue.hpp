#pragma once

#include <condition_variable>
#include <deque>
#include <mutex>
#include <optional>

namespace tiered {

/// Unbounded multi-producer queue with a blocking pop. close() wakes every
/// waiter; pop() then drains what is left and returns nullopt.
template <typename T>
class BlockingQueue {
  public:
    void push(T v) {
        {
            std::lock_guard lock(mu_);
            items_.push_back(std::move(v));
        }
        cv_.notify_one();
    }

    std::optional<T> pop() {
        std::unique_lock lock(mu_);
        cv_.wait(lock, [&] { return closed_ || !items_.empty(); });
        if (items_.empty()) {
            return std::nullopt;
        }
        T v = std::move(items_.front());
        items_.pop_front();
        return v;
    }

    void close() {
        {
            std::lock_guard lock(mu_);
            closed_ = true;
        }
        cv_.notify_all();
    }

  private:
    std::mutex mu_;
    std::condition_variable cv_;
    std::deque<T> items_;
    bool closed_ = false;
};

} // namespace tiered
