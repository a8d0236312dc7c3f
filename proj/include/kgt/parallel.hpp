/**
 *  Copyright (c) 2026 by Contributors
 * @file kgt/parallel.hpp
 * @brief Thread-count resolution, a static-partition parallel loop and a
 *        bounded producer/consumer queue.
 */
#pragma once

#include <condition_variable>
#include <cstddef>
#include <deque>
#include <exception>
#include <functional>
#include <mutex>
#include <optional>
#include <thread>
#include <vector>

namespace kgt {

/// `flag` wins over the KGT_THREADS environment variable; the default is 1.
/// Throws ConfigError on a malformed or zero value.
std::size_t resolve_threads(std::optional<std::size_t> flag = std::nullopt);

/// Runs fn(i) for i in [0, n). Work is split into contiguous blocks, one per
/// thread, so results written to slot i never depend on the thread count.
/// The first exception (lowest block) is rethrown after all threads join.
void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn);

/// Blocking FIFO with a fixed capacity. close() wakes all waiters; pop()
/// then drains the remaining items before returning nullopt.
template <typename T>
class BoundedQueue {
 public:
  explicit BoundedQueue(std::size_t capacity) : capacity_(capacity ? capacity : 1) {}

  /// Returns false when the queue was closed before the item could be queued.
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
    not_full_.notify_all();
    not_empty_.notify_all();
  }

 private:
  std::size_t capacity_;
  std::deque<T> items_;
  bool closed_ = false;
  std::mutex mu_;
  std::condition_variable not_full_, not_empty_;
};

}  // namespace kgt
