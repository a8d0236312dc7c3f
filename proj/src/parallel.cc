/**
 *  Copyright (c) 2026 by Contributors
 * @file parallel.cc
 * @brief Thread-count resolution and the parallel loop.
 */
#include "kgt/parallel.hpp"

#include <algorithm>
#include <cstdlib>
#include <string>

#include "kgt/error.hpp"

namespace kgt {

std::size_t resolve_threads(std::optional<std::size_t> flag) {
  if (flag) {
    if (*flag == 0) throw ConfigError("--threads must be positive");
    return *flag;
  }
  const char* env = std::getenv("KGT_THREADS");
  if (!env || !*env) return 1;
  std::size_t pos = 0;
  unsigned long v = 0;
  try {
    v = std::stoul(env, &pos);
  } catch (const std::exception&) {
    throw ConfigError(std::string("KGT_THREADS is not a positive integer: ") + env);
  }
  if (pos != std::string(env).size() || v == 0)
    throw ConfigError(std::string("KGT_THREADS is not a positive integer: ") + env);
  return v;
}

void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn) {
  threads = std::max<std::size_t>(1, std::min(threads, n));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(threads);
  std::vector<std::thread> pool;
  const std::size_t block = (n + threads - 1) / threads;
  for (std::size_t t = 0; t < threads; ++t) {
    pool.emplace_back([&, t] {
      try {
        for (std::size_t i = t * block; i < std::min(n, (t + 1) * block); ++i) fn(i);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace kgt
