/*
   Copyright 2026 The semiperm Authors

   Licensed under the Apache License, Version 2.0 (the "License");
   you may not use this file except in compliance with the License.
   You may obtain a copy of the License at

       http://www.apache.org/licenses/LICENSE-2.0

   Unless required by applicable law or agreed to in writing, software
   distributed under the License is distributed on an "AS IS" BASIS,
   WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
   See the License for the specific language governing permissions and
   limitations under the License.
*/

#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace semiperm {

inline unsigned worker_count(unsigned requested = 0) {
  if (requested > 0) return requested;
  const unsigned hc = std::thread::hardware_concurrency();
  return hc == 0 ? 1u : hc;
}

/*!
 * Runs fn(i) for i in [0, count) on a pool of threads.
 *
 * Work is handed out in fixed-size chunks; fn must write its result to a
 * slot owned by index i, which keeps results independent of scheduling.
 * If several calls throw, the exception from the smallest index wins.
 */
template <class Fn>
void parallel_for(std::size_t count, Fn&& fn, unsigned threads = 0, std::size_t chunk = 16) {
  if (count == 0) return;
  const unsigned nt = std::min<std::size_t>(worker_count(threads), (count + chunk - 1) / chunk);
  std::atomic<std::size_t> next{0};
  std::mutex err_mu;
  std::exception_ptr err;
  std::size_t err_index = count;

  auto body = [&] {
    for (;;) {
      const std::size_t lo = next.fetch_add(chunk);
      if (lo >= count) return;
      const std::size_t hi = std::min(count, lo + chunk);
      for (std::size_t i = lo; i < hi; ++i) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(err_mu);
          if (i < err_index) {
            err_index = i;
            err = std::current_exception();
          }
        }
      }
    }
  };

  if (nt <= 1) {
    body();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(nt);
    for (unsigned t = 0; t < nt; ++t) pool.emplace_back(body);
    for (auto& th : pool) th.join();
  }
  if (err) std::rethrow_exception(err);
}

/// Maps fn over [0, count) into a vector, in index order.
template <class T, class Fn>
std::vector<T> parallel_map(std::size_t count, Fn&& fn, unsigned threads = 0) {
  std::vector<T> out(count);
  parallel_for(count, [&](std::size_t i) { out[i] = fn(i); }, threads);
  return out;
}

}  // namespace semiperm
