#pragma once

// Worker fan-out over contiguous index ranges and sorted-set merging.
// Every helper here produces the same result for any worker count.

#include <algorithm>
#include <cstddef>
#include <exception>
#include <iterator>
#include <thread>
#include <vector>

namespace agesolver::parallel {

inline int effective_workers(int requested) {
  if (requested > 0) return requested;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw ? int(hw) : 1;
}

/// Calls fn(begin, end, worker) for `workers` contiguous chunks of [0, n).
template <class Fn>
void for_chunks(std::size_t n, int workers, Fn&& fn) {
  workers = std::max(1, workers);
  if (workers == 1 || n < 2 * std::size_t(workers)) {
    fn(std::size_t{0}, n, 0);
    return;
  }
  const std::size_t chunk = (n + std::size_t(workers) - 1) / std::size_t(workers);
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(workers));
  {
    std::vector<std::jthread> threads;
    threads.reserve(std::size_t(workers));
    for (int w = 0; w < workers; ++w) {
      const std::size_t begin = std::min(n, chunk * std::size_t(w));
      const std::size_t end = std::min(n, begin + chunk);
      threads.emplace_back([&fn, &errors, begin, end, w] {
        try {
          fn(begin, end, w);
        } catch (...) {
          errors[std::size_t(w)] = std::current_exception();
        }
      });
    }
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

template <class T>
void sort_unique(std::vector<T>& v) {
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
}

/// Set union of two strictly increasing sequences.
template <class T>
std::vector<T> union_sorted(const std::vector<T>& a, const std::vector<T>& b) {
  if (a.empty()) return b;
  if (b.empty()) return a;
  std::vector<T> out;
  out.reserve(a.size() + b.size());
  std::set_union(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
  return out;
}

/// Merges sorted unique parts pairwise into one sorted unique sequence.
template <class T>
std::vector<T> merge_unique(std::vector<std::vector<T>> parts) {
  if (parts.empty()) return {};
  while (parts.size() > 1) {
    std::vector<std::vector<T>> next;
    next.reserve((parts.size() + 1) / 2);
    for (std::size_t i = 0; i + 1 < parts.size(); i += 2) {
      next.push_back(union_sorted(parts[i], parts[i + 1]));
      std::vector<T>().swap(parts[i]);
      std::vector<T>().swap(parts[i + 1]);
    }
    if (parts.size() % 2) next.push_back(std::move(parts.back()));
    parts = std::move(next);
  }
  return std::move(parts.front());
}

}  // namespace agesolver::parallel
