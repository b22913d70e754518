#pragma once

// Brute-force ground truth for tiny boards: memoized expectimax over the full
// game graph and a plain breadth-first reachability closure. Nothing here
// uses the age partitioning or the move/symmetry tables of Geometry; rules are
// re-implemented on an explicit grid so that agreement with the partition
// solver is independent evidence.

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <deque>
#include <map>
#include <ostream>
#include <set>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "agesolver/board.hpp"
#include "agesolver/error.hpp"
#include "agesolver/solver.hpp"

namespace agesolver::oracle {

/// Game rules on an explicit row-major grid of exponents.
class NaiveRules {
 public:
  NaiveRules(int rows, int cols) : rows_(rows), cols_(cols) {}
  explicit NaiveRules(const Geometry& g) : NaiveRules(g.rows(), g.cols()) {}

  int cells() const { return rows_ * cols_; }

  std::vector<int> decode(std::uint64_t code) const {
    std::vector<int> g(static_cast<std::size_t>(cells()));
    for (int i = 0; i < cells(); ++i) g[std::size_t(i)] = int((code >> (4 * i)) & 0xF);
    return g;
  }

  std::uint64_t encode(const std::vector<int>& g) const {
    std::uint64_t code = 0;
    for (int i = 0; i < cells(); ++i) code |= std::uint64_t(g[std::size_t(i)]) << (4 * i);
    return code;
  }

  struct Slide {
    std::uint64_t after = 0;
    std::uint64_t reward = 0;
    bool changed = false;
  };

  Slide slide(std::uint64_t code, Direction d) const {
    const auto g = decode(code);
    auto out = g;
    std::uint64_t reward = 0;
    const bool horizontal = d == Direction::left || d == Direction::right;
    const int lines = horizontal ? rows_ : cols_;
    const int len = horizontal ? cols_ : rows_;
    for (int l = 0; l < lines; ++l) {
      // Cell positions of this line, nearest to the wall first.
      std::vector<int> pos;
      for (int j = 0; j < len; ++j) {
        int r = 0, c = 0;
        switch (d) {
          case Direction::left: r = l, c = j; break;
          case Direction::right: r = l, c = cols_ - 1 - j; break;
          case Direction::up: r = j, c = l; break;
          case Direction::down: r = rows_ - 1 - j, c = l; break;
        }
        pos.push_back(r * cols_ + c);
      }
      std::vector<int> tiles;
      for (int p : pos)
        if (g[std::size_t(p)]) tiles.push_back(g[std::size_t(p)]);
      std::vector<int> merged;
      for (std::size_t i = 0; i < tiles.size(); ++i) {
        if (i + 1 < tiles.size() && tiles[i] == tiles[i + 1]) {
          merged.push_back(tiles[i] + 1);
          reward += std::uint64_t{1} << (tiles[i] + 1);
          ++i;
        } else {
          merged.push_back(tiles[i]);
        }
      }
      merged.resize(pos.size(), 0);
      for (std::size_t j = 0; j < pos.size(); ++j) out[std::size_t(pos[j])] = merged[j];
    }
    return {encode(out), reward, out != g};
  }

  /// Minimum code over flips, 180-degree rotation and, on square boards, transpositions.
  std::uint64_t canonical(std::uint64_t code) const {
    const auto g = decode(code);
    std::uint64_t best = code;
    const int n = square() ? 8 : 4;
    for (int t = 1; t < n; ++t) {
      std::vector<int> h(g.size());
      for (int r = 0; r < rows_; ++r)
        for (int c = 0; c < cols_; ++c) {
          int r2 = r, c2 = c;
          const bool flip_r = t & 1, flip_c = t & 2, swap = t & 4;
          if (flip_r) r2 = rows_ - 1 - r2;
          if (flip_c) c2 = cols_ - 1 - c2;
          if (swap) std::swap(r2, c2);
          h[std::size_t(r2 * cols_ + c2)] = g[std::size_t(r * cols_ + c)];
        }
      best = std::min(best, encode(h));
    }
    return best;
  }

  std::vector<int> empty_cells(std::uint64_t code) const {
    std::vector<int> out;
    const auto g = decode(code);
    for (int i = 0; i < cells(); ++i)
      if (!g[std::size_t(i)]) out.push_back(i);
    return out;
  }

  static std::uint64_t place(std::uint64_t code, int cell, int exponent) {
    return code | (std::uint64_t(exponent) << (4 * cell));
  }

  static std::uint64_t age(std::uint64_t code) {
    std::uint64_t a = 0;
    for (; code; code >>= 4)
      if (code & 0xF) a += std::uint64_t{1} << (code & 0xF);
    return a;
  }

  /// Canonical boards with exactly two spawned tiles.
  std::vector<std::uint64_t> initial_states() const {
    std::set<std::uint64_t> out;
    for (int i = 0; i < cells(); ++i)
      for (int j = 0; j < cells(); ++j)
        if (i != j)
          for (int a = 1; a <= 2; ++a)
            for (int b = 1; b <= 2; ++b) out.insert(canonical(place(place(0, i, a), j, b)));
    return {out.begin(), out.end()};
  }

 private:
  bool square() const { return rows_ == cols_; }
  int rows_, cols_;
};

struct OracleResult {
  std::unordered_map<std::uint64_t, double> state_values;      // canonical state -> v
  std::unordered_map<std::uint64_t, double> afterstate_values;  // canonical afterstate -> v'
  std::size_t reachable_states() const { return state_values.size(); }
  std::size_t reachable_afterstates() const { return afterstate_values.size(); }
};

namespace detail {

class Expectimax {
 public:
  Expectimax(const NaiveRules& rules, Variant variant, OracleResult& out)
      : rules_(rules), variant_(variant), out_(out) {}

  double state(std::uint64_t s) {
    if (const auto it = out_.state_values.find(s); it != out_.state_values.end()) return it->second;
    double best = 0.0;
    bool any = false;
    for (auto d : kDirections) {
      const auto m = rules_.slide(s, d);
      if (!m.changed) continue;
      const double q = double(m.reward) + afterstate(rules_.canonical(m.after));
      if (!any || q > best) best = q;
      any = true;
    }
    out_.state_values.emplace(s, best);
    return best;
  }

  double afterstate(std::uint64_t a) {
    if (const auto it = out_.afterstate_values.find(a); it != out_.afterstate_values.end())
      return it->second;
    const auto empties = rules_.empty_cells(a);
    double sum = 0.0, hi2 = -1e300, hi4 = -1e300, lo2 = 1e300, lo4 = 1e300;
    for (int c : empties) {
      const double v2 = state(rules_.canonical(NaiveRules::place(a, c, 1)));
      const double v4 = state(rules_.canonical(NaiveRules::place(a, c, 2)));
      sum += 0.9 * v2 + 0.1 * v4;
      hi2 = std::max(hi2, v2), hi4 = std::max(hi4, v4);
      lo2 = std::min(lo2, v2), lo4 = std::min(lo4, v4);
    }
    double v = 0.0;
    switch (variant_) {
      case Variant::standard: v = sum / double(empties.size()); break;
      case Variant::optimistic: v = 0.9 * hi2 + 0.1 * hi4; break;
      case Variant::pessimistic: v = 0.9 * lo2 + 0.1 * lo4; break;
    }
    out_.afterstate_values.emplace(a, v);
    return v;
  }

 private:
  const NaiveRules& rules_;
  Variant variant_;
  OracleResult& out_;
};

}  // namespace detail

/// Memoized expectimax over every state reachable from the initial states.
inline OracleResult solve_exhaustive(const Geometry& geo, Variant variant = Variant::standard) {
  if (geo.cell_count() > 9)
    throw UsageError("exhaustive oracle supports at most 9 cells, not " + geo.name());
  const NaiveRules rules(geo);
  OracleResult out;
  detail::Expectimax solver(rules, variant, out);
  for (const auto s : rules.initial_states()) solver.state(s);
  return out;
}

struct ReachableSets {
  std::map<std::uint64_t, std::vector<StateCode>> states;       // age -> sorted canonical states
  std::map<std::uint64_t, std::vector<StateCode>> afterstates;  // age -> sorted canonical afterstates
  std::size_t total_states() const {
    std::size_t n = 0;
    for (const auto& [a, v] : states) n += v.size();
    return n;
  }
  std::size_t total_afterstates() const {
    std::size_t n = 0;
    for (const auto& [a, v] : afterstates) n += v.size();
    return n;
  }
};

/// Breadth-first closure under actions and spawns, keeping states of age <= age_cap.
inline ReachableSets enumerate_reachable(const Geometry& geo, std::uint64_t age_cap,
                                         std::size_t memory_guard = 50'000'000) {
  const NaiveRules rules(geo);
  std::unordered_set<std::uint64_t> seen_states, seen_after;
  std::deque<std::uint64_t> queue;
  for (const auto s : rules.initial_states())
    if (NaiveRules::age(s) <= age_cap && seen_states.insert(s).second) queue.push_back(s);
  while (!queue.empty()) {
    const std::uint64_t s = queue.front();
    queue.pop_front();
    for (auto d : kDirections) {
      const auto m = rules.slide(s, d);
      if (!m.changed) continue;
      const std::uint64_t a = rules.canonical(m.after);
      if (!seen_after.insert(a).second) continue;
      for (int c : rules.empty_cells(a))
        for (int e = 1; e <= 2; ++e) {
          const std::uint64_t next = rules.canonical(NaiveRules::place(a, c, e));
          if (NaiveRules::age(next) <= age_cap && seen_states.insert(next).second)
            queue.push_back(next);
        }
    }
    if (seen_states.size() + seen_after.size() > memory_guard)
      throw UsageError("reachability oracle exceeded its memory guard");
  }
  ReachableSets out;
  for (const auto s : seen_states) out.states[NaiveRules::age(s)].push_back(StateCode{s});
  for (const auto a : seen_after) out.afterstates[NaiveRules::age(a)].push_back(StateCode{a});
  for (auto& [age, v] : out.states) std::sort(v.begin(), v.end());
  for (auto& [age, v] : out.afterstates) std::sort(v.begin(), v.end());
  return out;
}

/// Writes "code,value" lines (code as 16 hex digits) sorted by code.
inline void dump_values(std::ostream& out, const std::unordered_map<std::uint64_t, double>& values) {
  std::vector<std::pair<std::uint64_t, double>> rows(values.begin(), values.end());
  std::sort(rows.begin(), rows.end());
  char buf[64];
  for (const auto& [code, v] : rows) {
    std::snprintf(buf, sizeof buf, "%016llx,%.9f\n", static_cast<unsigned long long>(code), v);
    out << buf;
  }
}

}  // namespace agesolver::oracle
