#pragma once

// Per-age aggregates over a solved database: counts, best afterstate value,
// share of dead afterstates, mean empty cells and the best/second-best
// action gap.

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <functional>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "agesolver/board.hpp"
#include "agesolver/error.hpp"
#include "agesolver/parallel.hpp"
#include "agesolver/solver.hpp"

namespace agesolver {

struct AgeStats {
  std::uint64_t age = 0;
  std::uint64_t state_count = 0;
  std::uint64_t afterstate_count = 0;
  double best_afterstate_value = 0.0;
  // Afterstates every spawn outcome of which is a terminal state.
  double dead_afterstate_fraction = 0.0;
  double mean_empty_cells = 0.0;  // over afterstates
  // Over states with at least two valid actions: best q minus second-best q,
  // and the share of those states where that gap is below 1.
  double mean_action_gap = 0.0;
  double alt_action_fraction = 0.0;

  bool operator==(const AgeStats&) const = default;
};

inline constexpr double kAltActionThreshold = 1.0;

/// Statistics for one age. `values` may be empty (unsolved database), in
/// which case the value-derived fields stay 0. The neighbour partitions of
/// ages n-2 and n-4 regenerate the state layer of age n.
inline AgeStats compute_age_stats(const Geometry& geo, const AgePartition& current,
                                  std::span<const double> values, const AgePartition& minus2,
                                  const AgePartition& minus4, int workers = 1) {
  if ((current.age >= 6 && minus2.age + 2 != current.age) ||
      (current.age >= 8 && minus4.age + 4 != current.age))
    throw IntegrityError("neighbour layers do not match age " + std::to_string(current.age));
  if (!values.empty() && values.size() != current.codes.size())
    throw IntegrityError("values misaligned at age " + std::to_string(current.age));

  AgeStats st;
  st.age = current.age;
  st.afterstate_count = current.codes.size();
  const StateLayer states =
      regenerate_states(geo, current.age, minus2.codes, minus4.codes, workers);
  st.state_count = states.codes.size();
  if (current.codes.empty()) return st;

  const std::size_t m = current.codes.size();
  std::vector<std::uint8_t> dead(m);
  std::vector<std::uint8_t> empties(m);
  parallel::for_chunks(m, workers, [&](std::size_t b, std::size_t e, int) {
    for (std::size_t i = b; i < e; ++i) {
      const StateCode a = current.codes[i];
      bool all_terminal = true;
      int k = 0;
      for (int c = 0; c < geo.cell_count(); ++c) {
        if (nibble(a, c) != 0) continue;
        ++k;
        if (all_terminal)
          all_terminal = geo.is_terminal(with_nibble(a, c, 1)) && geo.is_terminal(with_nibble(a, c, 2));
      }
      dead[i] = all_terminal;
      empties[i] = std::uint8_t(k);
    }
  });
  std::uint64_t dead_count = 0, empty_sum = 0;
  for (std::size_t i = 0; i < m; ++i) dead_count += dead[i], empty_sum += empties[i];
  st.dead_afterstate_fraction = double(dead_count) / double(m);
  st.mean_empty_cells = double(empty_sum) / double(m);

  if (values.empty()) return st;
  st.best_afterstate_value = *std::max_element(values.begin(), values.end());

  // Gap per state, NaN when fewer than two actions; summed serially so the
  // result does not depend on the worker count.
  const std::size_t n = states.codes.size();
  std::vector<double> gaps(n);
  auto value_of = [&](StateCode c) -> std::optional<double> {
    const auto r = rank_of(current.codes, c);
    return r ? std::optional<double>(values[*r]) : std::nullopt;
  };
  parallel::for_chunks(n, workers, [&](std::size_t b, std::size_t e, int) {
    for (std::size_t i = b; i < e; ++i) {
      const auto choice = best_action(geo, states.codes[i], value_of);
      if (choice.actions.size() < 2) {
        gaps[i] = -1.0;
        continue;
      }
      std::vector<double> q;
      for (const auto& a : choice.actions) q.push_back(a.q);
      std::sort(q.begin(), q.end(), std::greater<>());
      gaps[i] = q[0] - q[1];
    }
  });
  double gap_sum = 0.0;
  std::uint64_t multi = 0, alt = 0;
  for (const double g : gaps) {
    if (g < 0.0) continue;
    gap_sum += g;
    ++multi;
    alt += g < kAltActionThreshold;
  }
  if (multi) {
    st.mean_action_gap = gap_sum / double(multi);
    st.alt_action_fraction = double(alt) / double(multi);
  }
  return st;
}

/// Stats for every age in `ages` (increasing), loading partitions and values on demand.
inline std::vector<AgeStats> compute_all_stats(
    const Geometry& geo, const std::vector<std::uint64_t>& ages,
    const std::function<std::vector<StateCode>(std::uint64_t)>& load_codes,
    const std::function<std::vector<double>(std::uint64_t)>& load_values, int workers = 1) {
  std::vector<AgeStats> out;
  if (ages.empty()) return out;
  auto load = [&](std::uint64_t age) {
    return AgePartition{age, age >= 4 ? load_codes(age) : std::vector<StateCode>{}};
  };
  std::optional<AgePartition> m2, m4;
  for (const std::uint64_t age : ages) {
    if (!m2 || m2->age + 2 != age) {
      m4 = load(age - 4);
      m2 = load(age - 2);
    }
    AgePartition cur = load(age);
    const auto values = load_values ? load_values(age) : std::vector<double>{};
    out.push_back(compute_age_stats(geo, cur, values, *m2, *m4, workers));
    m4 = std::move(m2);
    m2 = std::move(cur);
  }
  return out;
}

// ----------------------------------------------------------------------- CSV

inline constexpr const char* kStatsHeader =
    "age,state_count,afterstate_count,best_afterstate_value,dead_afterstate_fraction,"
    "mean_empty_cells,mean_action_gap,alt_action_fraction";

inline std::string format_stats_row(const AgeStats& s) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%llu,%llu,%llu,%.6f,%.6f,%.6f,%.6f,%.6f",
                static_cast<unsigned long long>(s.age),
                static_cast<unsigned long long>(s.state_count),
                static_cast<unsigned long long>(s.afterstate_count), s.best_afterstate_value,
                s.dead_afterstate_fraction, s.mean_empty_cells, s.mean_action_gap,
                s.alt_action_fraction);
  return buf;
}

inline void write_stats_csv(std::ostream& out, std::span<const AgeStats> stats) {
  out << kStatsHeader << "\n";
  for (const auto& s : stats) out << format_stats_row(s) << "\n";
}

inline void export_stats_csv(std::span<const AgeStats> stats, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path);
  write_stats_csv(out, stats);
  if (!out) throw IoError("write failed for " + path);
}

inline std::vector<AgeStats> parse_stats_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != kStatsHeader)
    throw IntegrityError("stats CSV has an unexpected header");
  std::vector<AgeStats> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    AgeStats s;
    unsigned long long age = 0, states = 0, after = 0;
    if (std::sscanf(line.c_str(), "%llu,%llu,%llu,%lf,%lf,%lf,%lf,%lf", &age, &states, &after,
                    &s.best_afterstate_value, &s.dead_afterstate_fraction, &s.mean_empty_cells,
                    &s.mean_action_gap, &s.alt_action_fraction) != 8)
      throw IntegrityError("malformed stats row: " + line);
    s.age = age, s.state_count = states, s.afterstate_count = after;
    out.push_back(s);
  }
  return out;
}

inline std::string stats_file_name(const Geometry& geo, Variant v) {
  return "stats_" + geo.name() + (v == Variant::standard ? "" : "_" + std::string(to_string(v))) +
         ".csv";
}

}  // namespace agesolver
