#pragma once

// Age-partitioned enumeration and valuation.
//
// The age of a board (sum of its tiles) is preserved by every action and
// grows by exactly 2 or 4 per spawn. Forward enumeration therefore walks ages
// upward holding only the state layers for age, age+2 and age+4; backward
// valuation walks ages downward and needs only the afterstates of the
// neighbouring ages, regenerating state layers on the fly.

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "agesolver/board.hpp"
#include "agesolver/error.hpp"
#include "agesolver/parallel.hpp"

namespace agesolver {

enum class Variant { standard, optimistic, pessimistic };

inline std::string_view to_string(Variant v) {
  switch (v) {
    case Variant::standard: return "standard";
    case Variant::optimistic: return "optimistic";
    case Variant::pessimistic: return "pessimistic";
  }
  return "standard";
}

inline Variant parse_variant(std::string_view s) {
  for (auto v : {Variant::standard, Variant::optimistic, Variant::pessimistic})
    if (to_string(v) == s) return v;
  throw UsageError("unknown variant '" + std::string(s) + "'");
}

/// Canonical state codes of one age, strictly increasing. Never persisted.
struct StateLayer {
  std::uint64_t age = 0;
  std::vector<StateCode> codes;
};

/// Canonical afterstate codes of one age, strictly increasing.
struct AgePartition {
  std::uint64_t age = 0;
  std::vector<StateCode> codes;
};

struct SolveConfig {
  Geometry geometry;
  std::optional<std::uint64_t> max_age;
  Variant variant = Variant::standard;
  int worker_count = 1;
};

struct AgeCount {
  std::uint64_t age = 0;
  std::uint64_t states = 0;
  std::uint64_t afterstates = 0;
};

struct ForwardSummary {
  std::vector<AgeCount> ages;
  std::uint64_t total_states = 0;
  std::uint64_t total_afterstates = 0;
  bool complete = false;  // false when stopped by max_age
};

inline std::optional<std::size_t> rank_of(std::span<const StateCode> sorted, StateCode code) {
  const auto it = std::lower_bound(sorted.begin(), sorted.end(), code);
  if (it == sorted.end() || *it != code) return std::nullopt;
  return std::size_t(it - sorted.begin());
}

// ------------------------------------------------------------------ forward

/// Every canonical afterstate reachable by one valid action from the layer.
inline AgePartition expand_afterstates(const Geometry& geo, const StateLayer& states,
                                       int workers = 1) {
  std::vector<std::vector<StateCode>> parts(static_cast<std::size_t>(std::max(1, workers)));
  parallel::for_chunks(states.codes.size(), workers, [&](std::size_t b, std::size_t e, int w) {
    auto& out = parts[std::size_t(w)];
    out.reserve((e - b) * 3);
    for (std::size_t i = b; i < e; ++i)
      for (auto d : kDirections)
        if (const auto m = geo.apply_action(states.codes[i], d); m.changed)
          out.push_back(geo.canonicalize(m.afterstate));
    parallel::sort_unique(out);
  });
  return {states.age, parallel::merge_unique(std::move(parts))};
}

/// Canonical states obtained by placing a tile of the given exponent (1 or 2)
/// in every empty cell of every afterstate.
inline std::vector<StateCode> spawn_layer(const Geometry& geo, std::span<const StateCode> afterstates,
                                          unsigned exponent, int workers = 1) {
  std::vector<std::vector<StateCode>> parts(static_cast<std::size_t>(std::max(1, workers)));
  parallel::for_chunks(afterstates.size(), workers, [&](std::size_t b, std::size_t e, int w) {
    auto& out = parts[std::size_t(w)];
    out.reserve((e - b) * 2);
    const int cells = geo.cell_count();
    for (std::size_t i = b; i < e; ++i) {
      const StateCode a = afterstates[i];
      for (int c = 0; c < cells; ++c)
        if (nibble(a, c) == 0) out.push_back(geo.canonicalize(with_nibble(a, c, exponent)));
    }
    parallel::sort_unique(out);
  });
  return parallel::merge_unique(std::move(parts));
}

struct SpawnLayers {
  StateLayer plus2;
  StateLayer plus4;
};

inline SpawnLayers spawn_expand(const Geometry& geo, const AgePartition& afterstates,
                                int workers = 1) {
  return {{afterstates.age + 2, spawn_layer(geo, afterstates.codes, 1, workers)},
          {afterstates.age + 4, spawn_layer(geo, afterstates.codes, 2, workers)}};
}

/// Canonical initial states of one age (4, 6 or 8), sorted.
inline std::vector<StateCode> initial_layer(const Geometry& geo, std::uint64_t age) {
  std::vector<StateCode> out;
  for (const auto& init : geo.initial_states())
    if (age_of(init.state) == age) out.push_back(geo.canonicalize(init.state));
  parallel::sort_unique(out);
  return out;
}

/// Complete state layer of age n from the afterstates of ages n-2 and n-4.
inline StateLayer regenerate_states(const Geometry& geo, std::uint64_t age,
                                    std::span<const StateCode> afterstates_minus2,
                                    std::span<const StateCode> afterstates_minus4,
                                    int workers = 1) {
  auto codes = parallel::union_sorted(spawn_layer(geo, afterstates_minus2, 1, workers),
                                      spawn_layer(geo, afterstates_minus4, 2, workers));
  return {age, parallel::union_sorted(codes, initial_layer(geo, age))};
}

using PartitionSink = std::function<void(const AgePartition&, std::uint64_t state_count)>;

/// Live layers of the forward sweep: `current` is complete, `next` is
/// partially enumerated, `after_next` holds only initial states.
struct ForwardCursor {
  std::uint64_t age = 4;
  StateLayer current, next, after_next;
};

inline ForwardCursor initial_cursor(const Geometry& geo) {
  return {4, {4, initial_layer(geo, 4)}, {6, initial_layer(geo, 6)}, {8, initial_layer(geo, 8)}};
}

/// Cursor that continues a sweep after age `last` has been emitted, rebuilt
/// from the stored afterstates of ages last and last-2.
inline ForwardCursor resume_cursor(const Geometry& geo, std::uint64_t last,
                                   std::span<const StateCode> afterstates_last,
                                   std::span<const StateCode> afterstates_last_minus2,
                                   int workers = 1) {
  ForwardCursor c;
  c.age = last + 2;
  c.current = regenerate_states(geo, last + 2, afterstates_last, afterstates_last_minus2, workers);
  c.next = {last + 4, parallel::union_sorted(spawn_layer(geo, afterstates_last, 2, workers),
                                             initial_layer(geo, last + 4))};
  c.after_next = {last + 6, initial_layer(geo, last + 6)};
  return c;
}

/// Enumerates every reachable canonical afterstate age by age, emitting each
/// partition exactly once. Writes one progress line per age to `log` if given.
inline ForwardSummary forward_pass(const SolveConfig& config, const PartitionSink& sink,
                                   std::ostream* log = nullptr,
                                   std::optional<ForwardCursor> resume = std::nullopt) {
  const Geometry& geo = config.geometry;
  const int workers = config.worker_count;
  ForwardCursor cur = resume ? std::move(*resume) : initial_cursor(geo);
  ForwardSummary summary;
  const auto start = std::chrono::steady_clock::now();

  while (!cur.current.codes.empty() || !cur.next.codes.empty() || !cur.after_next.codes.empty()) {
    if (config.max_age && cur.age > *config.max_age) return summary;
    AgePartition after = expand_afterstates(geo, cur.current, workers);
    const std::uint64_t n_states = cur.current.codes.size();
    std::vector<StateCode>().swap(cur.current.codes);
    sink(after, n_states);
    summary.ages.push_back({cur.age, n_states, after.codes.size()});
    summary.total_states += n_states;
    summary.total_afterstates += after.codes.size();
    if (log) {
      const double secs =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      *log << "age=" << cur.age << " states=" << n_states << " afterstates=" << after.codes.size()
           << " elapsed=" << secs << "\n";
      log->flush();
    }
    auto spawned = spawn_expand(geo, after, workers);
    std::vector<StateCode>().swap(after.codes);
    cur.current = {cur.age + 2, parallel::union_sorted(cur.next.codes, spawned.plus2.codes)};
    cur.next = {cur.age + 4, parallel::union_sorted(cur.after_next.codes, spawned.plus4.codes)};
    cur.age += 2;
    cur.after_next = {cur.age + 4, initial_layer(geo, cur.age + 4)};
  }
  summary.complete = true;
  return summary;
}

// ----------------------------------------------------------------- backward

/// v(s) = max over valid actions of reward + v'(afterstate); 0 for terminal states.
inline std::vector<double> accumulate_action(const Geometry& geo, const StateLayer& states,
                                             const AgePartition& afterstates,
                                             std::span<const double> afterstate_values,
                                             int workers = 1) {
  if (afterstate_values.size() != afterstates.codes.size())
    throw IntegrityError("afterstate values misaligned at age " + std::to_string(afterstates.age));
  std::vector<double> values(states.codes.size(), 0.0);
  parallel::for_chunks(states.codes.size(), workers, [&](std::size_t b, std::size_t e, int) {
    for (std::size_t i = b; i < e; ++i) {
      double best = 0.0;
      bool any = false;
      for (auto d : kDirections) {
        const auto m = geo.apply_action(states.codes[i], d);
        if (!m.changed) continue;
        const auto r = rank_of(afterstates.codes, geo.canonicalize(m.afterstate));
        if (!r)
          throw IntegrityError("afterstate of " + geo.format(states.codes[i]) +
                               " missing from age " + std::to_string(afterstates.age));
        const double q = double(m.reward) + afterstate_values[*r];
        if (!any || q > best) best = q;
        any = true;
      }
      values[i] = best;
    }
  });
  return values;
}

/// Afterstate values from the state values of ages age+2 and age+4.
inline std::vector<double> accumulate_spawn(const Geometry& geo, const AgePartition& afterstates,
                                            const StateLayer& plus2, std::span<const double> v2,
                                            const StateLayer& plus4, std::span<const double> v4,
                                            Variant variant, int workers = 1) {
  std::vector<double> values(afterstates.codes.size(), 0.0);
  auto lookup = [&](const StateLayer& layer, std::span<const double> v, StateCode s) {
    const auto r = rank_of(layer.codes, geo.canonicalize(s));
    if (!r)
      throw IntegrityError("spawn successor " + geo.format(s) + " missing from age " +
                           std::to_string(layer.age));
    return v[*r];
  };
  parallel::for_chunks(afterstates.codes.size(), workers, [&](std::size_t b, std::size_t e, int) {
    const int cells = geo.cell_count();
    for (std::size_t i = b; i < e; ++i) {
      const StateCode a = afterstates.codes[i];
      double sum = 0.0;
      double hi2 = -std::numeric_limits<double>::infinity(), hi4 = hi2;
      double lo2 = std::numeric_limits<double>::infinity(), lo4 = lo2;
      int k = 0;
      for (int c = 0; c < cells; ++c) {
        if (nibble(a, c) != 0) continue;
        const double x2 = lookup(plus2, v2, with_nibble(a, c, 1));
        const double x4 = lookup(plus4, v4, with_nibble(a, c, 2));
        sum += SpawnModel::p2 * x2 + SpawnModel::p4 * x4;
        hi2 = std::max(hi2, x2);
        hi4 = std::max(hi4, x4);
        lo2 = std::min(lo2, x2);
        lo4 = std::min(lo4, x4);
        ++k;
      }
      if (k == 0) throw IntegrityError("afterstate " + geo.format(a) + " has no empty cell");
      switch (variant) {
        case Variant::standard: values[i] = sum / k; break;
        case Variant::optimistic: values[i] = SpawnModel::p2 * hi2 + SpawnModel::p4 * hi4; break;
        case Variant::pessimistic: values[i] = SpawnModel::p2 * lo2 + SpawnModel::p4 * lo4; break;
      }
    }
  });
  return values;
}

/// Loads the afterstate partition of an age; an empty vector for absent ages.
using PartitionLoader = std::function<std::vector<StateCode>(std::uint64_t age)>;
using ValueSink = std::function<void(const AgePartition&, std::span<const double>)>;

struct BackwardStart {
  std::uint64_t top_age = 0;  // highest age holding afterstates
  // Resume: values of ages >= resume_age are already known.
  std::optional<std::uint64_t> resume_age;
  std::function<std::vector<double>(std::uint64_t age)> load_values;
};

/// Computes afterstate values for all ages from top_age (or resume_age - 2)
/// down to 4, emitting each age's values to `sink` in decreasing age order.
inline void backward_pass(const SolveConfig& config, const PartitionLoader& load,
                          const BackwardStart& start, const ValueSink& sink,
                          std::ostream* log = nullptr) {
  const Geometry& geo = config.geometry;
  const int workers = config.worker_count;
  const auto t0 = std::chrono::steady_clock::now();
  auto load_at = [&](std::uint64_t age) {
    return AgePartition{age, age >= 4 ? load(age) : std::vector<StateCode>{}};
  };

  if (start.top_age < 4 || (start.resume_age && *start.resume_age <= 4)) return;
  std::uint64_t age = start.top_age;
  AgePartition above{age + 2, {}};  // afterstates of age+2 with values
  std::vector<double> above_values;
  StateLayer states4{age + 4, {}};  // states of age+4 with values
  std::vector<double> values4;

  if (start.resume_age) {
    // Values for ages >= resume_age exist: rebuild states of resume_age+2.
    age = *start.resume_age - 2;
    above = load_at(*start.resume_age);
    above_values = start.load_values(*start.resume_age);
    const AgePartition above2 = load_at(*start.resume_age + 2);
    const auto above2_values = above2.codes.empty() ? std::vector<double>{}
                                                    : start.load_values(*start.resume_age + 2);
    states4 = regenerate_states(geo, *start.resume_age + 2, above.codes,
                                load_at(*start.resume_age - 2).codes, workers);
    values4 = accumulate_action(geo, states4, above2, above2_values, workers);
  } else {
    // States above the top age are all terminal.
    states4 = regenerate_states(geo, age + 4, {}, load_at(age).codes, workers);
    values4 = accumulate_action(geo, states4, AgePartition{age + 4, {}}, {}, workers);
  }

  AgePartition current = load_at(age);
  AgePartition below = load_at(age - 2);
  for (; age >= 4; age -= 2) {
    StateLayer states2 = regenerate_states(geo, age + 2, current.codes, below.codes, workers);
    std::vector<double> values2 = accumulate_action(geo, states2, above, above_values, workers);
    std::vector<double> values = accumulate_spawn(geo, current, states2, values2, states4, values4,
                                                  config.variant, workers);
    sink(current, values);
    if (log) {
      const double best = values.empty() ? 0.0 : *std::max_element(values.begin(), values.end());
      const double secs =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      *log << "age=" << age << " afterstates=" << current.codes.size() << " best=" << best
           << " elapsed=" << secs << "\n";
      log->flush();
    }
    states4 = std::move(states2);
    values4 = std::move(values2);
    above = std::move(current);
    above_values = std::move(values);
    current = std::move(below);
    if (age < 6) break;
    below = load_at(age - 4);
  }
}

// ------------------------------------------------------------ action choice

struct ActionValue {
  Direction direction{};
  std::uint32_t reward = 0;
  StateCode afterstate;  // as produced by the move, not canonicalized
  double afterstate_value = 0.0;
  double q = 0.0;
};

struct ActionChoice {
  std::optional<Direction> best;  // empty for terminal states
  std::vector<ActionValue> actions;
  double state_value = 0.0;
};

/// q(a) = reward + v'(afterstate) for every valid action and their argmax;
/// ties go to the earliest direction in left, right, up, down order.
/// `value_of` maps a canonical afterstate to its value or nullopt.
template <class ValueOf>
ActionChoice best_action(const Geometry& geo, StateCode state, ValueOf&& value_of) {
  ActionChoice choice;
  for (auto d : kDirections) {
    const auto m = geo.apply_action(state, d);
    if (!m.changed) continue;
    const std::optional<double> v = value_of(geo.canonicalize(m.afterstate));
    if (!v)
      throw NotFoundError("afterstate " + geo.format(m.afterstate) + " is not in the database");
    ActionValue a{d, m.reward, m.afterstate, *v, double(m.reward) + *v};
    if (!choice.best || a.q > choice.state_value) {
      choice.best = d;
      choice.state_value = a.q;
    }
    choice.actions.push_back(a);
  }
  return choice;
}

/// Solved afterstate values held in memory, keyed by age.
class SolvedTable {
 public:
  void insert(const AgePartition& p, std::span<const double> values) {
    auto& slot = ages_[p.age];
    slot.codes = p.codes;
    slot.values.assign(values.begin(), values.end());
  }

  std::optional<double> value(StateCode canonical) const {
    const auto it = ages_.find(age_of(canonical));
    if (it == ages_.end()) return std::nullopt;
    const auto r = rank_of(it->second.codes, canonical);
    if (!r) return std::nullopt;
    return it->second.values[*r];
  }

  auto operator()(StateCode canonical) const { return value(canonical); }

  struct Entry {
    std::vector<StateCode> codes;
    std::vector<double> values;
  };
  const std::map<std::uint64_t, Entry>& ages() const { return ages_; }

 private:
  std::map<std::uint64_t, Entry> ages_;
};

/// Full in-memory solve: forward then backward, for geometries that fit in RAM.
struct InMemorySolve {
  ForwardSummary summary;
  std::map<std::uint64_t, std::vector<StateCode>> partitions;
  SolvedTable table;
};

inline InMemorySolve solve_in_memory(const SolveConfig& config, std::ostream* log = nullptr) {
  InMemorySolve out;
  out.summary = forward_pass(
      config, [&](const AgePartition& p, std::uint64_t) { out.partitions[p.age] = p.codes; }, log);
  std::uint64_t top = 0;
  for (const auto& [age, codes] : out.partitions)
    if (!codes.empty()) top = age;
  if (top == 0) return out;
  auto loader = [&](std::uint64_t age) {
    const auto it = out.partitions.find(age);
    return it == out.partitions.end() ? std::vector<StateCode>{} : it->second;
  };
  backward_pass(config, loader, BackwardStart{top, std::nullopt, {}},
                [&](const AgePartition& p, std::span<const double> v) { out.table.insert(p, v); },
                log);
  return out;
}

/// Expected score over the initial-state distribution under optimal play.
template <class ValueOf>
double expected_initial_score(const Geometry& geo, ValueOf&& value_of) {
  double total = 0.0;
  for (const auto& init : geo.initial_states())
    total += init.probability * best_action(geo, init.state, value_of).state_value;
  return total;
}

}  // namespace agesolver
