#pragma once

// Offline checks of a stored database: payload digests, closure of sampled
// ages under the move/spawn rules, Bellman consistency of stored values and,
// for tiny boards, a full diff against the brute-force oracle.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "agesolver/board.hpp"
#include "agesolver/error.hpp"
#include "agesolver/oracle.hpp"
#include "agesolver/solver.hpp"
#include "agesolver/store.hpp"

namespace agesolver {

struct VerifyOptions {
  std::size_t sample_ages = 6;  // ages checked for closure and value consistency
  bool against_oracle = false;
  int workers = 1;
};

struct VerifyReport {
  std::size_t files_checked = 0;
  std::vector<std::uint64_t> closure_ages;
  std::vector<std::uint64_t> value_ages;
  bool oracle_checked = false;
  double oracle_max_error = 0.0;
};

/// Evenly spread deterministic sample of `ages`, always including both ends.
inline std::vector<std::uint64_t> sample_ages(const std::vector<std::uint64_t>& ages,
                                              std::size_t count) {
  if (ages.size() <= count) return ages;
  std::vector<std::uint64_t> out;
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t k = count == 1 ? 0 : i * (ages.size() - 1) / (count - 1);
    if (out.empty() || out.back() != ages[k]) out.push_back(ages[k]);
  }
  return out;
}

namespace detail {

inline std::vector<StateCode> codes_or_empty(const Database& db, std::uint64_t age) {
  return age >= 4 ? db.codes(age) : std::vector<StateCode>{};
}

inline std::vector<double> values_or_empty(const Database& db, std::uint64_t age, Variant v) {
  if (age < 4 || !has_manifest(db.root(), db.geometry(), age)) return {};
  if (db.partition(age)->set.empty()) return {};
  return db.values(age, v)->dequantized();
}

}  // namespace detail

/// Re-reads every partition and value file from disk and checks its digest.
/// Returns the number of files checked; throws IntegrityError on mismatch.
inline std::size_t verify_digests(const Database& db) {
  std::size_t files = 0;
  for (const auto age : db.ages()) {
    const auto p = read_partition(db.root(), db.geometry(), age);
    files += 2;
    for (const auto& [name, info] : p.manifest.values) {
      read_values(db.root(), db.geometry(), age, parse_variant(name), p.manifest);
      ++files;
    }
  }
  return files;
}

/// The stored afterstates of `age` are exactly those produced by one action
/// from the state layer regenerated out of ages age-2 and age-4.
inline void verify_closure(const Database& db, std::uint64_t age, int workers = 1) {
  const Geometry& geo = db.geometry();
  const auto states = regenerate_states(geo, age, detail::codes_or_empty(db, age - 2),
                                        detail::codes_or_empty(db, age - 4), workers);
  const auto expected = expand_afterstates(geo, states, workers);
  if (expected.codes != db.codes(age))
    throw IntegrityError("age " + std::to_string(age) +
                         " is not closed under the game rules (expected " +
                         std::to_string(expected.codes.size()) + " afterstates)");
}

/// Recomputes the values of `age` from the stored values of ages age+2 and
/// age+4. Each stored value carries at most half a quantization step of
/// error, so the recomputation may differ by one step.
inline void verify_values(const Database& db, std::uint64_t age, Variant variant, int workers = 1) {
  const Geometry& geo = db.geometry();
  const AgePartition current{age, db.codes(age)};
  if (current.codes.empty()) return;
  const AgePartition plus2{age + 2, detail::codes_or_empty(db, age + 2)};
  const AgePartition plus4{age + 4, detail::codes_or_empty(db, age + 4)};
  const auto v2 = detail::values_or_empty(db, age + 2, variant);
  const auto v4 = detail::values_or_empty(db, age + 4, variant);
  const auto s2 = regenerate_states(geo, age + 2, current.codes,
                                    detail::codes_or_empty(db, age - 2), workers);
  const auto s4 = regenerate_states(geo, age + 4, plus2.codes, current.codes, workers);
  const auto sv2 = accumulate_action(geo, s2, plus2, v2, workers);
  const auto sv4 = accumulate_action(geo, s4, plus4, v4, workers);
  const auto recomputed = accumulate_spawn(geo, current, s2, sv2, s4, sv4, variant, workers);
  const auto stored = db.values(age, variant);
  const double tol = std::ldexp(1.0, -stored->scale()) * 1.001;
  for (std::size_t i = 0; i < recomputed.size(); ++i)
    if (std::abs(recomputed[i] - stored->value(i)) > tol)
      throw IntegrityError("value of " + geo.format(current.codes[i]) + " at age " +
                           std::to_string(age) + " is inconsistent with ages " +
                           std::to_string(age + 2) + "/" + std::to_string(age + 4));
}

/// Exact reachable-set equality and value agreement with the exhaustive oracle.
/// Returns the largest absolute value error over all variants stored.
inline double verify_against_oracle(const Database& db) {
  const Geometry& geo = db.geometry();
  const auto& index = db.index();
  if (!index.forward_complete || index.max_age_cap)
    throw UsageError("oracle comparison needs a complete, uncapped forward pass");

  const auto reach = oracle::solve_exhaustive(geo);
  if (reach.reachable_states() != index.total_states ||
      reach.reachable_afterstates() != index.total_afterstates)
    throw IntegrityError("reachable counts differ from the oracle: states " +
                         std::to_string(index.total_states) + " vs " +
                         std::to_string(reach.reachable_states()) + ", afterstates " +
                         std::to_string(index.total_afterstates) + " vs " +
                         std::to_string(reach.reachable_afterstates()));
  for (const auto& [code, value] : reach.afterstate_values)
    if (!db.rank(StateCode{code}))
      throw IntegrityError("oracle afterstate " + geo.format(StateCode{code}) +
                           " is missing from the database");

  double worst = 0.0;
  for (auto v : {Variant::standard, Variant::optimistic, Variant::pessimistic}) {
    if (!db.has_values(v)) continue;
    const auto truth = v == Variant::standard ? reach : oracle::solve_exhaustive(geo, v);
    const int scale = index.backward.at(std::string(to_string(v))).scale;
    const double tol = std::ldexp(1.0, -(scale + 1)) * 1.001;
    for (const auto& [code, value] : truth.afterstate_values) {
      const double stored = *db.value(StateCode{code}, v);
      const double err = std::abs(stored - value);
      if (err > tol)
        throw IntegrityError(std::string(to_string(v)) + " value of " +
                             geo.format(StateCode{code}) + " is " + std::to_string(stored) +
                             ", oracle says " + std::to_string(value));
      worst = std::max(worst, err);
    }
  }
  return worst;
}

inline VerifyReport verify_database(const Database& db, const VerifyOptions& opt,
                                    std::ostream* log = nullptr) {
  VerifyReport report;
  db.clear_cache();
  report.files_checked = verify_digests(db);
  if (log) *log << "digests ok files=" << report.files_checked << "\n";

  std::vector<std::uint64_t> nonempty;
  for (const auto& a : db.index().ages)
    if (a.afterstates > 0) nonempty.push_back(a.age);
  for (const auto age : sample_ages(nonempty, opt.sample_ages)) {
    verify_closure(db, age, opt.workers);
    report.closure_ages.push_back(age);
    if (log) *log << "closure ok age=" << age << "\n";
  }
  for (auto v : {Variant::standard, Variant::optimistic, Variant::pessimistic}) {
    if (!db.has_values(v)) continue;
    for (const auto age : sample_ages(nonempty, opt.sample_ages)) {
      verify_values(db, age, v, opt.workers);
      if (v == Variant::standard) report.value_ages.push_back(age);
      if (log) *log << "values ok variant=" << to_string(v) << " age=" << age << "\n";
    }
  }
  if (opt.against_oracle) {
    report.oracle_max_error = verify_against_oracle(db);
    report.oracle_checked = true;
    if (log) *log << "oracle ok max_error=" << report.oracle_max_error << "\n";
  }
  return report;
}

}  // namespace agesolver
