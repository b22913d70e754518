#pragma once

// Forward then backward sweep written straight to a database directory, with
// db.json updated after every age so an interrupted run can continue.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "agesolver/board.hpp"
#include "agesolver/error.hpp"
#include "agesolver/solver.hpp"
#include "agesolver/store.hpp"
#include "agesolver/verify.hpp"

namespace agesolver {

struct SolveOptions {
  Geometry geometry;
  std::filesystem::path db;
  std::optional<std::uint64_t> max_age;
  Variant variant = Variant::standard;
  int workers = 1;
  int value_scale = kDefaultValueScale;
  std::optional<int> value_bytes;
};

struct SolveOutcome {
  DbIndex index;
  bool forward_resumed = false;
  bool backward_resumed = false;
  bool backward_ran = false;
};

/// Forward sweep; resumes after the last age recorded in db.json.
inline DbIndex run_forward(const SolveOptions& opt, std::ostream* log, bool* resumed = nullptr) {
  const Geometry& geo = opt.geometry;
  DbIndex index;
  if (auto existing = read_index(opt.db, geo)) index = std::move(*existing);
  index.geometry = geo.name();
  if (resumed) *resumed = false;

  if (index.forward_complete) {
    if (log) *log << "forward pass already complete\n";
    return index;
  }
  if (opt.max_age && index.last_age >= *opt.max_age) {
    if (log) *log << "forward pass already reached age " << index.last_age << "\n";
    return index;
  }

  std::optional<ForwardCursor> cursor;
  if (index.last_age >= 4) {
    // Both partitions are digest-checked on load.
    const auto last = index.last_age;
    auto codes = [&](std::uint64_t age) {
      return age >= 4 ? decode_partition(geo, read_partition(opt.db, geo, age))
                      : std::vector<StateCode>{};
    };
    cursor = resume_cursor(geo, last, codes(last), codes(last - 2), opt.workers);
    if (log) *log << "resuming forward pass after age " << last << "\n";
    if (resumed) *resumed = true;
  }

  SolveConfig config{geo, opt.max_age, opt.variant, opt.workers};
  auto sink = [&](const AgePartition& p, std::uint64_t states) {
    write_partition(opt.db, geo, p, states);
    index.ages.push_back({p.age, states, p.codes.size()});
    index.last_age = p.age;
    index.total_states += states;
    index.total_afterstates += p.codes.size();
    if (!p.codes.empty()) index.top_age = p.age;
    write_index(opt.db, geo, index);
  };
  const ForwardSummary summary = forward_pass(config, sink, log, std::move(cursor));
  index.forward_complete = summary.complete;
  index.max_age_cap = summary.complete ? std::nullopt : opt.max_age;
  write_index(opt.db, geo, index);
  if (log)
    *log << "forward " << (summary.complete ? "complete" : "stopped at the age cap")
         << " total_states=" << index.total_states
         << " total_afterstates=" << index.total_afterstates << "\n";
  return index;
}

/// Backward sweep for one variant; resumes below the lowest age already written.
inline DbIndex run_backward(const SolveOptions& opt, DbIndex index, std::ostream* log,
                            bool* resumed = nullptr) {
  const Geometry& geo = opt.geometry;
  if (!index.forward_complete)
    throw UsageError("the backward pass needs a complete forward pass; rerun without --max-age");
  const std::string key(to_string(opt.variant));
  BackwardStatus& status = index.backward[key];
  if (resumed) *resumed = false;
  if (status.complete) {
    if (status.scale != opt.value_scale)
      throw UsageError(key + " values exist at scale " + std::to_string(status.scale) +
                       "; remove them to re-solve at scale " + std::to_string(opt.value_scale));
    if (log) *log << "backward pass (" << key << ") already complete\n";
    return index;
  }

  BackwardStart start{index.top_age, std::nullopt, {}};
  if (status.lowest_age > 0) {
    if (status.scale != opt.value_scale)
      throw UsageError("partial " + key + " values were written at scale " +
                       std::to_string(status.scale));
    start.resume_age = status.lowest_age;
    start.load_values = [&](std::uint64_t age) {
      return read_values(opt.db, geo, age, opt.variant, read_manifest(opt.db, geo, age))
          .dequantized();
    };
    if (log) *log << "resuming backward pass below age " << status.lowest_age << "\n";
    if (resumed) *resumed = true;
  }
  status.scale = opt.value_scale;

  // Ages above the top age hold no afterstates but still need (empty) value files.
  if (!start.resume_age)
    for (const auto& a : index.ages)
      if (a.age > index.top_age)
        write_values(opt.db, geo, a.age, opt.variant, {}, opt.value_scale, opt.value_bytes);

  SolveConfig config{geo, std::nullopt, opt.variant, opt.workers};
  auto loader = [&](std::uint64_t age) {
    return has_manifest(opt.db, geo, age) ? decode_partition(geo, read_partition(opt.db, geo, age))
                                          : std::vector<StateCode>{};
  };
  auto sink = [&](const AgePartition& p, std::span<const double> values) {
    write_values(opt.db, geo, p.age, opt.variant, values, opt.value_scale, opt.value_bytes);
    status.lowest_age = p.age;
    write_index(opt.db, geo, index);
  };
  backward_pass(config, loader, start, sink, log);
  status.complete = true;
  write_index(opt.db, geo, index);
  return index;
}

/// Forward, then backward when the forward pass is complete, then a digest check.
inline SolveOutcome solve_to_disk(const SolveOptions& opt, std::ostream* log = nullptr) {
  std::error_code ec;
  std::filesystem::create_directories(opt.db, ec);
  if (ec) throw IoError("cannot create " + opt.db.string() + ": " + ec.message());
  SolveOutcome out;
  out.index = run_forward(opt, log, &out.forward_resumed);
  if (out.index.forward_complete) {
    out.index = run_backward(opt, std::move(out.index), log, &out.backward_resumed);
    out.backward_ran = true;
  } else if (log) {
    *log << "backward pass skipped: forward pass capped at age " << *opt.max_age << "\n";
  }
  const Database db(opt.db, opt.geometry);
  const auto files = verify_digests(db);
  if (log) *log << "digests verified files=" << files << "\n";
  return out;
}

}  // namespace agesolver
