#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <map>

#include "agesolver/oracle.hpp"
#include "agesolver/solver.hpp"

using namespace agesolver;

namespace {

std::map<std::uint64_t, std::vector<StateCode>> forward_partitions(const SolveConfig& cfg) {
  std::map<std::uint64_t, std::vector<StateCode>> out;
  forward_pass(cfg, [&](const AgePartition& p, std::uint64_t) { out[p.age] = p.codes; });
  return out;
}

void expect_matches_oracle(const Geometry& geo, Variant v) {
  const auto truth = oracle::solve_exhaustive(geo, v);
  const auto solved = solve_in_memory(SolveConfig{geo, std::nullopt, v});
  EXPECT_EQ(solved.summary.total_states, truth.reachable_states());
  EXPECT_EQ(solved.summary.total_afterstates, truth.reachable_afterstates());
  std::size_t seen = 0;
  for (const auto& [age, entry] : solved.table.ages()) {
    for (std::size_t i = 0; i < entry.codes.size(); ++i) {
      const auto it = truth.afterstate_values.find(entry.codes[i].packed);
      ASSERT_NE(it, truth.afterstate_values.end()) << geo.format(entry.codes[i]);
      ASSERT_NEAR(entry.values[i], it->second, 1e-9) << geo.format(entry.codes[i]);
      ++seen;
    }
  }
  EXPECT_EQ(seen, truth.reachable_afterstates());
  // State values through best_action agree as well.
  for (const auto& [code, value] : truth.state_values)
    ASSERT_NEAR(best_action(geo, StateCode{code}, solved.table).state_value, value, 1e-9);
}

}  // namespace

TEST(OracleEquivalence, TwoByTwo) {
  for (auto v : {Variant::standard, Variant::optimistic, Variant::pessimistic})
    expect_matches_oracle(Geometry(2, 2), v);
}

TEST(OracleEquivalence, ThreeByTwo) {
  for (auto v : {Variant::standard, Variant::optimistic, Variant::pessimistic})
    expect_matches_oracle(Geometry(3, 2), v);
}

TEST(OracleEquivalence, FourByTwo) { expect_matches_oracle(Geometry(4, 2), Variant::standard); }

TEST(Forward, ReachableSetsMatchBreadthFirstClosure) {
  const Geometry geo(4, 3);
  const std::uint64_t cap = 48;
  const auto reach = oracle::enumerate_reachable(geo, cap);
  SolveConfig cfg{geo, cap};
  std::map<std::uint64_t, std::vector<StateCode>> after;
  std::map<std::uint64_t, std::uint64_t> states;
  const auto summary = forward_pass(cfg, [&](const AgePartition& p, std::uint64_t n) {
    after[p.age] = p.codes;
    states[p.age] = n;
  });
  EXPECT_FALSE(summary.complete);
  for (std::uint64_t age = 4; age <= cap; age += 2) {
    ASSERT_EQ(after[age], reach.afterstates.count(age) ? reach.afterstates.at(age)
                                                       : std::vector<StateCode>{})
        << "age " << age;
    ASSERT_EQ(states[age], reach.states.count(age) ? reach.states.at(age).size() : 0u);
  }
}

TEST(Forward, SymmetricAfterstatesCollapse) {
  // Both valid actions of this state lead to mirror images of each other.
  const Geometry geo(2, 2);
  const StateCode s = geo.parse_board("2 . / . .");
  EXPECT_EQ(geo.valid_actions(s).size(), 2);
  const auto out = expand_afterstates(geo, StateLayer{2, {geo.canonicalize(s)}});
  EXPECT_EQ(out.codes.size(), 1u);
}

TEST(Forward, ResumeMatchesUninterruptedRun) {
  const Geometry geo(3, 3);
  SolveConfig full{geo, 200};
  const auto reference = forward_partitions(full);

  SolveConfig head{geo, 100};
  const auto first = forward_partitions(head);
  const auto cursor = resume_cursor(geo, 100, first.at(100), first.at(98));
  std::map<std::uint64_t, std::vector<StateCode>> rest;
  forward_pass(full, [&](const AgePartition& p, std::uint64_t) { rest[p.age] = p.codes; }, nullptr,
               cursor);
  for (const auto& [age, codes] : reference) {
    if (age <= 100)
      ASSERT_EQ(first.at(age), codes);
    else
      ASSERT_EQ(rest.at(age), codes) << age;
  }
}

TEST(Forward, WorkerCountDoesNotChangePartitions) {
  const Geometry geo(4, 3);
  SolveConfig one{geo, 60, Variant::standard, 1};
  SolveConfig many{geo, 60, Variant::standard, 8};
  EXPECT_EQ(forward_partitions(one), forward_partitions(many));
}

TEST(Backward, WorkerCountDoesNotChangeValues) {
  const Geometry geo(4, 2);
  const auto a = solve_in_memory(SolveConfig{geo, std::nullopt, Variant::standard, 1});
  const auto b = solve_in_memory(SolveConfig{geo, std::nullopt, Variant::standard, 8});
  ASSERT_EQ(a.table.ages().size(), b.table.ages().size());
  for (const auto& [age, entry] : a.table.ages()) {
    const auto& other = b.table.ages().at(age);
    ASSERT_EQ(entry.codes, other.codes);
    for (std::size_t i = 0; i < entry.values.size(); ++i)
      ASSERT_EQ(std::memcmp(&entry.values[i], &other.values[i], sizeof(double)), 0);
  }
}

TEST(Backward, HighestAgeHasZeroValues) {
  const auto solved = solve_in_memory(SolveConfig{Geometry(2, 2), std::nullopt});
  const auto& top = solved.table.ages().rbegin()->second;
  ASSERT_FALSE(top.values.empty());
  for (double v : top.values) EXPECT_EQ(v, 0.0);
}

TEST(Backward, VariantsAreOrdered) {
  const Geometry geo(3, 2);
  const auto lo = solve_in_memory(SolveConfig{geo, std::nullopt, Variant::pessimistic});
  const auto mid = solve_in_memory(SolveConfig{geo, std::nullopt, Variant::standard});
  const auto hi = solve_in_memory(SolveConfig{geo, std::nullopt, Variant::optimistic});
  for (const auto& [age, entry] : mid.table.ages())
    for (std::size_t i = 0; i < entry.values.size(); ++i) {
      EXPECT_LE(lo.table.ages().at(age).values[i], entry.values[i] + 1e-9);
      EXPECT_LE(entry.values[i], hi.table.ages().at(age).values[i] + 1e-9);
    }
}

TEST(BestAction, SymmetricStatesHaveEqualValues) {
  const auto small = solve_in_memory(SolveConfig{Geometry(3, 2), std::nullopt});
  const Geometry g(3, 2);
  for (const auto& init : g.initial_states()) {
    const double v = best_action(g, init.state, small.table).state_value;
    for (const StateCode o : g.orbit(init.state))
      EXPECT_DOUBLE_EQ(best_action(g, o, small.table).state_value, v);
  }
}

TEST(BestAction, TiesGoToEarliestDirection) {
  const Geometry geo(2, 2);
  const auto solved = solve_in_memory(SolveConfig{geo, std::nullopt});
  // All four afterstates are images of one another, hence equal q.
  const auto choice = best_action(geo, geo.parse_board("2 . / . 2"), solved.table);
  ASSERT_EQ(choice.actions.size(), 4u);
  for (const auto& a : choice.actions) EXPECT_EQ(a.q, choice.actions[0].q);
  EXPECT_EQ(choice.best, Direction::left);
}

TEST(BestAction, MissingAfterstateIsNotFound) {
  const Geometry geo(2, 2);
  SolvedTable empty;
  EXPECT_THROW(best_action(geo, geo.parse_board("2 . / . ."), empty), NotFoundError);
  EXPECT_FALSE(best_action(geo, geo.parse_board("2 4 / 4 2"), empty).best.has_value());
}

TEST(Counts, ThreeByTwoTotals) {
  const auto truth = oracle::solve_exhaustive(Geometry(3, 2));
  const auto s = forward_partitions(SolveConfig{Geometry(3, 2), std::nullopt});
  std::size_t total = 0;
  for (const auto& [age, codes] : s) total += codes.size();
  EXPECT_EQ(total, truth.reachable_afterstates());
}

TEST(BestAction, ExpectedInitialScoreMatchesOracle) {
  const Geometry geo(3, 2);
  const auto truth = oracle::solve_exhaustive(geo);
  const auto solved = solve_in_memory(SolveConfig{geo, std::nullopt});
  double ours = 0, theirs = 0;
  for (const auto& init : geo.initial_states()) {
    ours += init.probability * best_action(geo, init.state, solved.table).state_value;
    theirs += init.probability * truth.state_values.at(geo.canonicalize(init.state).packed);
  }
  EXPECT_NEAR(ours, theirs, 1e-9);
  EXPECT_GT(ours, 0.0);
}
