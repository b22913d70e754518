#include <gtest/gtest.h>

#include <fstream>
#include <map>
#include <sstream>

#include "agesolver/pipeline.hpp"
#include "agesolver/verify.hpp"
#include "test_util.hpp"

using namespace agesolver;
using agesolver::testing::TempDir;

namespace {

/// Relative path -> file contents for every file under `root`.
std::map<std::string, std::string> snapshot(const std::filesystem::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : std::filesystem::recursive_directory_iterator(root)) {
    if (!e.is_regular_file()) continue;
    std::ifstream in(e.path(), std::ios::binary);
    std::stringstream buf;
    buf << in.rdbuf();
    out[std::filesystem::relative(e.path(), root).string()] = buf.str();
  }
  return out;
}

}  // namespace

TEST(Pipeline, SolvesAndPassesOracleDiff) {
  TempDir dir("pipe");
  const Geometry geo(3, 2);
  const auto out = solve_to_disk(SolveOptions{geo, dir.path()});
  EXPECT_TRUE(out.index.forward_complete);
  EXPECT_TRUE(out.backward_ran);
  const Database db(dir.path(), geo);
  VerifyOptions opt;
  opt.sample_ages = 1000;
  opt.against_oracle = true;
  const auto report = verify_database(db, opt);
  EXPECT_TRUE(report.oracle_checked);
  EXPECT_LE(report.oracle_max_error, std::ldexp(1.0, -17));
  EXPECT_FALSE(report.closure_ages.empty());
}

TEST(Pipeline, AllVariantsShareOnePartitionSet) {
  TempDir dir("variants");
  const Geometry geo(2, 2);
  for (auto v : {Variant::standard, Variant::optimistic, Variant::pessimistic}) {
    SolveOptions opt{geo, dir.path()};
    opt.variant = v;
    solve_to_disk(opt);
  }
  const Database db(dir.path(), geo);
  for (auto v : {Variant::standard, Variant::optimistic, Variant::pessimistic})
    EXPECT_TRUE(db.has_values(v));
  VerifyOptions opt;
  opt.against_oracle = true;
  EXPECT_NO_THROW(verify_database(db, opt));
}

TEST(Pipeline, CappedForwardSkipsBackward) {
  TempDir dir("capped");
  SolveOptions opt{Geometry(4, 3), dir.path(), 40};
  const auto out = solve_to_disk(opt);
  EXPECT_FALSE(out.index.forward_complete);
  EXPECT_FALSE(out.backward_ran);
  EXPECT_EQ(out.index.last_age, 40u);
  EXPECT_THROW(run_backward(opt, out.index, nullptr), UsageError);
}

TEST(Pipeline, ForwardResumeIsBitwiseIdentical) {
  TempDir fresh("fresh"), resumed("resumed");
  const Geometry geo(4, 2);
  solve_to_disk(SolveOptions{geo, fresh.path()});

  SolveOptions opt{geo, resumed.path(), 30};
  solve_to_disk(opt);
  opt.max_age.reset();
  const auto out = solve_to_disk(opt);
  EXPECT_TRUE(out.forward_resumed);
  EXPECT_EQ(snapshot(fresh.path()), snapshot(resumed.path()));
}

TEST(Pipeline, BackwardResumeAgreesWithinOneStep) {
  TempDir fresh("bfresh"), resumed("bresumed");
  const Geometry geo(4, 2);
  solve_to_disk(SolveOptions{geo, fresh.path()});
  solve_to_disk(SolveOptions{geo, resumed.path()});

  // Pretend the backward pass stopped after writing age 40.
  auto index = *read_index(resumed.path(), geo);
  index.backward["standard"].complete = false;
  index.backward["standard"].lowest_age = 40;
  write_index(resumed.path(), geo, index);
  const auto out = solve_to_disk(SolveOptions{geo, resumed.path()});
  EXPECT_TRUE(out.backward_resumed);

  const Database a(fresh.path(), geo), b(resumed.path(), geo);
  for (const auto age : a.ages()) {
    const auto va = a.values(age, Variant::standard), vb = b.values(age, Variant::standard);
    ASSERT_EQ(va->size(), vb->size());
    for (std::size_t i = 0; i < va->size(); ++i)
      ASSERT_NEAR(va->value(i), vb->value(i), std::ldexp(1.0, -16)) << age;
  }
}

TEST(Verify, DetectsBrokenClosure) {
  TempDir dir("closure");
  const Geometry geo(3, 2);
  solve_to_disk(SolveOptions{geo, dir.path()});
  // Rewrite one partition without its last afterstate; digests stay consistent.
  auto codes = Database(dir.path(), geo).codes(14);
  ASSERT_GT(codes.size(), 1u);
  codes.pop_back();
  write_partition(dir.path(), geo, AgePartition{14, codes});
  const Database db(dir.path(), geo);
  EXPECT_NO_THROW(verify_digests(db));
  EXPECT_THROW(verify_closure(db, 14), IntegrityError);
}

TEST(Verify, DetectsInconsistentValues) {
  TempDir dir("bellman");
  const Geometry geo(3, 2);
  solve_to_disk(SolveOptions{geo, dir.path()});
  const Database before(dir.path(), geo);
  auto values = before.values(20, Variant::standard)->dequantized();
  values[0] += 1.0;
  write_values(dir.path(), geo, 20, Variant::standard, values);
  const Database db(dir.path(), geo);
  EXPECT_NO_THROW(verify_digests(db));
  EXPECT_THROW(verify_values(db, 20, Variant::standard), IntegrityError);
  EXPECT_NO_THROW(verify_values(db, 30, Variant::standard));
}
