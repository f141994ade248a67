#include <gtest/gtest.h>

#include <set>

#include "sampm/op_suite.hpp"

using namespace sampm;

TEST(OpSuite, CoversOpsAndComposedModules) {
  std::set<std::string> names;
  for (const auto& e : suite::entries()) names.insert(e.name);
  for (const char* want : {"matmul", "softmax_rows", "layer_norm", "linear", "concat", "add", "mul", "sigmoid", "gelu",
                           "scale", "tfmm_forward", "mpam_forward", "total_loss", "decode_total_loss"}) {
    EXPECT_TRUE(names.count(want)) << want;
  }
}

TEST(OpSuite, EveryEntryPassesOnFiveSeeds) {
  const auto results = suite::run(5);
  EXPECT_EQ(results.size(), suite::entries().size() * 5);
  for (const auto& r : results) {
    EXPECT_TRUE(r.report.passed) << r.name << " seed " << r.seed << ": " << ad::describe(r.report);
    EXPECT_LE(r.report.max_rel_error, 1e-4) << r.name;
  }
}
