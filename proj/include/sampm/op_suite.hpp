#pragma once

// Gradient-check suite: every differentiable op on its own and the composed
// module forwards, each reduced to a scalar through a fixed random projection.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "sampm/gradcheck.hpp"

namespace sampm::suite {

struct Case {
  ad::ScalarFn fn;
  std::vector<Tensor> inputs;
};

struct Entry {
  std::string name;
  std::function<Case(std::uint64_t seed)> build;
};

const std::vector<Entry>& entries();

struct Result {
  std::string name;
  std::uint64_t seed = 0;
  ad::GradcheckReport report;
};

/// Runs every entry whose name contains `filter` on seeds 1..seeds.
std::vector<Result> run(std::size_t seeds = 5, const ad::GradcheckOptions& opts = {}, const std::string& filter = {});

}  // namespace sampm::suite
