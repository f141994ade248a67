#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "sampm/autodiff.hpp"

namespace sampm::ad {

/// Builds a one-element result from inputs bound on a fresh tape.
using ScalarFn = std::function<Var(Tape&, std::span<const Var>)>;

struct GradcheckReport {
  double max_rel_error = 0.0;
  std::size_t worst_input = 0;
  std::size_t worst_element = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t elements_checked = 0;
  bool passed = false;
};

struct GradcheckOptions {
  double eps = 1e-5;
  double tol = 1e-4;
  /// Denominator floor so that vanishing gradients are compared absolutely.
  double denom_floor = 1e-5;
};

/// Compares reverse-mode gradients of `f` against central differences for
/// every element of every input. Per element the error is
/// |analytic - numeric| / max(|analytic|, |numeric|, denom_floor).
/// Throws DimensionError if `f` is not scalar-valued and std::invalid_argument
/// if eps lies outside [1e-7, 1e-3].
GradcheckReport gradcheck(const ScalarFn& f, std::span<const Tensor> inputs, const GradcheckOptions& opts = {});

std::string describe(const GradcheckReport& report);

}  // namespace sampm::ad
