#include "sampm/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace sampm::ad {

namespace {

double evaluate(const ScalarFn& f, std::span<const Tensor> inputs) {
  Tape tape;
  std::vector<Var> vars;
  vars.reserve(inputs.size());
  for (const Tensor& t : inputs) vars.push_back(tape.constant(t));
  Var out = f(tape, vars);
  if (out.numel() != 1) throw DimensionError("gradcheck: function must be scalar-valued, got " + shape_str(out.shape()));
  return out.value()[0];
}

}  // namespace

GradcheckReport gradcheck(const ScalarFn& f, std::span<const Tensor> inputs, const GradcheckOptions& opts) {
  if (!(opts.eps >= 1e-7 && opts.eps <= 1e-3)) throw std::invalid_argument("gradcheck: eps must lie in [1e-7, 1e-3]");

  std::vector<Tensor> analytic;
  {
    Tape tape;
    std::vector<Var> vars;
    for (const Tensor& t : inputs) vars.push_back(tape.leaf(t, true));
    Var out = f(tape, vars);
    if (out.numel() != 1) throw DimensionError("gradcheck: function must be scalar-valued, got " + shape_str(out.shape()));
    tape.backward(out);
    for (const Var& v : vars) analytic.push_back(v.grad());
  }

  GradcheckReport report;
  std::vector<Tensor> probe(inputs.begin(), inputs.end());
  for (std::size_t k = 0; k < probe.size(); ++k) {
    for (std::size_t i = 0; i < probe[k].numel(); ++i) {
      const double saved = probe[k][i];
      probe[k][i] = saved + opts.eps;
      const double plus = evaluate(f, probe);
      probe[k][i] = saved - opts.eps;
      const double minus = evaluate(f, probe);
      probe[k][i] = saved;
      const double numeric = (plus - minus) / (2.0 * opts.eps);
      const double a = analytic[k][i];
      const double denom = std::max({std::abs(a), std::abs(numeric), opts.denom_floor});
      const double err = std::abs(a - numeric) / denom;
      if (err > report.max_rel_error || report.elements_checked == 0) {
        report.max_rel_error = err;
        report.worst_input = k;
        report.worst_element = i;
        report.worst_analytic = a;
        report.worst_numeric = numeric;
      }
      ++report.elements_checked;
    }
  }
  report.passed = report.max_rel_error <= opts.tol;
  return report;
}

std::string describe(const GradcheckReport& r) {
  std::ostringstream os;
  os << (r.passed ? "ok" : "FAILED") << " max_rel_err=" << r.max_rel_error << " (input " << r.worst_input << "["
     << r.worst_element << "] analytic=" << r.worst_analytic << " numeric=" << r.worst_numeric << ", "
     << r.elements_checked << " elements)";
  return os.str();
}

}  // namespace sampm::ad
