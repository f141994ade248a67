#include "sampm/optim.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

namespace sampm::optim {

namespace fs = std::filesystem;

AdamW::AdamW(const ParamStore& params, AdamWConfig cfg) : cfg_(cfg) {
  for (const auto& [name, e] : params.entries()) {
    if (e.frozen) continue;
    m_.add(name, Tensor(e.value.shape(), 0.0));
    v_.add(name, Tensor(e.value.shape(), 0.0));
  }
}

void AdamW::step(ParamStore& params, const ParamStore& grads, double lr) {
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (const auto& [name, mom] : m_.entries()) {
    if (params.frozen(name)) throw std::logic_error("optimizer holds moments for frozen parameter " + name);
    Tensor& p = params.get(name);
    const Tensor& g = grads.get(name);
    Tensor& m = m_.get(name);
    Tensor& v = v_.get(name);
    for (std::size_t i = 0; i < p.numel(); ++i) {
      p[i] *= 1.0 - lr * cfg_.weight_decay;
      m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g[i];
      v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
      p[i] -= lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + cfg_.eps);
    }
  }
}

void AdamW::save(const fs::path& dir) const {
  save_params(dir / "m", m_);
  save_params(dir / "v", v_);
  std::ofstream out(dir / "steps.txt");
  out << t_ << '\n';
  if (!out) throw std::runtime_error("cannot write optimizer state to " + dir.string());
}

AdamW AdamW::load(const fs::path& dir, AdamWConfig cfg) {
  AdamW a;
  a.cfg_ = cfg;
  a.m_ = load_params(dir / "m");
  a.v_ = load_params(dir / "v");
  std::ifstream in(dir / "steps.txt");
  if (!(in >> a.t_)) throw FormatError("missing optimizer step count in " + dir.string());
  return a;
}

double multistep_lr(double base, const std::vector<std::size_t>& milestones, std::size_t iteration, double gamma) {
  double lr = base;
  for (std::size_t m : milestones)
    if (iteration >= m) lr *= gamma;
  return lr;
}

double clip_global_norm(ParamStore& grads, double max_norm) {
  double sq = 0.0;
  for (const auto& [name, e] : grads.entries())
    for (double g : e.value.data()) sq += g * g;
  const double norm = std::sqrt(sq);
  if (max_norm > 0 && norm > max_norm) {
    const double s = max_norm / norm;
    for (const std::string& name : grads.names())
      for (double& g : grads.get(name).data()) g *= s;
  }
  return norm;
}

}  // namespace sampm::optim
