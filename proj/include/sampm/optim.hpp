#pragma once

#include <cstddef>
#include <filesystem>
#include <vector>

#include "sampm/params.hpp"

namespace sampm::optim {

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-2;
};

/// Decoupled weight decay Adam. Moments exist for every trainable entry of
/// the store it was created for; frozen entries are never touched.
class AdamW {
 public:
  AdamW() = default;
  AdamW(const ParamStore& params, AdamWConfig cfg);

  /// One update with learning rate `lr`. `grads` must hold an entry for every
  /// trainable parameter.
  void step(ParamStore& params, const ParamStore& grads, double lr);

  std::size_t steps() const { return t_; }
  const ParamStore& first_moment() const { return m_; }
  const ParamStore& second_moment() const { return v_; }

  void save(const std::filesystem::path& dir) const;
  static AdamW load(const std::filesystem::path& dir, AdamWConfig cfg);

 private:
  AdamWConfig cfg_;
  ParamStore m_, v_;
  std::size_t t_ = 0;
};

/// Learning rate `base * gamma^k` where k counts milestones <= iteration.
double multistep_lr(double base, const std::vector<std::size_t>& milestones, std::size_t iteration, double gamma = 0.5);

/// Scales every gradient so the global L2 norm is at most `max_norm` and
/// returns the norm before clipping. `max_norm <= 0` only measures.
double clip_global_norm(ParamStore& grads, double max_norm);

}  // namespace sampm::optim
