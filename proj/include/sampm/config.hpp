#pragma once

// Run configuration: one `key = value` per line, `#` starts a comment.
// Every key has a default; unknown keys and unparsable values are errors.

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "sampm/augment.hpp"
#include "sampm/losses.hpp"
#include "sampm/propagation.hpp"
#include "sampm/sam_stubs.hpp"
#include "sampm/synth.hpp"

namespace sampm {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct StageSettings {
  double lr = 1e-3;
  std::size_t iterations = 0;
  std::vector<std::size_t> milestones;
};

struct RunConfig {
  std::uint64_t seed = 0;

  stubs::EncoderConfig encoder;
  pm::PropagationConfig pm;
  std::size_t memory_length = 2;
  std::size_t frames_per_sample = 3;
  std::size_t max_frame_gap = 2;
  /// Keep the gradient path through the second frame's predicted mask.
  bool memory_grad = true;

  synth::SynthConfig synth;
  std::uint64_t data_seed = 1000;
  std::size_t train_sequences = 8;
  std::size_t heldout_sequences = 4;
  std::size_t static_count = 512;
  double warmup_contrast = 0.9;

  std::size_t batch_size = 4;
  double weight_decay = 1e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double grad_clip = 1.0;  // <= 0 disables
  double iteration_multiplier = 0.1;

  StageSettings warmup{1e-3, 60000, {40000}};
  StageSettings pretrain{4e-4, 7600, {3800}};
  StageSettings main{5e-5, 2500, {}};

  /// Largest pseudo-video jitter as a fraction of the image size.
  double pretrain_jitter = 0.05;
  bool augment = true;
  augment::AugmentOps augment_ops = augment::AugmentOps::all();
  /// Warmup: probability of decoding without a mask prompt.
  double prompt_drop = 0.5;

  loss::LossOptions loss;

  /// Applies one `key=value` assignment.
  void set(const std::string& key, const std::string& value);
  /// Canonical text: every key in a fixed order with full-precision values.
  std::string to_text() const;
  /// FNV-1a of to_text(), as 16 hex digits.
  std::string hash() const;
  /// Throws ConfigError on inconsistent settings.
  void validate() const;

  /// Encoder settings with the token grid propagated into the module config.
  pm::PropagationConfig pm_config() const;
  /// Iterations and milestones scaled by iteration_multiplier (at least 1 iteration).
  StageSettings scaled(const StageSettings& s) const;

  static std::vector<std::string> keys();
};

/// Parses config text; `origin` names the source in error messages.
RunConfig parse_config(const std::string& text, const std::string& origin = "config");
RunConfig load_config(const std::filesystem::path& path);
/// Applies `--key=value` style overrides (the leading dashes are optional).
void apply_overrides(RunConfig& cfg, const std::vector<std::string>& overrides);

}  // namespace sampm
