#pragma once

// Stage drivers. Warmup fits the stubs on single static frames; pretrain and
// main fit only the propagation module on 3-frame clips in which the first
// frame enters memory with its ground truth, the middle frame with its own
// freshly predicted soft mask, and the last frame is supervised.

#include <filesystem>
#include <functional>
#include <set>
#include <string>
#include <vector>

#include "sampm/config.hpp"
#include "sampm/optim.hpp"
#include "sampm/params.hpp"
#include "sampm/rng.hpp"
#include "sampm/synth.hpp"

namespace sampm::train {

enum class Stage { kWarmup, kPretrain, kMain };

const char* stage_name(Stage s);
Stage parse_stage(const std::string& name);

// Deterministic data sets derived from cfg.data_seed.
std::vector<synth::StaticSample> warmup_statics(const RunConfig& cfg);
std::vector<synth::StaticSample> pretrain_statics(const RunConfig& cfg);
std::vector<synth::SequenceSample> training_sequences(const RunConfig& cfg);
std::vector<synth::SequenceSample> heldout_sequences(const RunConfig& cfg);

struct TrainData {
  std::vector<synth::StaticSample> statics;
  std::vector<synth::SequenceSample> sequences;
};

/// Data a stage draws from: statics for warmup and pretrain, sequences for main.
TrainData stage_data(const RunConfig& cfg, Stage stage);

/// Stub parameters initialised from cfg.seed, trainable.
ParamStore init_stub_params(const RunConfig& cfg);

struct TrainState {
  Stage stage = Stage::kWarmup;
  ParamStore params;
  optim::AdamW opt;
  std::size_t iteration = 0;
  Rng rng;

  /// Writes params/, optimizer/ and state.txt under `dir`.
  void save(const std::filesystem::path& dir) const;
  static TrainState load(const std::filesystem::path& dir, const RunConfig& cfg);
};

/// Sets the stage's frozen flags (stubs trainable only in warmup), creates the
/// module parameters on entering pretrain when absent, and resets the
/// optimizer, iteration counter and sampling stream.
TrainState begin_stage(const RunConfig& cfg, Stage stage, ParamStore params);

struct StepResult {
  std::size_t iteration = 0;
  double lr = 0.0;
  double loss = 0.0;
  double grad_norm = 0.0;
};

struct StageMonitor {
  std::vector<double> losses;
  std::vector<double> lrs;
  /// Trainable parameters whose gradient was nonzero in at least one step.
  std::set<std::string> nonzero_grad;
};

/// One optimizer step on a batch. Throws NumericError naming the iteration
/// when the loss or a gradient is not finite.
StepResult train_step(const RunConfig& cfg, TrainState& state, const TrainData& data, StageMonitor* monitor = nullptr);

/// Steps until the stage's scaled iteration count is reached.
StageMonitor run_stage(const RunConfig& cfg, TrainState& state, const TrainData& data,
                       const std::function<void(const StepResult&)>& on_step = {});

/// Stage settings after applying the iteration multiplier.
StageSettings stage_settings(const RunConfig& cfg, Stage stage);

}  // namespace sampm::train
