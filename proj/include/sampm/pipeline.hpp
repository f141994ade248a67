#pragma once

// End-to-end orchestration shared by the command-line tool and the tests.
// Output directory layout:
//   checkpoints/<stage>/     training state after each stage
//   predictions/<id>/%05d.pgm
//   metrics.tsv, metrics_<split>.txt, run_stamp.txt

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "sampm/config.hpp"
#include "sampm/inference.hpp"
#include "sampm/metrics.hpp"
#include "sampm/training.hpp"

namespace sampm::pipeline {

using Log = std::function<void(const std::string&)>;

/// Writes seed, config hash and command to run_stamp.txt and the canonical
/// config to config.txt.
void write_run_stamp(const std::filesystem::path& out, const RunConfig& cfg, const std::string& command);

struct StageOutcome {
  ParamStore params;
  train::StageMonitor monitor;
  std::uint64_t stub_checksum_before = 0;
  std::uint64_t stub_checksum_after = 0;
};

/// Runs one stage from `params`; saves the final state under `checkpoint_dir` unless empty.
StageOutcome run_stage(const RunConfig& cfg, train::Stage stage, ParamStore params,
                       const std::filesystem::path& checkpoint_dir, const Log& log = {});

struct EvalOutcome {
  std::vector<metrics::NamedReport> rows;
  metrics::MetricReport mean;
  infer::InferenceStats worst;  // largest counts observed over all sequences
  bool one_encode_per_frame = true;
};

/// Propagates every sequence from its first ground-truth mask and scores it.
/// Writes prediction masks under `pred_dir` unless empty.
EvalOutcome infer_and_evaluate(const ParamStore& params, const RunConfig& cfg,
                               const std::vector<synth::SequenceSample>& seqs,
                               const std::filesystem::path& pred_dir = {});

/// Single-frame mDice of the stubs without a prompt on fresh statics at the warmup contrast.
double warmup_dice(const ParamStore& params, const RunConfig& cfg, std::size_t count = 64);

struct FullRun {
  ParamStore warmup_params;
  StageOutcome pretrain;
  StageOutcome main;
  EvalOutcome train;
  EvalOutcome heldout;
};

/// warmup -> pretrain -> main -> evaluation on training and held-out sequences.
/// A non-null `warmup` skips the warmup stage and starts from those parameters.
FullRun run_full(const RunConfig& cfg, const std::filesystem::path& out, const Log& log = {},
                 const ParamStore* warmup = nullptr);

void write_metrics(const std::filesystem::path& out, const FullRun& run);

}  // namespace sampm::pipeline
