#pragma once

// Semi-supervised propagation over one sequence: the first frame and its
// ground-truth mask seed the memory, every later frame is encoded once,
// propagated, decoded, and pushed back with its predicted soft mask.

#include <span>
#include <vector>

#include "sampm/metrics.hpp"
#include "sampm/propagation.hpp"
#include "sampm/sam_stubs.hpp"

namespace sampm::infer {

struct InferenceStats {
  std::size_t image_encoder_calls = 0;
  std::size_t mask_encoder_calls = 0;
  std::size_t decoder_calls = 0;
  std::size_t max_memory_length = 0;
};

struct InferenceResult {
  std::vector<stubs::MaskPrediction> predictions;  // frames 1 .. T-1
  InferenceStats stats;
};

/// Throws std::invalid_argument for fewer than two frames or a first mask of the wrong shape.
InferenceResult infer_sequence(const ParamStore& params, const stubs::EncoderConfig& enc,
                               const pm::PropagationConfig& pmc, std::span<const Tensor> frames,
                               const Tensor& first_gt, std::size_t memory_length);

/// sigmoid(logits).
Tensor soft_mask(const stubs::MaskPrediction& p);

/// Scores frames 1 .. T-1 with the soft masks quantised to 8 bits, which is
/// what a written prediction file holds.
metrics::MetricReport evaluate(const InferenceResult& r, std::span<const Tensor> gts);

}  // namespace sampm::infer
