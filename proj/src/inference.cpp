#include "sampm/inference.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "sampm/memory_bank.hpp"
#include "sampm/netpbm.hpp"

namespace sampm::infer {

InferenceResult infer_sequence(const ParamStore& params, const stubs::EncoderConfig& enc,
                               const pm::PropagationConfig& pmc, std::span<const Tensor> frames,
                               const Tensor& first_gt, std::size_t memory_length) {
  if (frames.size() < 2) throw std::invalid_argument("inference needs at least two frames");
  if (first_gt.shape() != Shape{enc.image_size, enc.image_size}) {
    throw std::invalid_argument("first ground-truth mask has shape " + shape_str(first_gt.shape()));
  }
  const stubs::CallCounts before = stubs::call_counts();
  InferenceResult r;
  memory::TensorBank bank(memory_length);
  bank.push({0, stubs::image_encode(params, enc, frames[0]), stubs::mask_encode(params, enc, first_gt)});
  r.stats.max_memory_length = bank.size();
  for (std::size_t t = 1; t < frames.size(); ++t) {
    Tensor img = stubs::image_encode(params, enc, frames[t]);
    const Tensor dense = pm::pm_forward(params, pmc, img, bank);
    stubs::MaskPrediction pred = stubs::decode(params, enc, img, dense);
    bank.push({t, std::move(img), stubs::mask_encode(params, enc, soft_mask(pred))});
    r.stats.max_memory_length = std::max(r.stats.max_memory_length, bank.size());
    r.predictions.push_back(std::move(pred));
  }
  const stubs::CallCounts& after = stubs::call_counts();
  r.stats.image_encoder_calls = after.image_encode - before.image_encode;
  r.stats.mask_encoder_calls = after.mask_encode - before.mask_encode;
  r.stats.decoder_calls = after.decode - before.decode;
  return r;
}

Tensor soft_mask(const stubs::MaskPrediction& p) {
  Tensor out(p.logits.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) {
    const double z = p.logits[i];
    out[i] = z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
  }
  return out;
}

metrics::MetricReport evaluate(const InferenceResult& r, std::span<const Tensor> gts) {
  if (gts.size() != r.predictions.size() + 1) {
    throw std::invalid_argument("evaluate: " + std::to_string(gts.size()) + " masks for " +
                                std::to_string(r.predictions.size()) + " predictions");
  }
  std::vector<Tensor> preds{gts[0]};
  for (const auto& p : r.predictions) preds.push_back(io::quantize8(soft_mask(p)));
  return metrics::evaluate_sequence(preds, gts, true);
}

}  // namespace sampm::infer
