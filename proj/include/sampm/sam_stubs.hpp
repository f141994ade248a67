#pragma once

// Desk-scale stand-ins for the frozen segmentation foundation model: an image
// encoder, a mask (dense prompt) encoder and a mask decoder with an IoU head.
// They keep the dataflow contracts the propagation module depends on:
// embeddings live on a token grid `image_size / downscale` per side and the
// decoder maps (image embedding, dense embedding) back to full-resolution logits.

#include <cstddef>

#include "sampm/autodiff.hpp"
#include "sampm/params.hpp"

namespace sampm::stubs {

inline constexpr const char* kPrefix = "stub.";

struct EncoderConfig {
  std::size_t image_size = 64;
  std::size_t downscale = 16;
  std::size_t embed_dim = 64;
  /// Sub-token resolution of the mask encoder input and decoder head (per side).
  std::size_t mask_subgrid = 4;
  bool frozen = false;
  ad::Activation act = ad::Activation::kGelu;
  double ln_eps = 1e-5;

  std::size_t grid() const { return image_size / downscale; }
  std::size_t tokens() const { return grid() * grid(); }
  /// Throws std::invalid_argument on inconsistent sizes.
  void validate() const;
};

struct MaskPrediction {
  Tensor logits;  // (H, W), pre-sigmoid
  double iou_pred = 0.0;
};

struct DecodeOutput {
  ad::Var logits;    // (H, W)
  ad::Var iou_pred;  // (1), sigmoid output
};

/// Registers all stub parameters under "stub." with the config's frozen flag.
void init_params(ParamStore& store, const EncoderConfig& cfg, Rng& rng);

/// (3, H, W) frame -> (embed_dim, h, w).
ad::Var image_encode(const Bound& p, const EncoderConfig& cfg, ad::Var frame);
/// (H, W) soft mask -> (embed_dim, h, w).
ad::Var mask_encode(const Bound& p, const EncoderConfig& cfg, ad::Var mask);
/// Image and dense embedding on the same grid -> full-resolution logits and IoU estimate.
DecodeOutput decode(const Bound& p, const EncoderConfig& cfg, ad::Var image_emb, ad::Var dense_emb);

/// Per-thread count of forward calls into each stub, for instrumentation.
struct CallCounts {
  std::size_t image_encode = 0;
  std::size_t mask_encode = 0;
  std::size_t decode = 0;
};
CallCounts& call_counts();

// Gradient-free conveniences for inference.
Tensor image_encode(const ParamStore& store, const EncoderConfig& cfg, const Tensor& frame);
Tensor mask_encode(const ParamStore& store, const EncoderConfig& cfg, const Tensor& mask);
MaskPrediction decode(const ParamStore& store, const EncoderConfig& cfg, const Tensor& image_emb, const Tensor& dense_emb);

}  // namespace sampm::stubs
