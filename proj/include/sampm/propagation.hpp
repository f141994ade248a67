#pragma once

// Trainable propagation module: a temporal fusion cross-attention (TFMM) that
// reads memory mask embeddings with current-frame queries, followed by a
// memory prior affinity readout (MPAM) that produces the dense embedding fed
// to the mask decoder.

#include <cstddef>

#include "sampm/autodiff.hpp"
#include "sampm/memory_bank.hpp"
#include "sampm/params.hpp"

namespace sampm::pm {

inline constexpr const char* kPrefix = "pm.";

struct PropagationConfig {
  std::size_t embed_dim = 64;
  std::size_t grid = 4;  // token grid side (h = w)
  std::size_t attn_dim = 64;
  std::size_t affinity_dim = 128;
  std::size_t mlp_ratio = 2;
  /// false: dense embedding = MLP(LN(current ⊕ TFMM output)), no affinity readout.
  bool use_mpam = true;
  /// false: positional tables and gates are zero and frozen.
  bool use_positional = true;
  /// Memory keys of the affinity readout concatenate image and mask embeddings.
  bool key_with_mask = true;
  /// Key projections start as copies of the query projections, so initial
  /// attention already prefers memory tokens whose content matches the query.
  bool tie_key_init = true;
  double pe_gate_init = 0.1;
  double pe_std = 10.0;
  ad::Activation act = ad::Activation::kGelu;
  double ln_eps = 1e-5;

  std::size_t tokens() const { return grid * grid; }
};

void init_params(ParamStore& store, const PropagationConfig& cfg, Rng& rng);

/// Exact scalar count of everything registered under "pm.".
std::size_t count_parameters(const ParamStore& store);

struct TfmmResult {
  ad::Var output;     // (d, h, w)
  ad::Var attention;  // (h*w, t*h*w), rows sum to 1
  ad::Var readout;    // (h*w, attn_dim), attention-weighted values before the MLP
};

struct MpamResult {
  ad::Var dense;     // (d, h, w)
  ad::Var affinity;  // (h*w, t*h*w); invalid when use_mpam is false
};

/// cur_img: (d,h,w); mem_imgs, mem_masks: (t,d,h,w), oldest first.
TfmmResult tfmm_forward(const Bound& p, const PropagationConfig& cfg, ad::Var cur_img, ad::Var mem_imgs,
                        ad::Var mem_masks);

MpamResult mpam_forward(const Bound& p, const PropagationConfig& cfg, ad::Var cur_img, ad::Var tfmm_output,
                        ad::Var mem_imgs, ad::Var mem_masks);

/// TFMM followed by MPAM over the bank's records.
ad::Var pm_forward(const Bound& p, const PropagationConfig& cfg, ad::Var cur_img, const memory::VarBank& bank);
Tensor pm_forward(const ParamStore& store, const PropagationConfig& cfg, const Tensor& cur_img,
                  const memory::TensorBank& bank);

}  // namespace sampm::pm
