#pragma once

// Small layer helpers shared by the stubs and the propagation module.
// Parameters live in a ParamStore under dotted names; the forward helpers
// look them up in a Bound view of the same store.

#include <string>

#include "sampm/autodiff.hpp"
#include "sampm/params.hpp"

namespace sampm::nn {

void add_linear(ParamStore& store, const std::string& name, std::size_t din, std::size_t dout, Rng& rng);
void add_layer_norm(ParamStore& store, const std::string& name, std::size_t d);
/// din -> hidden -> dout with one activation in between.
void add_mlp(ParamStore& store, const std::string& name, std::size_t din, std::size_t hidden, std::size_t dout, Rng& rng);
/// Token-mixing MLP over `tokens` positions followed by a channel MLP, both residual and pre-normalised.
void add_mixer_block(ParamStore& store, const std::string& name, std::size_t tokens, std::size_t d, Rng& rng);

ad::Var linear(const Bound& p, const std::string& name, ad::Var x);
ad::Var layer_norm(const Bound& p, const std::string& name, ad::Var x, double eps = 1e-5);
ad::Var mlp(const Bound& p, const std::string& name, ad::Var x, ad::Activation act);
ad::Var mixer_block(const Bound& p, const std::string& name, ad::Var tokens, ad::Activation act, double eps = 1e-5);

/// (d, h, w) channel-first grid -> (h*w, d) token rows.
ad::Var to_tokens(ad::Var grid);
/// (h*w, d) token rows -> (d, h, w).
ad::Var from_tokens(ad::Var tokens, std::size_t h, std::size_t w);

}  // namespace sampm::nn
