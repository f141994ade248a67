#include "sampm/nn.hpp"

namespace sampm::nn {

void add_linear(ParamStore& store, const std::string& name, std::size_t din, std::size_t dout, Rng& rng) {
  store.add(name + ".w", init_weight(din, dout, rng));
  store.add(name + ".b", Tensor({dout}, 0.0));
}

void add_layer_norm(ParamStore& store, const std::string& name, std::size_t d) {
  store.add(name + ".gain", Tensor({d}, 1.0));
  store.add(name + ".bias", Tensor({d}, 0.0));
}

void add_mlp(ParamStore& store, const std::string& name, std::size_t din, std::size_t hidden, std::size_t dout, Rng& rng) {
  add_linear(store, name + ".fc1", din, hidden, rng);
  add_linear(store, name + ".fc2", hidden, dout, rng);
}

void add_mixer_block(ParamStore& store, const std::string& name, std::size_t tokens, std::size_t d, Rng& rng) {
  add_layer_norm(store, name + ".norm1", d);
  add_mlp(store, name + ".token_mlp", tokens, 2 * tokens, tokens, rng);
  add_layer_norm(store, name + ".norm2", d);
  add_mlp(store, name + ".channel_mlp", d, 2 * d, d, rng);
}

ad::Var linear(const Bound& p, const std::string& name, ad::Var x) {
  return ad::linear(x, p[name + ".w"], p[name + ".b"]);
}

ad::Var layer_norm(const Bound& p, const std::string& name, ad::Var x, double eps) {
  return ad::layer_norm(x, p[name + ".gain"], p[name + ".bias"], eps);
}

ad::Var mlp(const Bound& p, const std::string& name, ad::Var x, ad::Activation act) {
  return linear(p, name + ".fc2", ad::activation(linear(p, name + ".fc1", x), act));
}

ad::Var mixer_block(const Bound& p, const std::string& name, ad::Var tokens, ad::Activation act, double eps) {
  ad::Var mixed = ad::transpose(mlp(p, name + ".token_mlp", ad::transpose(layer_norm(p, name + ".norm1", tokens, eps)), act));
  ad::Var x = ad::add(tokens, mixed);
  return ad::add(x, mlp(p, name + ".channel_mlp", layer_norm(p, name + ".norm2", x, eps), act));
}

ad::Var to_tokens(ad::Var grid) {
  const Shape& s = grid.shape();
  if (s.size() != 3) throw DimensionError("to_tokens: expected (d,h,w), got " + shape_str(s));
  return ad::transpose(ad::reshape(grid, {s[0], s[1] * s[2]}));
}

ad::Var from_tokens(ad::Var tokens, std::size_t h, std::size_t w) {
  const Shape& s = tokens.shape();
  if (s.size() != 2 || s[0] != h * w) {
    throw DimensionError("from_tokens: " + shape_str(s) + " is not a " + std::to_string(h) + "x" + std::to_string(w) + " grid");
  }
  return ad::reshape(ad::transpose(tokens), {s[1], h, w});
}

}  // namespace sampm::nn
