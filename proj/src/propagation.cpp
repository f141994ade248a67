#include "sampm/propagation.hpp"

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "sampm/nn.hpp"

namespace sampm::pm {

namespace {

using ad::Var;

void check_inputs(const PropagationConfig& cfg, const Var& cur, const Var& mem_imgs, const Var& mem_masks) {
  const Shape grid{cfg.embed_dim, cfg.grid, cfg.grid};
  if (cur.shape() != grid) {
    throw DimensionError("current embedding " + shape_str(cur.shape()) + " is not " + shape_str(grid));
  }
  const Shape& mi = mem_imgs.shape();
  if (mi.size() != 4 || mi[0] == 0 || Shape(mi.begin() + 1, mi.end()) != grid) {
    throw DimensionError("memory image embeddings " + shape_str(mi) + " are not (t," + shape_str(grid).substr(1));
  }
  if (mem_masks.shape() != mi) {
    throw DimensionError("memory mask embeddings " + shape_str(mem_masks.shape()) + " do not match image embeddings " +
                         shape_str(mi));
  }
}

// (t, d, h, w) -> (t*h*w, d), frame-major token rows.
Var stacked_tokens(Var stacked) {
  const Shape& s = stacked.shape();
  const std::size_t t = s[0], d = s[1], n = s[2] * s[3];
  std::vector<std::size_t> index(t * n * d);
  for (std::size_t f = 0; f < t; ++f)
    for (std::size_t tok = 0; tok < n; ++tok)
      for (std::size_t c = 0; c < d; ++c) index[(f * n + tok) * d + c] = (f * d + c) * n + tok;
  return ad::gather(stacked, {t * n, d}, std::move(index));
}

Var repeat_rows(Var x, std::size_t times) {
  std::vector<Var> parts(times, x);
  return times == 1 ? x : ad::concat(parts, 0);
}

// gate * table as (h*w, d) token rows.
Var positional(const Bound& p, const std::string& name) {
  return ad::mul(p[name + ".gate"], nn::to_tokens(p[name + ".table"]));
}

Var attend(Var queries, Var keys, Var values, std::size_t dim, Var* weights) {
  Var logits = ad::scale(ad::matmul(queries, ad::transpose(keys)), 1.0 / std::sqrt(static_cast<double>(dim)));
  Var a = ad::softmax_rows(logits);
  if (weights) *weights = a;
  return ad::matmul(a, values);
}

void add_positional(ParamStore& store, const std::string& name, const PropagationConfig& cfg, Rng& rng) {
  if (cfg.use_positional) {
    store.add(name + ".table", randn({cfg.embed_dim, cfg.grid, cfg.grid}, cfg.pe_std, rng));
    store.add(name + ".gate", Tensor::scalar(cfg.pe_gate_init));
  } else {
    store.add(name + ".table", Tensor({cfg.embed_dim, cfg.grid, cfg.grid}, 0.0), true);
    store.add(name + ".gate", Tensor::scalar(0.0), true);
  }
}

}  // namespace

void init_params(ParamStore& store, const PropagationConfig& cfg, Rng& rng) {
  if (cfg.embed_dim == 0 || cfg.grid == 0 || cfg.attn_dim == 0 || cfg.affinity_dim == 0 || cfg.mlp_ratio == 0) {
    throw std::invalid_argument("propagation dimensions must be positive");
  }
  const std::size_t d = cfg.embed_dim, a = cfg.attn_dim, c = cfg.affinity_dim, r = cfg.mlp_ratio;

  add_positional(store, "pm.pe_tfmm", cfg, rng);
  nn::add_layer_norm(store, "pm.tfmm.q_norm", d);
  nn::add_layer_norm(store, "pm.tfmm.k_norm", d);
  nn::add_layer_norm(store, "pm.tfmm.v_norm", d);
  nn::add_linear(store, "pm.tfmm.q", d, a, rng);
  nn::add_linear(store, "pm.tfmm.k", d, a, rng);
  if (cfg.tie_key_init) store.get("pm.tfmm.k.w") = store.get("pm.tfmm.q.w");
  nn::add_linear(store, "pm.tfmm.v", d, a, rng);
  nn::add_mlp(store, "pm.tfmm.mlp", a, r * a, a, rng);
  nn::add_layer_norm(store, "pm.tfmm.out_norm", a);
  nn::add_linear(store, "pm.tfmm.out", a, d, rng);

  if (cfg.use_mpam) {
    const std::size_t kdim = cfg.key_with_mask ? 2 * d : d;
    add_positional(store, "pm.pe_mpam", cfg, rng);
    nn::add_layer_norm(store, "pm.mpam.q_norm", 2 * d);
    nn::add_layer_norm(store, "pm.mpam.k_norm", kdim);
    nn::add_linear(store, "pm.mpam.query_key", 2 * d, c, rng);
    nn::add_linear(store, "pm.mpam.query_value", 2 * d, c, rng);
    nn::add_linear(store, "pm.mpam.memory_key", kdim, c, rng);
    nn::add_linear(store, "pm.mpam.memory_value", kdim, c, rng);
    if (cfg.tie_key_init && kdim == 2 * d) store.get("pm.mpam.memory_key.w") = store.get("pm.mpam.query_key.w");
    nn::add_mlp(store, "pm.mpam.mlp", 2 * c, r * 2 * c, d, rng);
  } else {
    nn::add_layer_norm(store, "pm.fuse.norm", 2 * d);
    nn::add_mlp(store, "pm.fuse.mlp", 2 * d, r * 2 * d, d, rng);
  }
}

std::size_t count_parameters(const ParamStore& store) { return store.count(kPrefix); }

TfmmResult tfmm_forward(const Bound& p, const PropagationConfig& cfg, Var cur_img, Var mem_imgs, Var mem_masks) {
  check_inputs(cfg, cur_img, mem_imgs, mem_masks);
  const std::size_t t = mem_imgs.shape()[0];
  const double eps = cfg.ln_eps;

  Var pe = positional(p, "pm.pe_tfmm");
  Var q = nn::linear(p, "pm.tfmm.q", nn::layer_norm(p, "pm.tfmm.q_norm", ad::add(nn::to_tokens(cur_img), pe), eps));
  Var k = nn::linear(p, "pm.tfmm.k",
                     nn::layer_norm(p, "pm.tfmm.k_norm", ad::add(stacked_tokens(mem_imgs), repeat_rows(pe, t)), eps));
  Var v = nn::linear(p, "pm.tfmm.v", nn::layer_norm(p, "pm.tfmm.v_norm", stacked_tokens(mem_masks), eps));

  TfmmResult out;
  out.readout = attend(q, k, v, cfg.attn_dim, &out.attention);
  Var o = ad::add(out.readout, nn::mlp(p, "pm.tfmm.mlp", out.readout, cfg.act));
  o = nn::layer_norm(p, "pm.tfmm.out_norm", o, eps);
  out.output = nn::from_tokens(nn::linear(p, "pm.tfmm.out", o), cfg.grid, cfg.grid);
  return out;
}

MpamResult mpam_forward(const Bound& p, const PropagationConfig& cfg, Var cur_img, Var tfmm_output, Var mem_imgs,
                        Var mem_masks) {
  check_inputs(cfg, cur_img, mem_imgs, mem_masks);
  if (!tfmm_output.valid()) throw std::invalid_argument("mpam_forward: missing TFMM output");
  if (tfmm_output.shape() != cur_img.shape()) {
    throw DimensionError("TFMM output " + shape_str(tfmm_output.shape()) + " does not match " + shape_str(cur_img.shape()));
  }
  const double eps = cfg.ln_eps;
  MpamResult out;

  if (!cfg.use_mpam) {
    Var fused = ad::concat({nn::to_tokens(cur_img), nn::to_tokens(tfmm_output)}, 1);
    Var dense = nn::mlp(p, "pm.fuse.mlp", nn::layer_norm(p, "pm.fuse.norm", fused, eps), cfg.act);
    out.dense = nn::from_tokens(dense, cfg.grid, cfg.grid);
    return out;
  }

  const std::size_t t = mem_imgs.shape()[0];
  Var pe = positional(p, "pm.pe_mpam");
  Var q = nn::layer_norm(p, "pm.mpam.q_norm",
                         ad::concat({ad::add(nn::to_tokens(cur_img), pe), nn::to_tokens(tfmm_output)}, 1), eps);
  Var mem_keys = ad::add(stacked_tokens(mem_imgs), repeat_rows(pe, t));
  if (cfg.key_with_mask) mem_keys = ad::concat({mem_keys, stacked_tokens(mem_masks)}, 1);
  Var k = nn::layer_norm(p, "pm.mpam.k_norm", mem_keys, eps);

  Var qk = nn::linear(p, "pm.mpam.query_key", q);
  Var qv = nn::linear(p, "pm.mpam.query_value", q);
  Var mk = nn::linear(p, "pm.mpam.memory_key", k);
  Var mv = nn::linear(p, "pm.mpam.memory_value", k);

  Var readout = attend(qk, mk, mv, cfg.affinity_dim, &out.affinity);
  Var fused = ad::concat({qv, readout}, 1);
  out.dense = nn::from_tokens(nn::mlp(p, "pm.mpam.mlp", fused, cfg.act), cfg.grid, cfg.grid);
  return out;
}

Var pm_forward(const Bound& p, const PropagationConfig& cfg, Var cur_img, const memory::VarBank& bank) {
  const auto mem = bank.gather();
  TfmmResult tfmm = tfmm_forward(p, cfg, cur_img, mem.images, mem.masks);
  return mpam_forward(p, cfg, cur_img, tfmm.output, mem.images, mem.masks).dense;
}

Tensor pm_forward(const ParamStore& store, const PropagationConfig& cfg, const Tensor& cur_img,
                  const memory::TensorBank& bank) {
  ad::Tape tape;
  Bound p = bind(tape, store, BindMode::kNoGrad, kPrefix);
  memory::VarBank vb(bank.capacity());
  for (const auto& r : bank.records()) {
    vb.push({r.frame_index, tape.constant(r.image_emb), tape.constant(r.mask_emb)});
  }
  return pm_forward(p, cfg, tape.constant(cur_img), vb).value();
}

}  // namespace sampm::pm
