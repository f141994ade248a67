#include "sampm/sam_stubs.hpp"

#include <stdexcept>
#include <string>

#include "sampm/nn.hpp"

namespace sampm::stubs {

namespace {

const std::string kImg = "stub.image_encoder";
const std::string kMask = "stub.mask_encoder";
const std::string kDec = "stub.decoder";

void expect_shape(const ad::Var& v, const Shape& want, const char* what) {
  if (v.shape() != want) {
    throw DimensionError(std::string(what) + ": expected " + shape_str(want) + ", got " + shape_str(v.shape()));
  }
}

}  // namespace

CallCounts& call_counts() {
  thread_local CallCounts counts;
  return counts;
}

void EncoderConfig::validate() const {
  if (downscale == 0 || image_size == 0 || image_size % downscale) {
    throw std::invalid_argument("image_size " + std::to_string(image_size) + " must be divisible by downscale " +
                                std::to_string(downscale));
  }
  if (mask_subgrid == 0 || downscale % mask_subgrid) {
    throw std::invalid_argument("downscale must be divisible by mask_subgrid");
  }
  if (embed_dim == 0) throw std::invalid_argument("embed_dim must be positive");
}

void init_params(ParamStore& store, const EncoderConfig& cfg, Rng& rng) {
  cfg.validate();
  const std::size_t d = cfg.embed_dim, n = cfg.tokens(), p2 = cfg.mask_subgrid * cfg.mask_subgrid;
  nn::add_linear(store, kImg + ".patch", 3 * cfg.downscale * cfg.downscale, d, rng);
  nn::add_mixer_block(store, kImg + ".block0", n, d, rng);
  nn::add_mixer_block(store, kImg + ".block1", n, d, rng);

  nn::add_linear(store, kMask + ".patch", p2, d, rng);
  nn::add_mixer_block(store, kMask + ".block0", n, d, rng);

  nn::add_mixer_block(store, kDec + ".block0", n, d, rng);
  nn::add_layer_norm(store, kDec + ".norm", d);
  nn::add_linear(store, kDec + ".mask_head", d, p2, rng);
  nn::add_linear(store, kDec + ".iou_head", d, 1, rng);
  store.set_frozen(kPrefix, cfg.frozen);
}

ad::Var image_encode(const Bound& p, const EncoderConfig& cfg, ad::Var frame) {
  expect_shape(frame, {3, cfg.image_size, cfg.image_size}, "image_encode");
  ++call_counts().image_encode;
  ad::Var x = nn::linear(p, kImg + ".patch", ad::patchify(frame, cfg.downscale));
  x = nn::mixer_block(p, kImg + ".block0", x, cfg.act, cfg.ln_eps);
  x = nn::mixer_block(p, kImg + ".block1", x, cfg.act, cfg.ln_eps);
  return nn::from_tokens(x, cfg.grid(), cfg.grid());
}

ad::Var mask_encode(const Bound& p, const EncoderConfig& cfg, ad::Var mask) {
  expect_shape(mask, {cfg.image_size, cfg.image_size}, "mask_encode");
  ++call_counts().mask_encode;
  const std::size_t sub = cfg.grid() * cfg.mask_subgrid;
  ad::Var pooled = ad::reshape(ad::avg_pool(mask, cfg.downscale / cfg.mask_subgrid), {1, sub, sub});
  ad::Var x = nn::linear(p, kMask + ".patch", ad::patchify(pooled, cfg.mask_subgrid));
  x = nn::mixer_block(p, kMask + ".block0", x, cfg.act, cfg.ln_eps);
  return nn::from_tokens(x, cfg.grid(), cfg.grid());
}

DecodeOutput decode(const Bound& p, const EncoderConfig& cfg, ad::Var image_emb, ad::Var dense_emb) {
  const Shape grid{cfg.embed_dim, cfg.grid(), cfg.grid()};
  expect_shape(image_emb, grid, "decode image embedding");
  if (dense_emb.shape() != image_emb.shape()) {
    throw DimensionError("decode: dense embedding " + shape_str(dense_emb.shape()) + " is not on the image grid " +
                         shape_str(image_emb.shape()));
  }
  ++call_counts().decode;
  ad::Var x = ad::add(nn::to_tokens(image_emb), nn::to_tokens(dense_emb));
  x = nn::mixer_block(p, kDec + ".block0", x, cfg.act, cfg.ln_eps);
  x = nn::layer_norm(p, kDec + ".norm", x, cfg.ln_eps);

  ad::Var sub = ad::unpatchify(nn::linear(p, kDec + ".mask_head", x), cfg.grid(), cfg.grid(), cfg.mask_subgrid);
  ad::Var logits = ad::upsample_bilinear(sub, cfg.downscale / cfg.mask_subgrid);

  ad::Tape& tape = *x.tape();
  const std::size_t n = cfg.tokens();
  ad::Var pool = tape.constant(Tensor({1, n}, 1.0 / static_cast<double>(n)));
  ad::Var iou = ad::sigmoid(nn::linear(p, kDec + ".iou_head", ad::matmul(pool, x)));
  return {logits, ad::reshape(iou, {1})};
}

Tensor image_encode(const ParamStore& store, const EncoderConfig& cfg, const Tensor& frame) {
  ad::Tape tape;
  Bound p = bind(tape, store, BindMode::kNoGrad, kPrefix);
  return image_encode(p, cfg, tape.constant(frame)).value();
}

Tensor mask_encode(const ParamStore& store, const EncoderConfig& cfg, const Tensor& mask) {
  ad::Tape tape;
  Bound p = bind(tape, store, BindMode::kNoGrad, kPrefix);
  return mask_encode(p, cfg, tape.constant(mask)).value();
}

MaskPrediction decode(const ParamStore& store, const EncoderConfig& cfg, const Tensor& image_emb, const Tensor& dense_emb) {
  ad::Tape tape;
  Bound p = bind(tape, store, BindMode::kNoGrad, kPrefix);
  DecodeOutput out = decode(p, cfg, tape.constant(image_emb), tape.constant(dense_emb));
  return {out.logits.value(), out.iou_pred.value()[0]};
}

}  // namespace sampm::stubs
