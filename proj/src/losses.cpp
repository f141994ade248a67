#include "sampm/losses.hpp"

#include <cmath>
#include <stdexcept>

namespace sampm::loss {

namespace {

double log_sigmoid(double s) { return s >= 0 ? -std::log1p(std::exp(-s)) : s - std::log1p(std::exp(s)); }
double sigmoid(double s) { return s >= 0 ? 1.0 / (1.0 + std::exp(-s)) : std::exp(s) / (1.0 + std::exp(s)); }

}  // namespace

void LossWeights::validate() const {
  if (focal < 0 || dice < 0 || iou_mse < 0) throw std::invalid_argument("loss weights must be nonnegative");
  if (focal == 0 && dice == 0 && iou_mse == 0) throw std::invalid_argument("at least one loss weight must be positive");
}

void check_binary_target(const Tensor& target, const Shape& shape) {
  if (target.shape() != shape) {
    throw DimensionError("target " + shape_str(target.shape()) + " does not match prediction " + shape_str(shape));
  }
  for (double v : target.data()) {
    if (v != 0.0 && v != 1.0) throw std::invalid_argument("target values must be 0 or 1");
  }
}

ad::Var focal_loss(ad::Var logits, const Tensor& target, const FocalParams& params) {
  check_binary_target(target, logits.shape());
  if (params.gamma < 0 || params.alpha < 0 || params.alpha > 1) {
    throw std::invalid_argument("focal loss needs gamma >= 0 and alpha in [0,1]");
  }
  const Tensor& z = logits.value();
  const std::size_t n = z.numel();
  const double inv_n = 1.0 / static_cast<double>(n);
  const double alpha = params.alpha, gamma = params.gamma;
  double total = 0.0;
  Tensor dz(z.shape());
  for (std::size_t i = 0; i < n; ++i) {
    const bool pos = target[i] == 1.0;
    const double s = pos ? z[i] : -z[i];
    const double at = pos ? alpha : 1.0 - alpha;
    const double u = sigmoid(-s);  // 1 - p_t
    const double ell = log_sigmoid(s);
    const double ug = std::pow(u, gamma);
    total += -at * ug * ell;
    const double ds = -at * (-gamma * ug * (1.0 - u) * ell + ug * u);
    dz[i] = (pos ? ds : -ds) * inv_n;
  }
  return logits.tape()->record("focal_loss", Tensor::scalar(total * inv_n), {logits},
                               [logits, dz = std::move(dz)](ad::Tape& t, const Tensor& g) {
                                 if (Tensor* sink = t.grad_sink(logits))
                                   for (std::size_t i = 0; i < dz.numel(); ++i) (*sink)[i] += g[0] * dz[i];
                               });
}

ad::Var dice_loss(ad::Var probs, const Tensor& target, double smooth) {
  if (target.shape() != probs.shape()) {
    throw DimensionError("dice_loss: target " + shape_str(target.shape()) + " vs probs " + shape_str(probs.shape()));
  }
  if (smooth < 0) throw std::invalid_argument("dice smooth must be nonnegative");
  const Tensor& p = probs.value();
  double inter = 0.0, sp = 0.0, st = 0.0;
  for (std::size_t i = 0; i < p.numel(); ++i) {
    inter += p[i] * target[i];
    sp += p[i];
    st += target[i];
  }
  const double num = 2.0 * inter + smooth;
  const double den = sp + st + smooth;
  if (den == 0.0) throw NumericError("dice_loss: empty prediction and target with zero smoothing");
  return probs.tape()->record("dice_loss", Tensor::scalar(1.0 - num / den), {probs},
                              [probs, target, num, den](ad::Tape& t, const Tensor& g) {
                                Tensor* sink = t.grad_sink(probs);
                                if (!sink) return;
                                for (std::size_t i = 0; i < target.numel(); ++i)
                                  (*sink)[i] += g[0] * -(2.0 * target[i] * den - num) / (den * den);
                              });
}

double binarized_iou(const Tensor& logits, const Tensor& target, double threshold) {
  check_binary_target(target, logits.shape());
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < logits.numel(); ++i) {
    const bool a = sigmoid(logits[i]) >= threshold;
    const bool b = target[i] == 1.0;
    inter += a && b;
    uni += a || b;
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

ad::Var iou_mse_loss(ad::Var iou_pred, const Tensor& logits, const Tensor& target, double threshold) {
  if (iou_pred.numel() != 1) throw DimensionError("iou_pred must hold one value, got " + shape_str(iou_pred.shape()));
  const double actual = binarized_iou(logits, target, threshold);
  ad::Var diff = ad::add_scalar(iou_pred, -actual);
  return ad::reshape(ad::mul(diff, diff), {1});
}

LossTerms total_loss(const stubs::DecodeOutput& pred, const Tensor& target, const LossOptions& opts) {
  opts.weights.validate();
  LossTerms out;
  out.focal = focal_loss(pred.logits, target, opts.focal);
  out.dice = dice_loss(ad::sigmoid(pred.logits), target, opts.dice_smooth);
  out.actual_iou = binarized_iou(pred.logits.value(), target, opts.iou_threshold);
  out.iou_mse = iou_mse_loss(pred.iou_pred, pred.logits.value(), target, opts.iou_threshold);
  out.total = ad::add(ad::add(ad::scale(out.focal, opts.weights.focal), ad::scale(out.dice, opts.weights.dice)),
                      ad::scale(out.iou_mse, opts.weights.iou_mse));
  return out;
}

}  // namespace sampm::loss
