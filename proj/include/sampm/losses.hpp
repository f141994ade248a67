#pragma once

#include "sampm/autodiff.hpp"
#include "sampm/sam_stubs.hpp"
#include "sampm/tensor.hpp"

namespace sampm::loss {

struct LossWeights {
  double focal = 20.0;
  double dice = 1.0;
  double iou_mse = 1.0;
  /// Throws std::invalid_argument unless all weights are >= 0 and one is > 0.
  void validate() const;
};

struct FocalParams {
  double alpha = 0.25;
  double gamma = 2.0;
};

/// Mean over pixels of -a_t (1 - p_t)^gamma log p_t with p = sigmoid(logits).
/// `target` must be binary and match the logits' shape.
ad::Var focal_loss(ad::Var logits, const Tensor& target, const FocalParams& params = {});

/// 1 - (2 sum(p t) + smooth) / (sum(p) + sum(t) + smooth).
ad::Var dice_loss(ad::Var probs, const Tensor& target, double smooth = 1.0);

/// IoU of sigmoid(logits) >= threshold against a binary target; both empty gives 1.
double binarized_iou(const Tensor& logits, const Tensor& target, double threshold = 0.5);

/// (iou_pred - IoU(binarize(logits), target))^2 with the actual IoU held constant.
ad::Var iou_mse_loss(ad::Var iou_pred, const Tensor& logits, const Tensor& target, double threshold = 0.5);

struct LossTerms {
  ad::Var total;
  ad::Var focal;
  ad::Var dice;
  ad::Var iou_mse;
  double actual_iou = 0.0;
};

struct LossOptions {
  LossWeights weights;
  FocalParams focal;
  double dice_smooth = 1.0;
  double iou_threshold = 0.5;
};

LossTerms total_loss(const stubs::DecodeOutput& pred, const Tensor& target, const LossOptions& opts = {});

/// Throws unless `target` has `shape` and holds only 0 and 1.
void check_binary_target(const Tensor& target, const Shape& shape);

}  // namespace sampm::loss
