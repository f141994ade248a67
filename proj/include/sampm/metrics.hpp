#pragma once

// Saliency-style evaluation measures for one soft prediction in [0,1]
// against a binary ground truth of the same H×W shape.

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "sampm/tensor.hpp"

namespace sampm::metrics {

inline constexpr double kEps = 2.220446049250313e-16;

double mae(const Tensor& pred, const Tensor& gt);

/// Structure measure: alpha * object term + (1 - alpha) * region term, clamped to [0,1].
/// All-background gt gives 1 - mean(pred); all-foreground gt gives mean(pred).
double s_measure(const Tensor& pred, const Tensor& gt, double alpha = 0.5);

/// Mean enhanced-alignment measure after adaptive binarization at
/// min(2 * mean(pred), 1). Pixels at exactly 0 are never foreground.
double e_measure(const Tensor& pred, const Tensor& gt);

/// Weighted F-measure with dependency weighting (7×7 Gaussian, sigma 5) and
/// distance-based importance. Empty gt scores 1 for an all-zero pred, else 0.
double weighted_f_measure(const Tensor& pred, const Tensor& gt, double beta2 = 1.0);

struct Overlap {
  double dice = 0.0;
  double iou = 0.0;
};

/// Both inputs binary. Two empty masks give (1, 1).
Overlap dice_iou(const Tensor& pred_bin, const Tensor& gt);

/// 1 where value >= threshold, else 0.
Tensor binarize(const Tensor& soft, double threshold = 0.5);

/// Nearest foreground pixel (row-major flat index) for every pixel; ties go to
/// the smallest index. Foreground pixels map to themselves. Requires a
/// nonempty mask. `dist` receives Euclidean distances.
std::vector<std::size_t> nearest_foreground(const Tensor& gt, std::vector<double>& dist);

/// 2-D Gaussian window normalised to sum 1, with the usual cutoff of entries
/// below eps * max.
Tensor gaussian_window(std::size_t size, double sigma);

struct FrameScores {
  double s_alpha = 0, f_beta_w = 0, e_phi = 0, mae = 0, dice = 0, iou = 0;
};

FrameScores score_frame(const Tensor& pred, const Tensor& gt);

struct MetricReport {
  double s_alpha = 0, f_beta_w = 0, e_phi = 0, mae = 0, m_dice = 0, m_iou = 0;
  std::size_t frames_scored = 0;
};

/// Unweighted mean over frames. With skip_first the frame at index 0 is not
/// scored, so at least two frames are needed.
MetricReport evaluate_sequence(std::span<const Tensor> preds, std::span<const Tensor> gts, bool skip_first = true);

/// Unweighted mean over sequences; frames_scored is summed.
MetricReport aggregate(std::span<const MetricReport> reports);

struct NamedReport {
  std::string name;
  MetricReport report;
};

/// Tab-separated table, one row per sequence plus a final "mean" row.
void write_table(std::ostream& out, std::span<const NamedReport> rows);
/// key=value lines for one report.
void write_key_values(std::ostream& out, const MetricReport& r);

}  // namespace sampm::metrics
