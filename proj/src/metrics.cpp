#include "sampm/metrics.hpp"

#include <algorithm>
#include <cfenv>
#include <cmath>
#include <iomanip>
#include <limits>
#include <ostream>
#include <stdexcept>

namespace sampm::metrics {

namespace {

void check_pair(const Tensor& pred, const Tensor& gt) {
  if (pred.rank() != 2 || pred.shape() != gt.shape()) {
    throw DimensionError("metric inputs must be equal H×W masks, got " + shape_str(pred.shape()) + " and " +
                         shape_str(gt.shape()));
  }
  for (double v : gt.data())
    if (v != 0.0 && v != 1.0) throw std::invalid_argument("ground truth must be binary");
  for (double v : pred.data())
    if (!(v >= 0.0 && v <= 1.0)) throw std::invalid_argument("prediction values must lie in [0,1]");
}

double mean_of(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

// Object-level similarity of the values of one region.
double s_object(const std::vector<double>& x) {
  if (x.empty()) return 0.0;
  const double m = mean_of(x);
  double var = 0.0;
  if (x.size() > 1) {
    for (double v : x) var += (v - m) * (v - m);
    var /= static_cast<double>(x.size() - 1);
  }
  return 2.0 * m / (m * m + 1.0 + std::sqrt(var) + kEps);
}

double object_score(const Tensor& pred, const Tensor& gt) {
  std::vector<double> fg, bg;
  for (std::size_t i = 0; i < gt.numel(); ++i) {
    if (gt[i] == 1.0) fg.push_back(pred[i]);
    else bg.push_back(1.0 - pred[i]);
  }
  const double u = static_cast<double>(fg.size()) / static_cast<double>(gt.numel());
  return u * s_object(fg) + (1.0 - u) * s_object(bg);
}

struct Block {
  std::size_t r0, r1, c0, c1;
  std::size_t area() const { return (r1 - r0) * (c1 - c0); }
};

double ssim_block(const Tensor& pred, const Tensor& gt, const Block& b) {
  const std::size_t w = gt.dim(1);
  const double n = static_cast<double>(b.area());
  double mx = 0.0, my = 0.0;
  for (std::size_t r = b.r0; r < b.r1; ++r)
    for (std::size_t c = b.c0; c < b.c1; ++c) {
      mx += pred[r * w + c];
      my += gt[r * w + c];
    }
  mx /= n;
  my /= n;
  double sx = 0.0, sy = 0.0, sxy = 0.0;
  if (b.area() > 1) {
    for (std::size_t r = b.r0; r < b.r1; ++r)
      for (std::size_t c = b.c0; c < b.c1; ++c) {
        const double dx = pred[r * w + c] - mx, dy = gt[r * w + c] - my;
        sx += dx * dx;
        sy += dy * dy;
        sxy += dx * dy;
      }
    sx /= n - 1.0;
    sy /= n - 1.0;
    sxy /= n - 1.0;
  }
  const double a = 4.0 * mx * my * sxy;
  const double b2 = (mx * mx + my * my) * (sx + sy);
  if (a != 0.0) return a / (b2 + kEps);
  return b2 == 0.0 ? 1.0 : 0.0;
}

double round_half_even(double v) {
  const int old = std::fegetround();
  std::fesetround(FE_TONEAREST);
  const double r = std::nearbyint(v);
  std::fesetround(old);
  return r;
}

double region_score(const Tensor& pred, const Tensor& gt) {
  const std::size_t h = gt.dim(0), w = gt.dim(1);
  double sr = 0.0, sc = 0.0, cnt = 0.0;
  for (std::size_t r = 0; r < h; ++r)
    for (std::size_t c = 0; c < w; ++c)
      if (gt[r * w + c] == 1.0) {
        sr += static_cast<double>(r);
        sc += static_cast<double>(c);
        cnt += 1.0;
      }
  // Split point one past the rounded centroid, so the centroid row and column
  // belong to the top-left block.
  const auto y = std::min(h, static_cast<std::size_t>(round_half_even(sr / cnt)) + 1);
  const auto x = std::min(w, static_cast<std::size_t>(round_half_even(sc / cnt)) + 1);
  const double area = static_cast<double>(h * w);
  const Block blocks[4] = {{0, y, 0, x}, {0, y, x, w}, {y, h, 0, x}, {y, h, x, w}};
  double score = 0.0;
  for (const Block& b : blocks) {
    if (b.area() == 0) continue;
    score += static_cast<double>(b.area()) / area * ssim_block(pred, gt, b);
  }
  return score;
}

}  // namespace

double mae(const Tensor& pred, const Tensor& gt) {
  check_pair(pred, gt);
  double s = 0.0;
  for (std::size_t i = 0; i < pred.numel(); ++i) s += std::abs(pred[i] - gt[i]);
  return s / static_cast<double>(pred.numel());
}

double s_measure(const Tensor& pred, const Tensor& gt, double alpha) {
  check_pair(pred, gt);
  const double y = mean_of(gt.data());
  if (y == 0.0) return 1.0 - mean_of(pred.data());
  if (y == 1.0) return mean_of(pred.data());
  const double s = alpha * object_score(pred, gt) + (1.0 - alpha) * region_score(pred, gt);
  return std::clamp(s, 0.0, 1.0);
}

double e_measure(const Tensor& pred, const Tensor& gt) {
  check_pair(pred, gt);
  const std::size_t n = gt.numel();
  const double thr = std::min(2.0 * mean_of(pred.data()), 1.0);
  std::size_t fg_fg = 0, fg_bg = 0, gt_fg = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const bool p = pred[i] >= thr && pred[i] > 0.0;
    const bool g = gt[i] == 1.0;
    fg_fg += p && g;
    fg_bg += p && !g;
    gt_fg += g;
  }
  const std::size_t pred_fg = fg_fg + fg_bg;
  const std::size_t pred_bg = n - pred_fg;
  double sum = 0.0;
  if (gt_fg == 0) {
    sum = static_cast<double>(pred_bg);
  } else if (gt_fg == n) {
    sum = static_cast<double>(pred_fg);
  } else {
    const std::size_t bg_fg = gt_fg - fg_fg;
    const std::size_t bg_bg = pred_bg - bg_fg;
    const double mp = static_cast<double>(pred_fg) / static_cast<double>(n);
    const double mg = static_cast<double>(gt_fg) / static_cast<double>(n);
    const double parts[4] = {static_cast<double>(fg_fg), static_cast<double>(fg_bg), static_cast<double>(bg_fg),
                             static_cast<double>(bg_bg)};
    const double pv[4] = {1.0 - mp, 1.0 - mp, -mp, -mp};
    const double gv[4] = {1.0 - mg, -mg, 1.0 - mg, -mg};
    for (int k = 0; k < 4; ++k) {
      const double align = 2.0 * pv[k] * gv[k] / (pv[k] * pv[k] + gv[k] * gv[k] + kEps);
      sum += (align + 1.0) * (align + 1.0) / 4.0 * parts[k];
    }
  }
  return sum / static_cast<double>(n);
}

std::vector<std::size_t> nearest_foreground(const Tensor& gt, std::vector<double>& dist) {
  const std::size_t h = gt.dim(0), w = gt.dim(1), n = h * w;
  std::vector<std::size_t> fg;
  for (std::size_t i = 0; i < n; ++i)
    if (gt[i] == 1.0) fg.push_back(i);
  if (fg.empty()) throw std::invalid_argument("nearest_foreground needs a nonempty mask");
  std::vector<std::size_t> idx(n);
  dist.assign(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    if (gt[i] == 1.0) {
      idx[i] = i;
      continue;
    }
    const auto r = static_cast<long>(i / w), c = static_cast<long>(i % w);
    long best = std::numeric_limits<long>::max();
    std::size_t arg = 0;
    for (std::size_t j : fg) {
      const long dr = static_cast<long>(j / w) - r, dc = static_cast<long>(j % w) - c;
      const long d2 = dr * dr + dc * dc;
      if (d2 < best) {
        best = d2;
        arg = j;
      }
    }
    idx[i] = arg;
    dist[i] = std::sqrt(static_cast<double>(best));
  }
  return idx;
}

Tensor gaussian_window(std::size_t size, double sigma) {
  Tensor k({size, size});
  const double half = (static_cast<double>(size) - 1.0) / 2.0;
  double mx = 0.0;
  for (std::size_t r = 0; r < size; ++r)
    for (std::size_t c = 0; c < size; ++c) {
      const double y = static_cast<double>(r) - half, x = static_cast<double>(c) - half;
      k.at(r, c) = std::exp(-(x * x + y * y) / (2.0 * sigma * sigma));
      mx = std::max(mx, k.at(r, c));
    }
  for (double& v : k.data())
    if (v < kEps * mx) v = 0.0;
  const double s = k.sum();
  for (double& v : k.data()) v /= s;
  return k;
}

double weighted_f_measure(const Tensor& pred, const Tensor& gt, double beta2) {
  check_pair(pred, gt);
  const std::size_t h = gt.dim(0), w = gt.dim(1), n = h * w;
  if (gt.sum() == 0.0) return pred.sum() == 0.0 ? 1.0 : 0.0;

  std::vector<double> dist;
  const std::vector<std::size_t> nearest = nearest_foreground(gt, dist);
  std::vector<double> e(n), et(n);
  for (std::size_t i = 0; i < n; ++i) e[i] = std::abs(pred[i] - gt[i]);
  for (std::size_t i = 0; i < n; ++i) et[i] = e[nearest[i]];

  // Zero-padded correlation with the symmetric window.
  static const Tensor kernel = gaussian_window(7, 5.0);
  const long half = 3;
  std::vector<double> ea(n, 0.0);
  for (long r = 0; r < static_cast<long>(h); ++r)
    for (long c = 0; c < static_cast<long>(w); ++c) {
      double s = 0.0;
      for (long dr = -half; dr <= half; ++dr)
        for (long dc = -half; dc <= half; ++dc) {
          const long rr = r + dr, cc = c + dc;
          if (rr < 0 || cc < 0 || rr >= static_cast<long>(h) || cc >= static_cast<long>(w)) continue;
          s += kernel.at(static_cast<std::size_t>(dr + half), static_cast<std::size_t>(dc + half)) *
               et[static_cast<std::size_t>(rr) * w + static_cast<std::size_t>(cc)];
        }
      ea[static_cast<std::size_t>(r) * w + static_cast<std::size_t>(c)] = s;
    }

  double tp = 0.0, fp = 0.0, err_fg = 0.0, n_fg = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const bool g = gt[i] == 1.0;
    double m = (g && ea[i] < e[i]) ? ea[i] : e[i];
    if (!g) m *= 2.0 - std::exp(std::log(0.5) / 5.0 * dist[i]);
    if (g) {
      err_fg += m;
      n_fg += 1.0;
    } else {
      fp += m;
    }
  }
  tp = n_fg - err_fg;
  const double recall = 1.0 - err_fg / n_fg;
  const double precision = tp / (tp + fp + kEps);
  return (1.0 + beta2) * recall * precision / (recall + beta2 * precision + kEps);
}

Overlap dice_iou(const Tensor& pred_bin, const Tensor& gt) {
  check_pair(pred_bin, gt);
  std::size_t inter = 0, a = 0, b = 0;
  for (std::size_t i = 0; i < gt.numel(); ++i) {
    if (pred_bin[i] != 0.0 && pred_bin[i] != 1.0) throw std::invalid_argument("dice_iou needs a binary prediction");
    const bool p = pred_bin[i] == 1.0, g = gt[i] == 1.0;
    inter += p && g;
    a += p;
    b += g;
  }
  if (a + b == 0) return {1.0, 1.0};
  const double i = static_cast<double>(inter);
  return {2.0 * i / static_cast<double>(a + b), i / static_cast<double>(a + b - inter)};
}

Tensor binarize(const Tensor& soft, double threshold) {
  Tensor out(soft.shape());
  for (std::size_t i = 0; i < soft.numel(); ++i) out[i] = soft[i] >= threshold ? 1.0 : 0.0;
  return out;
}

FrameScores score_frame(const Tensor& pred, const Tensor& gt) {
  FrameScores f;
  f.s_alpha = s_measure(pred, gt);
  f.f_beta_w = weighted_f_measure(pred, gt);
  f.e_phi = e_measure(pred, gt);
  f.mae = mae(pred, gt);
  const Overlap o = dice_iou(binarize(pred), gt);
  f.dice = o.dice;
  f.iou = o.iou;
  return f;
}

MetricReport evaluate_sequence(std::span<const Tensor> preds, std::span<const Tensor> gts, bool skip_first) {
  if (preds.size() != gts.size()) {
    throw std::invalid_argument("evaluate_sequence: " + std::to_string(preds.size()) + " predictions for " +
                                std::to_string(gts.size()) + " ground-truth frames");
  }
  const std::size_t first = skip_first ? 1 : 0;
  if (preds.size() < first + 1 || (skip_first && preds.size() < 2)) {
    throw std::invalid_argument("evaluate_sequence: not enough frames to score");
  }
  MetricReport r;
  for (std::size_t i = first; i < preds.size(); ++i) {
    const FrameScores f = score_frame(preds[i], gts[i]);
    r.s_alpha += f.s_alpha;
    r.f_beta_w += f.f_beta_w;
    r.e_phi += f.e_phi;
    r.mae += f.mae;
    r.m_dice += f.dice;
    r.m_iou += f.iou;
    ++r.frames_scored;
  }
  const double k = static_cast<double>(r.frames_scored);
  r.s_alpha /= k;
  r.f_beta_w /= k;
  r.e_phi /= k;
  r.mae /= k;
  r.m_dice /= k;
  r.m_iou /= k;
  return r;
}

MetricReport aggregate(std::span<const MetricReport> reports) {
  if (reports.empty()) throw std::invalid_argument("aggregate of zero reports");
  MetricReport m;
  for (const MetricReport& r : reports) {
    m.s_alpha += r.s_alpha;
    m.f_beta_w += r.f_beta_w;
    m.e_phi += r.e_phi;
    m.mae += r.mae;
    m.m_dice += r.m_dice;
    m.m_iou += r.m_iou;
    m.frames_scored += r.frames_scored;
  }
  const double k = static_cast<double>(reports.size());
  m.s_alpha /= k;
  m.f_beta_w /= k;
  m.e_phi /= k;
  m.mae /= k;
  m.m_dice /= k;
  m.m_iou /= k;
  return m;
}

void write_table(std::ostream& out, std::span<const NamedReport> rows) {
  std::vector<MetricReport> all;
  out << "sequence\tS_alpha\tF_beta_w\tE_phi\tMAE\tmDice\tmIoU\tframes\n";
  auto line = [&](const std::string& name, const MetricReport& r) {
    out << name << std::fixed << std::setprecision(6) << '\t' << r.s_alpha << '\t' << r.f_beta_w << '\t' << r.e_phi
        << '\t' << r.mae << '\t' << r.m_dice << '\t' << r.m_iou << '\t' << r.frames_scored << '\n';
  };
  for (const NamedReport& row : rows) {
    line(row.name, row.report);
    all.push_back(row.report);
  }
  if (!all.empty()) line("mean", aggregate(all));
  out.unsetf(std::ios::floatfield);
}

void write_key_values(std::ostream& out, const MetricReport& r) {
  out << std::setprecision(17) << "s_alpha=" << r.s_alpha << "\nf_beta_w=" << r.f_beta_w << "\ne_phi=" << r.e_phi
      << "\nmae=" << r.mae << "\nm_dice=" << r.m_dice << "\nm_iou=" << r.m_iou << "\nframes_scored=" << r.frames_scored
      << '\n';
}

}  // namespace sampm::metrics
