#pragma once

// Literal per-pixel transcriptions of the six evaluation measures, kept
// deliberately naive (plain loops over 2-D vectors) and separate from the
// library code they check.
//
// Shared conventions with the library:
//   S-measure: blocks of one pixel have zero variance, empty blocks carry no
//     weight, the split point is the banker's-rounded centroid plus one.
//   E-measure: binarize at min(2 mean, 1) excluding exact zeros, divide by N.
//   Weighted F: nearest-foreground ties go to the first pixel in row-major order.

#include <algorithm>
#include <cfenv>
#include <cmath>
#include <vector>

#include "sampm/tensor.hpp"

namespace sampm::oracle {

using Grid = std::vector<std::vector<double>>;
constexpr double kEps = 2.220446049250313e-16;

inline Grid grid(const Tensor& t) {
  Grid g(t.dim(0), std::vector<double>(t.dim(1)));
  for (std::size_t r = 0; r < t.dim(0); ++r)
    for (std::size_t c = 0; c < t.dim(1); ++c) g[r][c] = t.at(r, c);
  return g;
}

inline double mean(const Grid& g) {
  double s = 0;
  int n = 0;
  for (const auto& row : g)
    for (double v : row) {
      s += v;
      ++n;
    }
  return s / n;
}

inline double mae(const Grid& p, const Grid& g) {
  double s = 0;
  int n = 0;
  for (std::size_t r = 0; r < g.size(); ++r)
    for (std::size_t c = 0; c < g[r].size(); ++c) {
      s += std::fabs(p[r][c] - g[r][c]);
      ++n;
    }
  return s / n;
}

// --- structure measure ---

inline double object_similarity(const std::vector<double>& vals) {
  if (vals.empty()) return 0;
  double m = 0;
  for (double v : vals) m += v;
  m /= static_cast<double>(vals.size());
  double sd = 0;
  if (vals.size() > 1) {
    for (double v : vals) sd += (v - m) * (v - m);
    sd = std::sqrt(sd / static_cast<double>(vals.size() - 1));
  }
  return 2 * m / (m * m + 1 + sd + kEps);
}

inline double block_ssim(const Grid& p, const Grid& g, int r0, int r1, int c0, int c1) {
  std::vector<double> x, y;
  for (int r = r0; r < r1; ++r)
    for (int c = c0; c < c1; ++c) {
      x.push_back(p[r][c]);
      y.push_back(g[r][c]);
    }
  const double n = static_cast<double>(x.size());
  // Sum first, divide once: constant blocks must give exact means, since the
  // zero-variance branch below is discontinuous.
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double vx = 0, vy = 0, cxy = 0;
  if (x.size() > 1) {
    for (std::size_t i = 0; i < x.size(); ++i) {
      vx += (x[i] - mx) * (x[i] - mx) / (n - 1);
      vy += (y[i] - my) * (y[i] - my) / (n - 1);
      cxy += (x[i] - mx) * (y[i] - my) / (n - 1);
    }
  }
  const double num = 4 * mx * my * cxy;
  const double den = (mx * mx + my * my) * (vx + vy);
  if (num != 0) return num / (den + kEps);
  if (den == 0) return 1;
  return 0;
}

inline double s_measure(const Grid& p, const Grid& g, double alpha = 0.5) {
  const int h = static_cast<int>(g.size()), w = static_cast<int>(g[0].size());
  const double y = mean(g);
  if (y == 0) return 1 - mean(p);
  if (y == 1) return mean(p);

  std::vector<double> fg, bg;
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      if (g[r][c] > 0.5) fg.push_back(p[r][c]);
      else bg.push_back(1 - p[r][c]);
    }
  const double object = y * object_similarity(fg) + (1 - y) * object_similarity(bg);

  double rows = 0, cols = 0, count = 0;
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c)
      if (g[r][c] > 0.5) {
        rows += r;
        cols += c;
        count += 1;
      }
  std::fesetround(FE_TONEAREST);
  const int cy = std::min(h, static_cast<int>(std::nearbyint(rows / count)) + 1);
  const int cx = std::min(w, static_cast<int>(std::nearbyint(cols / count)) + 1);
  const double area = h * w;
  double region = 0;
  const int rs[2][2] = {{0, cy}, {cy, h}}, cs[2][2] = {{0, cx}, {cx, w}};
  for (const auto& rr : rs)
    for (const auto& cc : cs) {
      const int a = (rr[1] - rr[0]) * (cc[1] - cc[0]);
      if (a == 0) continue;
      region += a / area * block_ssim(p, g, rr[0], rr[1], cc[0], cc[1]);
    }
  return std::clamp(alpha * object + (1 - alpha) * region, 0.0, 1.0);
}

// --- enhanced alignment measure, per-pixel form ---

inline double e_measure(const Grid& p, const Grid& g) {
  const int h = static_cast<int>(g.size()), w = static_cast<int>(g[0].size());
  const double thr = std::min(2 * mean(p), 1.0);
  Grid fm(h, std::vector<double>(w));
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) fm[r][c] = (p[r][c] >= thr && p[r][c] > 0) ? 1 : 0;
  const double gm = mean(g), fmm = mean(fm);
  double total = 0;
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      double enhanced;
      if (gm == 0) {
        enhanced = 1 - fm[r][c];
      } else if (gm == 1) {
        enhanced = fm[r][c];
      } else {
        const double a = g[r][c] - gm, b = fm[r][c] - fmm;
        const double xi = 2 * a * b / (a * a + b * b + kEps);
        enhanced = (xi + 1) * (xi + 1) / 4;
      }
      total += enhanced;
    }
  return total / (h * w);
}

// --- weighted F-measure ---

inline double weighted_f(const Grid& p, const Grid& g, double beta2 = 1.0) {
  const int h = static_cast<int>(g.size()), w = static_cast<int>(g[0].size());
  bool any = false, pred_any = false;
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      any = any || g[r][c] > 0.5;
      pred_any = pred_any || p[r][c] != 0;
    }
  if (!any) return pred_any ? 0 : 1;

  Grid err(h, std::vector<double>(w)), dist(h, std::vector<double>(w, 0)), et(h, std::vector<double>(w));
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) err[r][c] = std::fabs(p[r][c] - g[r][c]);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      if (g[r][c] > 0.5) {
        et[r][c] = err[r][c];
        continue;
      }
      double best = 1e300;
      int br = 0, bc = 0;
      for (int rr = 0; rr < h; ++rr)
        for (int cc = 0; cc < w; ++cc)
          if (g[rr][cc] > 0.5) {
            const double d = std::hypot(rr - r, cc - c);
            if (d < best) {
              best = d;
              br = rr;
              bc = cc;
            }
          }
      dist[r][c] = best;
      et[r][c] = err[br][bc];
    }

  // 7x7 Gaussian, sigma 5, small entries cut, normalised.
  double k[7][7], kmax = 0, ksum = 0;
  for (int i = 0; i < 7; ++i)
    for (int j = 0; j < 7; ++j) {
      k[i][j] = std::exp(-((i - 3) * (i - 3) + (j - 3) * (j - 3)) / 50.0);
      kmax = std::max(kmax, k[i][j]);
    }
  for (auto& row : k)
    for (double& v : row) {
      if (v < kEps * kmax) v = 0;
      ksum += v;
    }

  double ew_fg = 0, ew_bg = 0, n_fg = 0;
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      double ea = 0;
      for (int i = 0; i < 7; ++i)
        for (int j = 0; j < 7; ++j) {
          const int rr = r + i - 3, cc = c + j - 3;
          if (rr >= 0 && rr < h && cc >= 0 && cc < w) ea += k[i][j] / ksum * et[rr][cc];
        }
      const bool fg = g[r][c] > 0.5;
      double m = err[r][c];
      if (fg && ea < m) m = ea;
      const double importance = fg ? 1.0 : 2 - std::exp(std::log(0.5) / 5 * dist[r][c]);
      if (fg) {
        ew_fg += m * importance;
        n_fg += 1;
      } else {
        ew_bg += m * importance;
      }
    }
  const double tpw = n_fg - ew_fg;
  const double recall = 1 - ew_fg / n_fg;
  const double precision = tpw / (kEps + tpw + ew_bg);
  return (1 + beta2) * recall * precision / (kEps + recall + beta2 * precision);
}

// --- overlap at threshold 0.5 ---

inline double dice(const Grid& p, const Grid& g) {
  double inter = 0, a = 0, b = 0;
  for (std::size_t r = 0; r < g.size(); ++r)
    for (std::size_t c = 0; c < g[r].size(); ++c) {
      const double pb = p[r][c] >= 0.5 ? 1 : 0;
      inter += pb * g[r][c];
      a += pb;
      b += g[r][c];
    }
  return a + b == 0 ? 1 : 2 * inter / (a + b);
}

inline double iou(const Grid& p, const Grid& g) {
  double inter = 0, uni = 0;
  for (std::size_t r = 0; r < g.size(); ++r)
    for (std::size_t c = 0; c < g[r].size(); ++c) {
      const bool pb = p[r][c] >= 0.5, gb = g[r][c] > 0.5;
      inter += pb && gb;
      uni += pb || gb;
    }
  return uni == 0 ? 1 : inter / uni;
}

}  // namespace sampm::oracle
