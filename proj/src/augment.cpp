#include "sampm/augment.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace sampm::augment {

namespace {

struct Planes {
  std::size_t c, h, w;
};

Planes planes_of(const Tensor& img) {
  if (img.rank() == 2) return {1, img.dim(0), img.dim(1)};
  if (img.rank() == 3) return {img.dim(0), img.dim(1), img.dim(2)};
  throw DimensionError("expected (C,H,W) or (H,W) image, got " + shape_str(img.shape()));
}

void check_frame(const Tensor& f) {
  if (f.rank() != 3 || f.dim(0) != 3) throw DimensionError("expected (3,H,W) frame, got " + shape_str(f.shape()));
}

}  // namespace

AugmentParams draw_params(const AugmentOps& ops, Rng& rng, const AugmentRanges& r) {
  AugmentParams p;
  // Every op consumes its draws whether enabled or not, keeping streams aligned.
  const double angle = rng.uniform(-r.max_angle_deg, r.max_angle_deg);
  const double scale = rng.uniform(r.scale_lo, r.scale_hi);
  const double tx = rng.uniform(-r.max_translate, r.max_translate);
  const double ty = rng.uniform(-r.max_translate, r.max_translate);
  const bool flip = rng.bernoulli(r.flip_p);
  const double b = rng.uniform(1 - r.jitter, 1 + r.jitter);
  const double c = rng.uniform(1 - r.jitter, 1 + r.jitter);
  const double s = rng.uniform(1 - r.jitter, 1 + r.jitter);
  const bool gray = rng.bernoulli(r.gray_p);
  const bool blur = rng.bernoulli(r.blur_p);
  const double sigma = rng.uniform(r.blur_sigma_lo, r.blur_sigma_hi);
  if (ops.affine) p.affine = {angle, scale, tx, ty};
  if (ops.hflip) p.flip = flip;
  if (ops.color_jitter) {
    p.brightness = b;
    p.contrast = c;
    p.saturation = s;
  }
  if (ops.grayscale) p.gray = gray;
  if (ops.gaussian_blur && blur) p.blur_sigma = sigma;
  return p;
}

Tensor warp_affine(const Tensor& img, const AffineParams& p, Interp interp) {
  const Planes pl = planes_of(img);
  if (p.scale <= 0) throw std::invalid_argument("affine scale must be positive");
  Tensor out(img.shape());
  const double th = p.angle_deg * std::numbers::pi / 180.0;
  const double cs = std::cos(th), sn = std::sin(th);
  const double cx = (static_cast<double>(pl.w) - 1.0) / 2.0, cy = (static_cast<double>(pl.h) - 1.0) / 2.0;
  const double tx = p.tx * static_cast<double>(pl.w), ty = p.ty * static_cast<double>(pl.h);
  const auto W = static_cast<long>(pl.w), H = static_cast<long>(pl.h);
  for (std::size_t r = 0; r < pl.h; ++r)
    for (std::size_t col = 0; col < pl.w; ++col) {
      const double dx = static_cast<double>(col) - cx - tx, dy = static_cast<double>(r) - cy - ty;
      // Inverse of rotate-then-scale.
      const double sx = (cs * dx + sn * dy) / p.scale + cx;
      const double sy = (-sn * dx + cs * dy) / p.scale + cy;
      for (std::size_t c = 0; c < pl.c; ++c) {
        const std::size_t base = c * pl.h * pl.w;
        double v = 0.0;
        if (interp == Interp::kNearest) {
          const long ix = std::lround(sx), iy = std::lround(sy);
          if (ix >= 0 && iy >= 0 && ix < W && iy < H) v = img[base + static_cast<std::size_t>(iy * W + ix)];
        } else {
          const double fx = std::floor(sx), fy = std::floor(sy);
          const double ax = sx - fx, ay = sy - fy;
          auto px = [&](long y, long x) {
            x = std::clamp(x, 0L, W - 1);
            y = std::clamp(y, 0L, H - 1);
            return img[base + static_cast<std::size_t>(y * W + x)];
          };
          const auto x0 = static_cast<long>(fx), y0 = static_cast<long>(fy);
          v = (1 - ay) * ((1 - ax) * px(y0, x0) + ax * px(y0, x0 + 1)) + ay * ((1 - ax) * px(y0 + 1, x0) + ax * px(y0 + 1, x0 + 1));
        }
        out[base + r * pl.w + col] = v;
      }
    }
  return out;
}

Tensor hflip(const Tensor& img) {
  const Planes pl = planes_of(img);
  Tensor out(img.shape());
  for (std::size_t c = 0; c < pl.c; ++c)
    for (std::size_t r = 0; r < pl.h; ++r)
      for (std::size_t col = 0; col < pl.w; ++col)
        out[(c * pl.h + r) * pl.w + col] = img[(c * pl.h + r) * pl.w + (pl.w - 1 - col)];
  return out;
}

Tensor to_grayscale(const Tensor& frame) {
  check_frame(frame);
  const std::size_t n = frame.dim(1) * frame.dim(2);
  Tensor out(frame.shape());
  for (std::size_t i = 0; i < n; ++i) {
    const double g = 0.299 * frame[i] + 0.587 * frame[n + i] + 0.114 * frame[2 * n + i];
    out[i] = out[n + i] = out[2 * n + i] = g;
  }
  return out;
}

Tensor color_jitter(const Tensor& frame, double brightness, double contrast, double saturation) {
  check_frame(frame);
  const std::size_t n = frame.dim(1) * frame.dim(2);
  Tensor out(frame.shape());
  for (std::size_t i = 0; i < frame.numel(); ++i) out[i] = std::clamp(frame[i] * brightness, 0.0, 1.0);
  const Tensor gray = to_grayscale(out);
  const double mean = gray.sum() / static_cast<double>(gray.numel());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = std::clamp((out[i] - mean) * contrast + mean, 0.0, 1.0);
  const Tensor gray2 = to_grayscale(out);
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = std::clamp(gray2[i % n] + (out[i] - gray2[i % n]) * saturation, 0.0, 1.0);
  return out;
}

Tensor gaussian_blur(const Tensor& frame, double sigma) {
  const Planes pl = planes_of(frame);
  if (sigma <= 0) return frame;
  const auto rad = static_cast<long>(std::ceil(3.0 * sigma));
  std::vector<double> k(static_cast<std::size_t>(2 * rad + 1));
  double ks = 0.0;
  for (long i = -rad; i <= rad; ++i) ks += k[static_cast<std::size_t>(i + rad)] = std::exp(-0.5 * i * i / (sigma * sigma));
  for (double& v : k) v /= ks;
  const auto W = static_cast<long>(pl.w), H = static_cast<long>(pl.h);
  Tensor tmp(frame.shape()), out(frame.shape());
  for (std::size_t c = 0; c < pl.c; ++c) {
    const std::size_t base = c * pl.h * pl.w;
    for (long r = 0; r < H; ++r)
      for (long x = 0; x < W; ++x) {
        double s = 0.0;
        for (long i = -rad; i <= rad; ++i) s += k[static_cast<std::size_t>(i + rad)] * frame[base + static_cast<std::size_t>(r * W + std::clamp(x + i, 0L, W - 1))];
        tmp[base + static_cast<std::size_t>(r * W + x)] = s;
      }
    for (long r = 0; r < H; ++r)
      for (long x = 0; x < W; ++x) {
        double s = 0.0;
        for (long i = -rad; i <= rad; ++i) s += k[static_cast<std::size_t>(i + rad)] * tmp[base + static_cast<std::size_t>(std::clamp(r + i, 0L, H - 1) * W + x)];
        out[base + static_cast<std::size_t>(r * W + x)] = s;
      }
  }
  return out;
}

synth::SequenceSample apply(const synth::SequenceSample& s, const AugmentParams& p) {
  const bool identity_affine = p.affine.angle_deg == 0.0 && p.affine.scale == 1.0 && p.affine.tx == 0.0 && p.affine.ty == 0.0;
  synth::SequenceSample out;
  out.id = s.id;
  for (std::size_t t = 0; t < s.frames.size(); ++t) {
    Tensor f = s.frames[t], m = s.masks[t];
    if (!identity_affine) {
      f = warp_affine(f, p.affine, Interp::kBilinear);
      m = warp_affine(m, p.affine, Interp::kNearest);
    }
    if (p.flip) {
      f = hflip(f);
      m = hflip(m);
    }
    if (p.brightness != 1.0 || p.contrast != 1.0 || p.saturation != 1.0) f = color_jitter(f, p.brightness, p.contrast, p.saturation);
    if (p.gray) f = to_grayscale(f);
    if (p.blur_sigma > 0) f = gaussian_blur(f, p.blur_sigma);
    out.frames.push_back(std::move(f));
    out.masks.push_back(std::move(m));
  }
  return out;
}

synth::SequenceSample augment(const synth::SequenceSample& s, const AugmentOps& ops, std::uint64_t seed) {
  Rng rng(seed);
  return apply(s, draw_params(ops, rng));
}

}  // namespace sampm::augment
