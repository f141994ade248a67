#pragma once

// Sequence-level augmentation. Parameters are drawn once per sequence and the
// same spatial transform is applied to every frame and mask, so the clip stays
// temporally coherent. Masks are resampled nearest-neighbour and stay binary.

#include <cstdint>

#include "sampm/rng.hpp"
#include "sampm/synth.hpp"
#include "sampm/tensor.hpp"

namespace sampm::augment {

struct AugmentOps {
  bool affine = false;
  bool hflip = false;
  bool color_jitter = false;
  bool grayscale = false;
  bool gaussian_blur = false;

  static AugmentOps all() { return {true, true, true, true, true}; }
};

/// Rotation about the image centre, then isotropic scale, then translation.
struct AffineParams {
  double angle_deg = 0.0;
  double scale = 1.0;
  double tx = 0.0;  // fraction of image width (ty: of height)
  double ty = 0.0;
};

struct AugmentParams {
  AffineParams affine;
  bool flip = false;
  double brightness = 1.0;
  double contrast = 1.0;
  double saturation = 1.0;
  bool gray = false;
  double blur_sigma = 0.0;  // 0 disables
};

struct AugmentRanges {
  double max_angle_deg = 10.0;
  double max_translate = 0.05;  // fraction of image size
  double scale_lo = 0.95, scale_hi = 1.05;
  double flip_p = 0.5;
  double jitter = 0.2;  // brightness/contrast/saturation factor in [1-j, 1+j]
  double gray_p = 0.2;
  double blur_p = 0.5;
  double blur_sigma_lo = 0.1, blur_sigma_hi = 1.0;
};

AugmentParams draw_params(const AugmentOps& ops, Rng& rng, const AugmentRanges& ranges = {});

enum class Interp { kBilinear, kNearest };

/// Inverse-mapped warp of a (C,H,W) or (H,W) image. Bilinear samples clamp at
/// the border; nearest samples outside the image read 0.
Tensor warp_affine(const Tensor& img, const AffineParams& p, Interp interp);
/// Mirror along the width axis of a (C,H,W) or (H,W) image.
Tensor hflip(const Tensor& img);
Tensor to_grayscale(const Tensor& frame);
Tensor color_jitter(const Tensor& frame, double brightness, double contrast, double saturation);
Tensor gaussian_blur(const Tensor& frame, double sigma);

synth::SequenceSample apply(const synth::SequenceSample& s, const AugmentParams& p);
synth::SequenceSample augment(const synth::SequenceSample& s, const AugmentOps& ops, std::uint64_t seed);

}  // namespace sampm::augment
