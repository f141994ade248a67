#pragma once

// Procedural camouflage sequences: a static value-noise background and one
// blob whose own texture moves with it. `contrast` blends the object texture
// between a distinctly tinted pattern (0) and an independent draw from the
// background generator (1, indistinguishable except through motion).

#include <cstdint>
#include <string>
#include <vector>

#include "sampm/tensor.hpp"

namespace sampm::synth {

struct SynthConfig {
  std::size_t image_size = 64;
  std::size_t octaves = 3;
  double base_cell = 16.0;  // lattice spacing of the coarsest noise octave, pixels
  double texture_amplitude = 0.6;
  double tint_shift = 0.35;  // colour distance of the pure object tint from the background tint
  double radius_min = 8.0;
  double radius_max = 12.0;
  double wobble = 0.15;  // relative amplitude of the boundary harmonics
  double speed = 1.0;    // pixels per frame, random direction per sequence
  double jitter = 0.3;   // std of the per-frame position noise, pixels
  std::size_t length = 8;
  double contrast = 0.9;

  void validate() const;
};

struct SequenceSample {
  std::string id;
  std::vector<Tensor> frames;  // (3, H, W) in [0,1]
  std::vector<Tensor> masks;   // (H, W) binary
};

struct StaticSample {
  Tensor frame;
  Tensor mask;
};

/// Deterministic in (cfg, seed). Throws std::invalid_argument when no start
/// position keeps the blob inside the frame for the whole trajectory.
SequenceSample generate_sequence(const SynthConfig& cfg, std::uint64_t seed);

std::vector<StaticSample> generate_static_set(const SynthConfig& cfg, std::size_t count, std::uint64_t seed);

/// Smooth noise in [0,1] evaluated at real coordinates.
double value_noise(std::uint64_t seed, std::size_t octaves, double base_cell, double x, double y);

}  // namespace sampm::synth
