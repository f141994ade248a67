#include "sampm/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "sampm/rng.hpp"

namespace sampm::synth {

namespace {

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

double lattice(std::uint64_t seed, std::int64_t i, std::int64_t j) {
  const std::uint64_t h = splitmix(seed ^ splitmix(static_cast<std::uint64_t>(i) * 0x632BE59BD9B4E019ULL +
                                                   static_cast<std::uint64_t>(j)));
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

double smooth(double t) { return t * t * (3.0 - 2.0 * t); }

struct Blob {
  double radius;
  double a2, p2, a3, p3;

  bool contains(double dx, double dy) const {
    const double r = std::hypot(dx, dy);
    const double th = std::atan2(dy, dx);
    return r <= radius * (1.0 + a2 * std::cos(2.0 * th + p2) + a3 * std::cos(3.0 * th + p3));
  }
  double extent() const { return radius * (1.0 + std::abs(a2) + std::abs(a3)); }
};

struct Texture {
  std::uint64_t seed[3];
  double tint[3];
  const SynthConfig* cfg;

  double at(std::size_t c, double x, double y) const {
    const double n = value_noise(seed[c], cfg->octaves, cfg->base_cell, x, y);
    return std::clamp(tint[c] + cfg->texture_amplitude * (n - 0.5), 0.0, 1.0);
  }
};

}  // namespace

void SynthConfig::validate() const {
  if (image_size < 8) throw std::invalid_argument("image_size must be at least 8");
  if (octaves == 0 || base_cell <= 0) throw std::invalid_argument("noise needs octaves >= 1 and base_cell > 0");
  if (!(contrast >= 0.0 && contrast <= 1.0)) throw std::invalid_argument("contrast must lie in [0,1]");
  if (!(radius_min > 0 && radius_min <= radius_max)) throw std::invalid_argument("need 0 < radius_min <= radius_max");
  if (wobble < 0 || wobble >= 0.5) throw std::invalid_argument("wobble must lie in [0, 0.5)");
  if (2.0 * radius_max * (1.0 + 2.0 * wobble) >= static_cast<double>(image_size)) {
    throw std::invalid_argument("blob radius too large for the image");
  }
  if (speed < 0 || jitter < 0) throw std::invalid_argument("speed and jitter must be nonnegative");
  if (length == 0) throw std::invalid_argument("sequence length must be positive");
}

double value_noise(std::uint64_t seed, std::size_t octaves, double base_cell, double x, double y) {
  double total = 0.0, norm = 0.0, amp = 1.0, cell = base_cell;
  for (std::size_t o = 0; o < octaves; ++o) {
    const std::uint64_t s = splitmix(seed + o);
    const double u = x / cell, v = y / cell;
    const double fu = std::floor(u), fv = std::floor(v);
    const auto i = static_cast<std::int64_t>(fu), j = static_cast<std::int64_t>(fv);
    const double tu = smooth(u - fu), tv = smooth(v - fv);
    const double top = lattice(s, i, j) * (1 - tu) + lattice(s, i + 1, j) * tu;
    const double bot = lattice(s, i, j + 1) * (1 - tu) + lattice(s, i + 1, j + 1) * tu;
    total += amp * (top * (1 - tv) + bot * tv);
    norm += amp;
    amp *= 0.5;
    cell *= 0.5;
  }
  return total / norm;
}

SequenceSample generate_sequence(const SynthConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Rng rng(seed);
  const double size = static_cast<double>(cfg.image_size);

  Texture bg{}, camo{}, pure{};
  bg.cfg = camo.cfg = pure.cfg = &cfg;
  double dir[3], dn = 0.0;
  for (int c = 0; c < 3; ++c) {
    bg.seed[c] = rng.next();
    camo.seed[c] = rng.next();
    pure.seed[c] = rng.next();
    bg.tint[c] = camo.tint[c] = rng.uniform(0.3, 0.7);
    dir[c] = rng.normal();
    dn += dir[c] * dir[c];
  }
  dn = std::sqrt(dn);
  for (int c = 0; c < 3; ++c) pure.tint[c] = std::clamp(bg.tint[c] + cfg.tint_shift * dir[c] / dn, 0.05, 0.95);

  Blob blob{rng.uniform(cfg.radius_min, cfg.radius_max), rng.uniform(-cfg.wobble, cfg.wobble),
            rng.uniform(0, 2 * std::numbers::pi), rng.uniform(-cfg.wobble, cfg.wobble), rng.uniform(0, 2 * std::numbers::pi)};

  const double heading = rng.uniform(0, 2 * std::numbers::pi);
  std::vector<double> ox(cfg.length), oy(cfg.length);
  for (std::size_t t = 0; t < cfg.length; ++t) {
    const double jx = cfg.jitter * rng.normal(), jy = cfg.jitter * rng.normal();
    ox[t] = static_cast<double>(t) * cfg.speed * std::cos(heading) + (t ? jx : 0.0);
    oy[t] = static_cast<double>(t) * cfg.speed * std::sin(heading) + (t ? jy : 0.0);
  }
  const double ext = blob.extent();
  const auto [xmin, xmax] = std::minmax_element(ox.begin(), ox.end());
  const auto [ymin, ymax] = std::minmax_element(oy.begin(), oy.end());
  const double lo_x = ext - *xmin, hi_x = size - 1.0 - ext - *xmax;
  const double lo_y = ext - *ymin, hi_y = size - 1.0 - ext - *ymax;
  if (lo_x > hi_x || lo_y > hi_y) {
    throw std::invalid_argument("blob would exit the frame: trajectory spans more than the image allows");
  }
  const double cx0 = rng.uniform(lo_x, hi_x), cy0 = rng.uniform(lo_y, hi_y);

  SequenceSample s;
  s.id = "seq" + std::to_string(seed);
  const std::size_t n = cfg.image_size;
  for (std::size_t t = 0; t < cfg.length; ++t) {
    const double cx = cx0 + ox[t], cy = cy0 + oy[t];
    Tensor frame({3, n, n}), mask({n, n});
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t col = 0; col < n; ++col) {
        const double x = static_cast<double>(col), y = static_cast<double>(r);
        const bool in = blob.contains(x - cx, y - cy);
        mask.at(r, col) = in ? 1.0 : 0.0;
        for (std::size_t c = 0; c < 3; ++c) {
          double v = bg.at(c, x, y);
          if (in) {
            // Object texture lives in object coordinates so it travels with the blob.
            const double u = x - cx + 1000.0, w = y - cy + 1000.0;
            v = cfg.contrast * camo.at(c, u, w) + (1.0 - cfg.contrast) * pure.at(c, u, w);
          }
          frame.at(c, r, col) = v;
        }
      }
    s.frames.push_back(std::move(frame));
    s.masks.push_back(std::move(mask));
  }
  return s;
}

std::vector<StaticSample> generate_static_set(const SynthConfig& cfg, std::size_t count, std::uint64_t seed) {
  SynthConfig one = cfg;
  one.length = 1;
  Rng rng(seed);
  std::vector<StaticSample> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    SequenceSample s = generate_sequence(one, rng.next());
    out.push_back({std::move(s.frames[0]), std::move(s.masks[0])});
  }
  return out;
}

}  // namespace sampm::synth
