#pragma once

// Binary netpbm I/O: P5 (grayscale) for masks, P6 (RGB) for frames.
// Pixel values are 8-bit on disk and [0,1] in memory.

#include <filesystem>
#include <iosfwd>
#include <vector>

#include "sampm/tensor.hpp"

namespace sampm::io {

struct RawImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t channels = 0;  // 1 for P5, 3 for P6
  std::size_t maxval = 255;
  std::vector<unsigned char> pixels;  // interleaved, row-major
};

/// Parses a P5 or P6 stream. Malformed headers and short payloads raise
/// FormatError naming the byte offset.
RawImage read_pnm(std::istream& in);
void write_pnm(std::ostream& out, const RawImage& img);

/// H×W values in [0,1] (byte / maxval).
Tensor read_gray(const std::filesystem::path& path);
/// H×W binary mask: 1 where the stored byte is at least 128 (at maxval 255).
Tensor read_mask(const std::filesystem::path& path);
/// Writes round(255 * clamp(v, 0, 1)) per pixel.
void write_mask(const std::filesystem::path& path, const Tensor& mask);

/// 3×H×W frame in [0,1].
Tensor read_frame(const std::filesystem::path& path);
void write_frame(const std::filesystem::path& path, const Tensor& frame);

/// round(255 * clamp(v, 0, 1)) / 255: the value a write/read round trip yields.
Tensor quantize8(const Tensor& t);

}  // namespace sampm::io
