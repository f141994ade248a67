#include "sampm/netpbm.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>

namespace sampm::io {

namespace {

class HeaderReader {
 public:
  explicit HeaderReader(std::istream& in) : in_(in) {}

  std::size_t offset() const { return offset_; }

  int get() {
    const int c = in_.get();
    if (c != EOF) ++offset_;
    return c;
  }

  void skip_space_and_comments() {
    for (;;) {
      const int c = in_.peek();
      if (c == '#') {
        while (get() != '\n' && in_) {
        }
      } else if (c != EOF && std::isspace(c)) {
        get();
      } else {
        return;
      }
    }
  }

  std::size_t number(const char* what) {
    skip_space_and_comments();
    const std::size_t at = offset_;
    std::size_t v = 0;
    int digits = 0;
    while (std::isdigit(in_.peek())) {
      v = v * 10 + static_cast<std::size_t>(get() - '0');
      if (++digits > 9) throw FormatError("offset " + std::to_string(at) + ": " + what + " too large");
    }
    if (digits == 0) throw FormatError("offset " + std::to_string(at) + ": expected " + what);
    return v;
  }

 private:
  std::istream& in_;
  std::size_t offset_ = 0;
};

std::size_t to_byte(double v) { return static_cast<std::size_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)); }

RawImage load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  try {
    return read_pnm(in);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void save(const std::filesystem::path& path, const RawImage& img) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  write_pnm(out, img);
}

}  // namespace

RawImage read_pnm(std::istream& in) {
  HeaderReader h(in);
  const int p = h.get(), kind = h.get();
  if (p != 'P' || (kind != '5' && kind != '6')) throw FormatError("offset 0: expected magic P5 or P6");
  RawImage img;
  img.channels = kind == '5' ? 1 : 3;
  img.width = h.number("width");
  img.height = h.number("height");
  img.maxval = h.number("maxval");
  if (img.width == 0 || img.height == 0) throw FormatError("offset " + std::to_string(h.offset()) + ": zero image extent");
  if (img.maxval == 0 || img.maxval > 255) {
    throw FormatError("offset " + std::to_string(h.offset()) + ": maxval " + std::to_string(img.maxval) +
                      " is not an 8-bit depth");
  }
  const int sep = h.get();
  if (sep == EOF || !std::isspace(sep)) {
    throw FormatError("offset " + std::to_string(h.offset()) + ": expected whitespace after maxval");
  }
  const std::size_t need = img.width * img.height * img.channels;
  img.pixels.resize(need);
  in.read(reinterpret_cast<char*>(img.pixels.data()), static_cast<std::streamsize>(need));
  const auto got = static_cast<std::size_t>(in.gcount());
  if (got != need) {
    throw FormatError("offset " + std::to_string(h.offset() + got) + ": truncated payload, expected " +
                      std::to_string(need) + " bytes, got " + std::to_string(got));
  }
  return img;
}

void write_pnm(std::ostream& out, const RawImage& img) {
  if (img.channels != 1 && img.channels != 3) throw std::invalid_argument("netpbm images have 1 or 3 channels");
  if (img.pixels.size() != img.width * img.height * img.channels) throw DimensionError("pixel buffer size mismatch");
  out << (img.channels == 1 ? "P5" : "P6") << '\n' << img.width << ' ' << img.height << '\n' << img.maxval << '\n';
  out.write(reinterpret_cast<const char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
  if (!out) throw std::runtime_error("failed writing netpbm image");
}

Tensor read_gray(const std::filesystem::path& path) {
  const RawImage img = load(path);
  if (img.channels != 1) throw FormatError(path.string() + ": expected a P5 grayscale image");
  Tensor t({img.height, img.width});
  for (std::size_t i = 0; i < t.numel(); ++i) t[i] = img.pixels[i] / static_cast<double>(img.maxval);
  return t;
}

Tensor read_mask(const std::filesystem::path& path) {
  Tensor t = read_gray(path);
  for (double& v : t.data()) v = v * 255.0 >= 128.0 - 1e-9 ? 1.0 : 0.0;
  return t;
}

void write_mask(const std::filesystem::path& path, const Tensor& mask) {
  if (mask.rank() != 2) throw DimensionError("write_mask expects H×W, got " + shape_str(mask.shape()));
  RawImage img{mask.dim(1), mask.dim(0), 1, 255, {}};
  img.pixels.resize(mask.numel());
  for (std::size_t i = 0; i < mask.numel(); ++i) img.pixels[i] = static_cast<unsigned char>(to_byte(mask[i]));
  save(path, img);
}

Tensor read_frame(const std::filesystem::path& path) {
  const RawImage img = load(path);
  if (img.channels != 3) throw FormatError(path.string() + ": expected a P6 colour image");
  Tensor t({3, img.height, img.width});
  const std::size_t plane = img.height * img.width;
  for (std::size_t i = 0; i < plane; ++i)
    for (std::size_t c = 0; c < 3; ++c) t[c * plane + i] = img.pixels[i * 3 + c] / static_cast<double>(img.maxval);
  return t;
}

void write_frame(const std::filesystem::path& path, const Tensor& frame) {
  if (frame.rank() != 3 || frame.dim(0) != 3) throw DimensionError("write_frame expects 3×H×W, got " + shape_str(frame.shape()));
  const std::size_t plane = frame.dim(1) * frame.dim(2);
  RawImage img{frame.dim(2), frame.dim(1), 3, 255, std::vector<unsigned char>(plane * 3)};
  for (std::size_t i = 0; i < plane; ++i)
    for (std::size_t c = 0; c < 3; ++c) img.pixels[i * 3 + c] = static_cast<unsigned char>(to_byte(frame[c * plane + i]));
  save(path, img);
}

Tensor quantize8(const Tensor& t) {
  Tensor out(t.shape());
  for (std::size_t i = 0; i < t.numel(); ++i) out[i] = static_cast<double>(to_byte(t[i])) / 255.0;
  return out;
}

}  // namespace sampm::io
