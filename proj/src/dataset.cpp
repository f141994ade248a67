#include "sampm/dataset.hpp"

#include <cstdio>
#include <fstream>
#include <stdexcept>

#include "sampm/netpbm.hpp"

namespace sampm::data {

namespace fs = std::filesystem;

std::string frame_name(std::size_t index, const char* ext) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%05zu.%s", index, ext);
  return buf;
}

void write_sequence(const fs::path& root, const synth::SequenceSample& s) {
  if (s.frames.size() != s.masks.size()) throw std::invalid_argument("sequence " + s.id + " has unequal frame/mask counts");
  fs::create_directories(root / s.id / "frames");
  fs::create_directories(root / s.id / "masks");
  for (std::size_t t = 0; t < s.frames.size(); ++t) {
    io::write_frame(root / s.id / "frames" / frame_name(t, "ppm"), s.frames[t]);
    io::write_mask(root / s.id / "masks" / frame_name(t, "pgm"), s.masks[t]);
  }
}

void write_dataset(const fs::path& root, const std::vector<synth::SequenceSample>& seqs) {
  fs::create_directories(root);
  std::ofstream index(root / kIndexFile);
  if (!index) throw std::runtime_error("cannot write " + (root / kIndexFile).string());
  for (const auto& s : seqs) {
    write_sequence(root, s);
    index << s.id << '\n';
  }
}

std::vector<std::string> read_index(const fs::path& root) {
  std::ifstream in(root / kIndexFile);
  if (!in) throw std::runtime_error("missing dataset index " + (root / kIndexFile).string());
  std::vector<std::string> ids;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) ids.push_back(line);
  }
  return ids;
}

synth::SequenceSample read_sequence(const fs::path& root, const std::string& id) {
  synth::SequenceSample s;
  s.id = id;
  for (std::size_t t = 0;; ++t) {
    const fs::path f = root / id / "frames" / frame_name(t, "ppm");
    if (!fs::exists(f)) break;
    s.frames.push_back(io::read_frame(f));
    s.masks.push_back(io::read_mask(root / id / "masks" / frame_name(t, "pgm")));
  }
  if (s.frames.empty()) throw std::runtime_error("sequence " + (root / id).string() + " has no frames");
  return s;
}

std::vector<synth::SequenceSample> read_dataset(const fs::path& root) {
  std::vector<synth::SequenceSample> out;
  for (const std::string& id : read_index(root)) out.push_back(read_sequence(root, id));
  return out;
}

}  // namespace sampm::data
