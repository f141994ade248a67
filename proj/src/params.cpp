#include "sampm/params.hpp"

#include <bit>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace sampm {

namespace fs = std::filesystem;

std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

void ParamStore::add(const std::string& name, Tensor value, bool frozen) {
  if (name.empty() || name.find_first_of(" \t\n/\\") != std::string::npos) {
    throw std::invalid_argument("invalid parameter name '" + name + "'");
  }
  if (!entries_.emplace(name, Entry{std::move(value), frozen}).second) {
    throw std::invalid_argument("duplicate parameter '" + name + "'");
  }
}

bool ParamStore::contains(std::string_view name) const { return entries_.find(name) != entries_.end(); }

const Tensor& ParamStore::get(std::string_view name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw std::out_of_range("unknown parameter '" + std::string(name) + "'");
  return it->second.value;
}

Tensor& ParamStore::get(std::string_view name) {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw std::out_of_range("unknown parameter '" + std::string(name) + "'");
  return it->second.value;
}

bool ParamStore::frozen(std::string_view name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw std::out_of_range("unknown parameter '" + std::string(name) + "'");
  return it->second.frozen;
}

void ParamStore::set_frozen(std::string_view prefix, bool frozen) {
  for (auto& [name, e] : entries_)
    if (name.starts_with(prefix)) e.frozen = frozen;
}

void ParamStore::erase_prefix(std::string_view prefix) {
  std::erase_if(entries_, [&](const auto& kv) { return kv.first.starts_with(prefix); });
}

std::vector<std::string> ParamStore::names(std::string_view prefix) const {
  std::vector<std::string> out;
  for (const auto& [name, e] : entries_)
    if (name.starts_with(prefix)) out.push_back(name);
  return out;
}

std::size_t ParamStore::count(std::string_view prefix) const {
  std::size_t n = 0;
  for (const auto& [name, e] : entries_)
    if (name.starts_with(prefix)) n += e.value.numel();
  return n;
}

std::uint64_t ParamStore::checksum(std::string_view prefix) const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& [name, e] : entries_) {
    if (!name.starts_with(prefix)) continue;
    h = fnv1a(name, h);
    for (double v : e.value.data()) {
      const auto bits = std::bit_cast<std::uint64_t>(v);
      h = fnv1a(std::string_view(reinterpret_cast<const char*>(&bits), sizeof bits), h);
    }
  }
  return h;
}

ParamStore ParamStore::zeros_like(std::string_view prefix) const {
  ParamStore out;
  for (const auto& [name, e] : entries_)
    if (name.starts_with(prefix)) out.add(name, Tensor(e.value.shape(), 0.0), e.frozen);
  return out;
}

bool operator==(const ParamStore& a, const ParamStore& b) {
  if (a.entries_.size() != b.entries_.size()) return false;
  for (auto ia = a.entries_.begin(), ib = b.entries_.begin(); ia != a.entries_.end(); ++ia, ++ib) {
    if (ia->first != ib->first || ia->second.frozen != ib->second.frozen || !(ia->second.value == ib->second.value))
      return false;
  }
  return true;
}

void save_params(const fs::path& dir, const ParamStore& store) {
  fs::create_directories(dir);
  std::ofstream manifest(dir / "manifest.txt");
  if (!manifest) throw std::runtime_error("cannot write " + (dir / "manifest.txt").string());
  manifest << "# name\tshape\tfrozen\n";
  for (const auto& [name, e] : store.entries()) {
    manifest << name << '\t';
    for (std::size_t i = 0; i < e.value.rank(); ++i) manifest << (i ? "x" : "") << e.value.shape()[i];
    manifest << '\t' << (e.frozen ? 1 : 0) << '\n';
    save_tensor(dir / (name + ".cpmt"), e.value);
  }
}

std::vector<ManifestEntry> read_manifest(const fs::path& dir) {
  std::ifstream in(dir / "manifest.txt");
  if (!in) throw std::runtime_error("missing manifest in " + dir.string());
  std::vector<ManifestEntry> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    ManifestEntry e;
    std::string shape, frozen;
    if (!std::getline(ls, e.name, '\t') || !std::getline(ls, shape, '\t') || !std::getline(ls, frozen)) {
      throw FormatError("manifest line " + std::to_string(lineno) + " malformed: '" + line + "'");
    }
    std::istringstream ss(shape);
    std::string ext;
    while (std::getline(ss, ext, 'x')) e.shape.push_back(std::stoull(ext));
    if (frozen != "0" && frozen != "1") throw FormatError("manifest line " + std::to_string(lineno) + ": bad frozen flag");
    e.frozen = frozen == "1";
    out.push_back(std::move(e));
  }
  return out;
}

ParamStore load_params(const fs::path& dir) {
  ParamStore store;
  for (const ManifestEntry& m : read_manifest(dir)) {
    Tensor t = load_tensor(dir / (m.name + ".cpmt"));
    if (t.shape() != m.shape) {
      throw FormatError("parameter " + m.name + " has shape " + shape_str(t.shape()) + ", manifest says " + shape_str(m.shape));
    }
    store.add(m.name, std::move(t), m.frozen);
  }
  return store;
}

ad::Var Bound::operator[](std::string_view name) const {
  auto it = vars_.find(name);
  if (it == vars_.end()) throw std::out_of_range("parameter '" + std::string(name) + "' is not bound");
  return it->second;
}

ParamStore Bound::gradients() const {
  ParamStore out;
  for (const auto& [name, v] : vars_)
    if (v.requires_grad()) out.add(name, v.grad());
  return out;
}

Bound bind(ad::Tape& tape, const ParamStore& store, BindMode mode, std::string_view prefix) {
  Bound b;
  for (const auto& [name, e] : store.entries()) {
    if (!name.starts_with(prefix)) continue;
    const bool grad = mode == BindMode::kAllTrainable || (mode == BindMode::kRespectFrozen && !e.frozen);
    b.vars_.emplace(name, tape.leaf(e.value, grad));
  }
  return b;
}

Tensor init_weight(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  return randn({fan_in, fan_out}, 1.0 / std::sqrt(static_cast<double>(fan_in)), rng);
}

}  // namespace sampm
