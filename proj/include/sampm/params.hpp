#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "sampm/autodiff.hpp"
#include "sampm/rng.hpp"
#include "sampm/tensor.hpp"

namespace sampm {

/// Named parameter tensors in deterministic (lexicographic) order, each with a
/// frozen flag. Frozen entries are bound without gradients and never updated.
class ParamStore {
 public:
  struct Entry {
    Tensor value;
    bool frozen = false;
  };

  void add(const std::string& name, Tensor value, bool frozen = false);
  bool contains(std::string_view name) const;
  const Tensor& get(std::string_view name) const;
  Tensor& get(std::string_view name);
  bool frozen(std::string_view name) const;
  void set_frozen(std::string_view prefix, bool frozen);
  void erase_prefix(std::string_view prefix);

  std::vector<std::string> names(std::string_view prefix = {}) const;
  const std::map<std::string, Entry, std::less<>>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }

  /// Total scalar count of entries whose name starts with `prefix`.
  std::size_t count(std::string_view prefix = {}) const;
  /// FNV-1a over names and value bits of entries under `prefix`.
  std::uint64_t checksum(std::string_view prefix = {}) const;

  /// Copy of the entries under `prefix` with values zeroed.
  ParamStore zeros_like(std::string_view prefix = {}) const;

  friend bool operator==(const ParamStore& a, const ParamStore& b);

 private:
  std::map<std::string, Entry, std::less<>> entries_;
};

/// Writes `<dir>/manifest.txt` plus one CPMT1 file per entry.
/// Manifest lines: `name<TAB>e1xe2x...<TAB>frozen(0|1)`; lines starting with '#' are comments.
void save_params(const std::filesystem::path& dir, const ParamStore& store);
ParamStore load_params(const std::filesystem::path& dir);

struct ManifestEntry {
  std::string name;
  Shape shape;
  bool frozen = false;
};
std::vector<ManifestEntry> read_manifest(const std::filesystem::path& dir);

enum class BindMode {
  kRespectFrozen,  // trainable entries get gradients, frozen ones are constants
  kAllTrainable,   // every entry gets a gradient
  kNoGrad,         // everything constant
};

/// Parameters bound as leaves on one tape.
class Bound {
 public:
  ad::Var operator[](std::string_view name) const;
  bool contains(std::string_view name) const { return vars_.find(name) != vars_.end(); }
  /// Binds `name` to an existing variable, replacing any previous binding.
  void set(const std::string& name, ad::Var v) { vars_.insert_or_assign(name, v); }
  const std::map<std::string, ad::Var, std::less<>>& vars() const { return vars_; }

  /// Gradients of every entry that required one, keyed like the store.
  ParamStore gradients() const;

 private:
  friend Bound bind(ad::Tape&, const ParamStore&, BindMode, std::string_view);
  std::map<std::string, ad::Var, std::less<>> vars_;
};

Bound bind(ad::Tape& tape, const ParamStore& store, BindMode mode = BindMode::kRespectFrozen,
           std::string_view prefix = {});

std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ULL);

/// Normal init scaled by 1/sqrt(fan_in).
Tensor init_weight(std::size_t fan_in, std::size_t fan_out, Rng& rng);

}  // namespace sampm
