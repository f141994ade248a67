#include "sampm/config.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

#include "sampm/params.hpp"

namespace sampm {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const char* want) {
  throw ConfigError("key '" + key + "': cannot parse '" + value + "' as " + want);
}

template <class T>
T parse_number(const std::string& key, const std::string& v, const char* want) {
  T out{};
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size() || v.empty()) bad_value(key, v, want);
  return out;
}

void parse_into(const std::string& key, const std::string& v, std::size_t& out) {
  out = parse_number<std::size_t>(key, v, "a nonnegative integer");
}
static_assert(std::is_same_v<std::uint64_t, std::size_t>, "seed fields share the size_t parser");
void parse_into(const std::string& key, const std::string& v, double& out) {
  out = parse_number<double>(key, v, "a real number");
  if (!std::isfinite(out)) bad_value(key, v, "a finite real number");
}
void parse_into(const std::string& key, const std::string& v, bool& out) {
  if (v == "true" || v == "1") out = true;
  else if (v == "false" || v == "0") out = false;
  else bad_value(key, v, "a boolean (true/false)");
}
void parse_into(const std::string& key, const std::string& v, ad::Activation& out) {
  if (v == "gelu") out = ad::Activation::kGelu;
  else if (v == "relu") out = ad::Activation::kRelu;
  else bad_value(key, v, "an activation (gelu/relu)");
}
void parse_into(const std::string& key, const std::string& v, std::vector<std::size_t>& out) {
  out.clear();
  if (v.empty() || v == "none") return;
  std::istringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_number<std::size_t>(key, trim(item), "a list of integers"));
}

std::string format(std::size_t v) { return std::to_string(v); }
std::string format(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}
std::string format(bool v) { return v ? "true" : "false"; }
std::string format(ad::Activation a) { return a == ad::Activation::kGelu ? "gelu" : "relu"; }
std::string format(const std::vector<std::size_t>& v) {
  if (v.empty()) return "none";
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

struct Field {
  std::string name;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <class Access>
Field field(std::string name, Access access) {
  return {name,
          [access, name](RunConfig& c, const std::string& v) { parse_into(name, v, access(c)); },
          [access](const RunConfig& c) { return format(access(const_cast<RunConfig&>(c))); }};
}

#define SAMPM_FIELD(key, member) field(key, [](RunConfig& c) -> auto& { return c.member; })

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      SAMPM_FIELD("seed", seed),
      SAMPM_FIELD("image_size", encoder.image_size),
      SAMPM_FIELD("downscale", encoder.downscale),
      SAMPM_FIELD("embed_dim", encoder.embed_dim),
      SAMPM_FIELD("mask_subgrid", encoder.mask_subgrid),
      SAMPM_FIELD("activation", encoder.act),
      SAMPM_FIELD("ln_eps", encoder.ln_eps),
      SAMPM_FIELD("attn_dim", pm.attn_dim),
      SAMPM_FIELD("affinity_dim", pm.affinity_dim),
      SAMPM_FIELD("mlp_ratio", pm.mlp_ratio),
      SAMPM_FIELD("use_mpam", pm.use_mpam),
      SAMPM_FIELD("use_positional", pm.use_positional),
      SAMPM_FIELD("key_with_mask", pm.key_with_mask),
      SAMPM_FIELD("tie_key_init", pm.tie_key_init),
      SAMPM_FIELD("pe_gate_init", pm.pe_gate_init),
      SAMPM_FIELD("pe_std", pm.pe_std),
      SAMPM_FIELD("memory_length", memory_length),
      SAMPM_FIELD("frames_per_sample", frames_per_sample),
      SAMPM_FIELD("max_frame_gap", max_frame_gap),
      SAMPM_FIELD("memory_grad", memory_grad),
      SAMPM_FIELD("synth.octaves", synth.octaves),
      SAMPM_FIELD("synth.base_cell", synth.base_cell),
      SAMPM_FIELD("synth.texture_amplitude", synth.texture_amplitude),
      SAMPM_FIELD("synth.tint_shift", synth.tint_shift),
      SAMPM_FIELD("synth.radius_min", synth.radius_min),
      SAMPM_FIELD("synth.radius_max", synth.radius_max),
      SAMPM_FIELD("synth.wobble", synth.wobble),
      SAMPM_FIELD("synth.speed", synth.speed),
      SAMPM_FIELD("synth.jitter", synth.jitter),
      SAMPM_FIELD("synth.length", synth.length),
      SAMPM_FIELD("synth.contrast", synth.contrast),
      SAMPM_FIELD("data_seed", data_seed),
      SAMPM_FIELD("train_sequences", train_sequences),
      SAMPM_FIELD("heldout_sequences", heldout_sequences),
      SAMPM_FIELD("static_count", static_count),
      SAMPM_FIELD("warmup_contrast", warmup_contrast),
      SAMPM_FIELD("batch_size", batch_size),
      SAMPM_FIELD("weight_decay", weight_decay),
      SAMPM_FIELD("beta1", beta1),
      SAMPM_FIELD("beta2", beta2),
      SAMPM_FIELD("adam_eps", adam_eps),
      SAMPM_FIELD("grad_clip", grad_clip),
      SAMPM_FIELD("iteration_multiplier", iteration_multiplier),
      SAMPM_FIELD("warmup.lr", warmup.lr),
      SAMPM_FIELD("warmup.iterations", warmup.iterations),
      SAMPM_FIELD("warmup.milestones", warmup.milestones),
      SAMPM_FIELD("pretrain.lr", pretrain.lr),
      SAMPM_FIELD("pretrain.iterations", pretrain.iterations),
      SAMPM_FIELD("pretrain.milestones", pretrain.milestones),
      SAMPM_FIELD("main.lr", main.lr),
      SAMPM_FIELD("main.iterations", main.iterations),
      SAMPM_FIELD("main.milestones", main.milestones),
      SAMPM_FIELD("pretrain_jitter", pretrain_jitter),
      SAMPM_FIELD("augment", augment),
      SAMPM_FIELD("augment.affine", augment_ops.affine),
      SAMPM_FIELD("augment.hflip", augment_ops.hflip),
      SAMPM_FIELD("augment.color_jitter", augment_ops.color_jitter),
      SAMPM_FIELD("augment.grayscale", augment_ops.grayscale),
      SAMPM_FIELD("augment.blur", augment_ops.gaussian_blur),
      SAMPM_FIELD("prompt_drop", prompt_drop),
      SAMPM_FIELD("loss.focal", loss.weights.focal),
      SAMPM_FIELD("loss.dice", loss.weights.dice),
      SAMPM_FIELD("loss.iou_mse", loss.weights.iou_mse),
      SAMPM_FIELD("loss.alpha", loss.focal.alpha),
      SAMPM_FIELD("loss.gamma", loss.focal.gamma),
      SAMPM_FIELD("loss.dice_smooth", loss.dice_smooth),
      SAMPM_FIELD("loss.iou_threshold", loss.iou_threshold),
  };
  return table;
}

#undef SAMPM_FIELD

}  // namespace

void RunConfig::set(const std::string& key, const std::string& value) {
  for (const Field& f : fields()) {
    if (f.name == key) {
      f.set(*this, value);
      return;
    }
  }
  throw ConfigError("unknown config key '" + key + "'");
}

std::vector<std::string> RunConfig::keys() {
  std::vector<std::string> out;
  for (const Field& f : fields()) out.push_back(f.name);
  return out;
}

std::string RunConfig::to_text() const {
  std::string s;
  for (const Field& f : fields()) s += f.name + " = " + f.get(*this) + "\n";
  return s;
}

std::string RunConfig::hash() const {
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(to_text())));
  return buf;
}

void RunConfig::validate() const {
  try {
    encoder.validate();
    synth.validate();
    loss.weights.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (synth.image_size != encoder.image_size) {
    throw ConfigError("image_size " + std::to_string(encoder.image_size) + " differs from the generator's " +
                      std::to_string(synth.image_size));
  }
  if (memory_length == 0) throw ConfigError("memory_length must be at least 1");
  if (frames_per_sample < 2) throw ConfigError("frames_per_sample must be at least 2");
  if (max_frame_gap == 0) throw ConfigError("max_frame_gap must be at least 1");
  if ((frames_per_sample - 1) * max_frame_gap >= synth.length && synth.length < frames_per_sample) {
    throw ConfigError("sequences are shorter than one training sample");
  }
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  if (!(iteration_multiplier > 0)) throw ConfigError("iteration_multiplier must be positive");
  if (!(beta1 >= 0 && beta1 < 1 && beta2 >= 0 && beta2 < 1)) throw ConfigError("betas must lie in [0,1)");
  if (adam_eps <= 0 || weight_decay < 0) throw ConfigError("adam_eps must be positive and weight_decay nonnegative");
  for (const StageSettings* s : {&warmup, &pretrain, &main}) {
    if (!(s->lr > 0)) throw ConfigError("learning rates must be positive");
  }
  if (!(prompt_drop >= 0 && prompt_drop <= 1)) throw ConfigError("prompt_drop must lie in [0,1]");
  if (!(pretrain_jitter >= 0 && pretrain_jitter <= 0.25)) throw ConfigError("pretrain_jitter must lie in [0,0.25]");
  if (!(warmup_contrast >= 0 && warmup_contrast <= 1)) throw ConfigError("warmup_contrast must lie in [0,1]");
  if (pm.attn_dim == 0 || pm.affinity_dim == 0 || pm.mlp_ratio == 0) throw ConfigError("module widths must be positive");
}

pm::PropagationConfig RunConfig::pm_config() const {
  pm::PropagationConfig p = pm;
  p.embed_dim = encoder.embed_dim;
  p.grid = encoder.grid();
  p.act = encoder.act;
  p.ln_eps = encoder.ln_eps;
  return p;
}

StageSettings RunConfig::scaled(const StageSettings& s) const {
  auto scale = [&](std::size_t n) { return static_cast<std::size_t>(std::llround(static_cast<double>(n) * iteration_multiplier)); };
  StageSettings out{s.lr, std::max<std::size_t>(1, scale(s.iterations)), {}};
  for (std::size_t m : s.milestones) out.milestones.push_back(scale(m));
  return out;
}

RunConfig parse_config(const std::string& text, const std::string& origin) {
  RunConfig cfg;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string t = trim(line);
    if (t.empty()) continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected 'key = value'");
    try {
      cfg.set(trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path.string());
}

void apply_overrides(RunConfig& cfg, const std::vector<std::string>& overrides) {
  for (std::string o : overrides) {
    while (!o.empty() && o.front() == '-') o.erase(o.begin());
    const auto eq = o.find('=');
    if (eq == std::string::npos) throw ConfigError("override '" + o + "' is not key=value");
    cfg.set(trim(o.substr(0, eq)), trim(o.substr(eq + 1)));
  }
}

}  // namespace sampm
