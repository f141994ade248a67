#include "sampm/training.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "sampm/augment.hpp"
#include "sampm/losses.hpp"
#include "sampm/memory_bank.hpp"
#include "sampm/propagation.hpp"
#include "sampm/sam_stubs.hpp"

namespace sampm::train {

namespace fs = std::filesystem;
using ad::Var;

namespace {

struct Clip {
  std::vector<Tensor> frames;
  std::vector<Tensor> masks;
};

optim::AdamWConfig adam_config(const RunConfig& cfg) {
  return {cfg.beta1, cfg.beta2, cfg.adam_eps, cfg.weight_decay};
}

std::uint64_t stage_salt(Stage s) { return 0x5157 + static_cast<std::uint64_t>(s) * 0x1000193; }

stubs::EncoderConfig encoder_config(const RunConfig& cfg, Stage stage) {
  stubs::EncoderConfig e = cfg.encoder;
  e.frozen = stage != Stage::kWarmup;
  return e;
}

Clip augmented(Clip c, const RunConfig& cfg, Rng& rng) {
  const augment::AugmentParams p = augment::draw_params(cfg.augment_ops, rng);
  if (!cfg.augment) return c;
  synth::SequenceSample s{"", std::move(c.frames), std::move(c.masks)};
  s = augment::apply(s, p);
  return {std::move(s.frames), std::move(s.masks)};
}

// Three (or frames_per_sample) jittered copies of one static image.
Clip pseudo_video(const synth::StaticSample& s, std::size_t count, double jitter, Rng& rng) {
  Clip c;
  for (std::size_t k = 0; k < count; ++k) {
    const augment::AffineParams a{rng.uniform(-5.0, 5.0) * jitter / 0.05, 1.0 + rng.uniform(-jitter, jitter),
                                  rng.uniform(-jitter, jitter), rng.uniform(-jitter, jitter)};
    c.frames.push_back(augment::warp_affine(s.frame, a, augment::Interp::kBilinear));
    c.masks.push_back(augment::warp_affine(s.mask, a, augment::Interp::kNearest));
  }
  return c;
}

// Ordered frames with gaps in [1, max_gap] from one sequence.
Clip sequence_clip(const synth::SequenceSample& s, std::size_t count, std::size_t max_gap, Rng& rng) {
  std::vector<std::size_t> gaps(count - 1);
  std::size_t span = 0;
  for (auto& g : gaps) span += g = 1 + rng.index(max_gap);
  while (span >= s.frames.size()) {
    // Shrink the largest gap until the clip fits.
    auto it = std::max_element(gaps.begin(), gaps.end());
    if (*it == 1) throw std::invalid_argument("sequence " + s.id + " is too short for a training clip");
    --*it;
    --span;
  }
  std::size_t t = rng.index(s.frames.size() - span);
  Clip c;
  for (std::size_t k = 0; k < count; ++k) {
    c.frames.push_back(s.frames[t]);
    c.masks.push_back(s.masks[t]);
    if (k + 1 < count) t += gaps[k];
  }
  return c;
}

Var warmup_loss(ad::Tape& tape, const Bound& p, const RunConfig& cfg, const stubs::EncoderConfig& enc,
                const TrainData& data, Rng& rng) {
  const synth::StaticSample& s = data.statics[rng.index(data.statics.size())];
  Clip c = augmented({{s.frame}, {s.mask}}, cfg, rng);
  const bool drop = rng.bernoulli(cfg.prompt_drop);
  const double j = cfg.pretrain_jitter;
  const augment::AffineParams shift{rng.uniform(-5.0, 5.0), 1.0 + rng.uniform(-2 * j, 2 * j), rng.uniform(-j, j),
                                    rng.uniform(-j, j)};
  const double sigma = rng.uniform(0.0, 2.0);

  Var img = stubs::image_encode(p, enc, tape.constant(c.frames[0]));
  Var dense;
  if (drop) {
    dense = tape.constant(Tensor(img.shape(), 0.0));
  } else {
    Tensor prompt = augment::warp_affine(c.masks[0], shift, augment::Interp::kNearest);
    prompt = augment::gaussian_blur(prompt, sigma);
    dense = stubs::mask_encode(p, enc, tape.constant(prompt));
  }
  return loss::total_loss(stubs::decode(p, enc, img, dense), c.masks[0], cfg.loss).total;
}

Var clip_loss(ad::Tape& tape, const Bound& p, const RunConfig& cfg, const stubs::EncoderConfig& enc, const Clip& c) {
  const pm::PropagationConfig pmc = cfg.pm_config();
  const std::size_t last = c.frames.size() - 1;
  std::vector<Var> imgs;
  for (const Tensor& f : c.frames) imgs.push_back(stubs::image_encode(p, enc, tape.constant(f)));

  memory::VarBank bank(cfg.memory_length);
  bank.push({0, imgs[0], stubs::mask_encode(p, enc, tape.constant(c.masks[0]))});
  for (std::size_t k = 1; k < last; ++k) {
    const stubs::DecodeOutput out = stubs::decode(p, enc, imgs[k], pm::pm_forward(p, pmc, imgs[k], bank));
    Var soft = ad::sigmoid(out.logits);
    if (!cfg.memory_grad) soft = ad::detach(soft);
    bank.push({k, imgs[k], stubs::mask_encode(p, enc, soft)});
  }
  const stubs::DecodeOutput out = stubs::decode(p, enc, imgs[last], pm::pm_forward(p, pmc, imgs[last], bank));
  return loss::total_loss(out, c.masks[last], cfg.loss).total;
}

Var sample_loss(ad::Tape& tape, const Bound& p, const RunConfig& cfg, Stage stage, const TrainData& data, Rng& rng) {
  const stubs::EncoderConfig enc = encoder_config(cfg, stage);
  switch (stage) {
    case Stage::kWarmup:
      return warmup_loss(tape, p, cfg, enc, data, rng);
    case Stage::kPretrain: {
      const synth::StaticSample& s = data.statics[rng.index(data.statics.size())];
      const Clip c = augmented(pseudo_video(s, cfg.frames_per_sample, cfg.pretrain_jitter, rng), cfg, rng);
      return clip_loss(tape, p, cfg, enc, c);
    }
    case Stage::kMain: {
      const synth::SequenceSample& s = data.sequences[rng.index(data.sequences.size())];
      const Clip c = augmented(sequence_clip(s, cfg.frames_per_sample, cfg.max_frame_gap, rng), cfg, rng);
      return clip_loss(tape, p, cfg, enc, c);
    }
  }
  throw std::logic_error("unknown stage");
}

synth::SynthConfig with_contrast(synth::SynthConfig s, double contrast) {
  s.contrast = contrast;
  return s;
}

std::vector<synth::SequenceSample> sequences(const RunConfig& cfg, std::size_t count, std::uint64_t base) {
  std::vector<synth::SequenceSample> out;
  for (std::size_t i = 0; i < count; ++i) out.push_back(synth::generate_sequence(cfg.synth, cfg.data_seed + base + i));
  return out;
}

}  // namespace

const char* stage_name(Stage s) {
  switch (s) {
    case Stage::kWarmup: return "warmup";
    case Stage::kPretrain: return "pretrain";
    case Stage::kMain: return "main";
  }
  return "?";
}

Stage parse_stage(const std::string& name) {
  if (name == "warmup") return Stage::kWarmup;
  if (name == "pretrain") return Stage::kPretrain;
  if (name == "main") return Stage::kMain;
  throw std::invalid_argument("unknown stage '" + name + "'");
}

std::vector<synth::StaticSample> warmup_statics(const RunConfig& cfg) {
  return synth::generate_static_set(with_contrast(cfg.synth, cfg.warmup_contrast), cfg.static_count, cfg.data_seed + 1);
}

std::vector<synth::StaticSample> pretrain_statics(const RunConfig& cfg) {
  return synth::generate_static_set(cfg.synth, cfg.static_count, cfg.data_seed + 2);
}

std::vector<synth::SequenceSample> training_sequences(const RunConfig& cfg) {
  return sequences(cfg, cfg.train_sequences, 100);
}

std::vector<synth::SequenceSample> heldout_sequences(const RunConfig& cfg) {
  return sequences(cfg, cfg.heldout_sequences, 500);
}

TrainData stage_data(const RunConfig& cfg, Stage stage) {
  TrainData d;
  switch (stage) {
    case Stage::kWarmup: d.statics = warmup_statics(cfg); break;
    case Stage::kPretrain: d.statics = pretrain_statics(cfg); break;
    case Stage::kMain: d.sequences = training_sequences(cfg); break;
  }
  return d;
}

ParamStore init_stub_params(const RunConfig& cfg) {
  ParamStore store;
  Rng rng(cfg.seed);
  stubs::init_params(store, encoder_config(cfg, Stage::kWarmup), rng);
  return store;
}

StageSettings stage_settings(const RunConfig& cfg, Stage stage) {
  switch (stage) {
    case Stage::kWarmup: return cfg.scaled(cfg.warmup);
    case Stage::kPretrain: return cfg.scaled(cfg.pretrain);
    case Stage::kMain: return cfg.scaled(cfg.main);
  }
  throw std::logic_error("unknown stage");
}

TrainState begin_stage(const RunConfig& cfg, Stage stage, ParamStore params) {
  cfg.validate();
  TrainState st;
  st.stage = stage;
  st.params = std::move(params);
  if (st.params.count(stubs::kPrefix) == 0) throw std::invalid_argument("stage needs stub parameters");
  st.params.set_frozen(stubs::kPrefix, stage != Stage::kWarmup);
  if (stage == Stage::kWarmup) {
    st.params.set_frozen(pm::kPrefix, true);
  } else if (st.params.count(pm::kPrefix) == 0) {
    if (stage == Stage::kMain) throw std::invalid_argument("main stage needs propagation parameters from pretrain");
    Rng init(cfg.seed ^ 0x9E3779B97F4A7C15ULL);
    pm::init_params(st.params, cfg.pm_config(), init);
  }
  st.opt = optim::AdamW(st.params, adam_config(cfg));
  st.iteration = 0;
  st.rng = Rng(cfg.seed + stage_salt(stage));
  return st;
}

StepResult train_step(const RunConfig& cfg, TrainState& state, const TrainData& data, StageMonitor* monitor) {
  const StageSettings settings = stage_settings(cfg, state.stage);
  StepResult r;
  r.iteration = state.iteration;
  r.lr = optim::multistep_lr(settings.lr, settings.milestones, state.iteration);

  ParamStore grads;
  try {
    ad::Tape tape;
    const Bound p = bind(tape, state.params, BindMode::kRespectFrozen);
    std::vector<Var> losses;
    for (std::size_t b = 0; b < cfg.batch_size; ++b) losses.push_back(sample_loss(tape, p, cfg, state.stage, data, state.rng));
    Var total = ad::scale(ad::sum(ad::concat(losses, 0)), 1.0 / static_cast<double>(cfg.batch_size));
    r.loss = total.value()[0];
    tape.backward(total);
    grads = p.gradients();
  } catch (const NumericError& e) {
    throw NumericError(std::string("divergence at ") + stage_name(state.stage) + " iteration " +
                       std::to_string(state.iteration) + ": " + e.what());
  }
  for (const auto& [name, e] : grads.entries()) {
    if (!e.value.all_finite()) {
      throw NumericError(std::string("divergence at ") + stage_name(state.stage) + " iteration " +
                         std::to_string(state.iteration) + ": non-finite gradient for " + name);
    }
    if (monitor && e.value.l2_norm() > 0) monitor->nonzero_grad.insert(name);
  }
  r.grad_norm = optim::clip_global_norm(grads, cfg.grad_clip);
  state.opt.step(state.params, grads, r.lr);
  ++state.iteration;
  if (monitor) {
    monitor->losses.push_back(r.loss);
    monitor->lrs.push_back(r.lr);
  }
  return r;
}

StageMonitor run_stage(const RunConfig& cfg, TrainState& state, const TrainData& data,
                       const std::function<void(const StepResult&)>& on_step) {
  const StageSettings settings = stage_settings(cfg, state.stage);
  StageMonitor monitor;
  while (state.iteration < settings.iterations) {
    const StepResult r = train_step(cfg, state, data, &monitor);
    if (on_step) on_step(r);
  }
  return monitor;
}

void TrainState::save(const fs::path& dir) const {
  fs::create_directories(dir);
  save_params(dir / "params", params);
  opt.save(dir / "optimizer");
  std::ofstream out(dir / "state.txt");
  out << "stage " << stage_name(stage) << "\niteration " << iteration << "\nrng " << rng.state() << '\n';
  if (!out) throw std::runtime_error("cannot write " + (dir / "state.txt").string());
}

TrainState TrainState::load(const fs::path& dir, const RunConfig& cfg) {
  TrainState st;
  st.params = load_params(dir / "params");
  st.opt = optim::AdamW::load(dir / "optimizer", adam_config(cfg));
  std::ifstream in(dir / "state.txt");
  if (!in) throw std::runtime_error("missing " + (dir / "state.txt").string());
  std::string line;
  bool got_stage = false, got_iter = false, got_rng = false;
  while (std::getline(in, line)) {
    const auto sp = line.find(' ');
    const std::string key = line.substr(0, sp), value = sp == std::string::npos ? "" : line.substr(sp + 1);
    if (key == "stage") st.stage = parse_stage(value), got_stage = true;
    else if (key == "iteration") st.iteration = std::stoull(value), got_iter = true;
    else if (key == "rng") st.rng.set_state(value), got_rng = true;
  }
  if (!got_stage || !got_iter || !got_rng) throw FormatError("incomplete training state in " + dir.string());
  return st;
}

}  // namespace sampm::train
