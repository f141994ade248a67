// Command-line front end: data synthesis, the three training stages,
// propagation over a dataset, evaluation, gradient checks and parameter counts.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "sampm/config.hpp"
#include "sampm/dataset.hpp"
#include "sampm/netpbm.hpp"
#include "sampm/op_suite.hpp"
#include "sampm/pipeline.hpp"
#include "sampm/training.hpp"

namespace fs = std::filesystem;
using namespace sampm;

namespace {

constexpr int kOk = 0;
constexpr int kValidation = 1;
constexpr int kRuntime = 2;

struct Common {
  std::string config;
  std::vector<std::string> sets;
};

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--config", c.config, "key = value run configuration file")->check(CLI::ExistingFile);
  sub->add_option("--set", c.sets, "override one config key (key=value), repeatable");
  sub->allow_extras();
}

RunConfig resolve(const Common& c, const CLI::App* sub) {
  RunConfig cfg = c.config.empty() ? RunConfig{} : load_config(c.config);
  std::vector<std::string> overrides = c.sets;
  for (const std::string& extra : sub->remaining()) {
    if (!extra.starts_with("--") || extra.find('=') == std::string::npos) {
      throw ConfigError("unrecognised argument '" + extra + "'");
    }
    overrides.push_back(extra);
  }
  apply_overrides(cfg, overrides);
  cfg.validate();
  return cfg;
}

void log_line(const std::string& s) { std::cerr << s << std::endl; }

std::string command_line(int argc, char** argv) {
  std::string s;
  for (int i = 0; i < argc; ++i) s += (i ? " " : "") + std::string(argv[i]);
  return s;
}

void print_report(const char* label, const metrics::MetricReport& r) {
  std::printf("%s S_alpha=%.4f F_beta_w=%.4f E_phi=%.4f MAE=%.4f mDice=%.4f mIoU=%.4f frames=%zu\n", label, r.s_alpha,
              r.f_beta_w, r.e_phi, r.mae, r.m_dice, r.m_iou, r.frames_scored);
}

ParamStore load_stage_params(const std::string& dir) {
  if (fs::exists(fs::path(dir) / "params" / "manifest.txt")) return load_params(fs::path(dir) / "params");
  return load_params(dir);
}

int cmd_synth(const RunConfig& cfg, const fs::path& out) {
  data::write_dataset(out / "train", train::training_sequences(cfg));
  data::write_dataset(out / "heldout", train::heldout_sequences(cfg));
  std::printf("wrote %zu training and %zu held-out sequences under %s\n", cfg.train_sequences, cfg.heldout_sequences,
              out.string().c_str());
  return kOk;
}

int cmd_stage(const RunConfig& cfg, train::Stage stage, const std::string& from, const fs::path& out) {
  ParamStore start = stage == train::Stage::kWarmup ? train::init_stub_params(cfg) : load_stage_params(from);
  const auto o = pipeline::run_stage(cfg, stage, std::move(start), out / "checkpoints" / train::stage_name(stage), log_line);
  const auto& l = o.monitor.losses;
  std::printf("%s: %zu iterations, first loss %.5f, last loss %.5f\n", train::stage_name(stage), l.size(),
              l.empty() ? 0.0 : l.front(), l.empty() ? 0.0 : l.back());
  if (stage == train::Stage::kWarmup) std::printf("warmup single-frame mDice %.4f\n", pipeline::warmup_dice(o.params, cfg));
  if (stage != train::Stage::kWarmup && o.stub_checksum_before != o.stub_checksum_after) {
    std::fprintf(stderr, "error: frozen stub parameters changed during %s\n", train::stage_name(stage));
    return kRuntime;
  }
  return kOk;
}

int cmd_full(const RunConfig& cfg, const fs::path& out) {
  const auto t0 = std::chrono::steady_clock::now();
  const pipeline::FullRun run = pipeline::run_full(cfg, out, log_line);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  print_report("train", run.train.mean);
  print_report("heldout", run.heldout.mean);
  std::printf("runtime %.1f s\n", secs);
  return kOk;
}

int cmd_infer(const RunConfig& cfg, const std::string& checkpoint, const fs::path& data_root, const fs::path& out) {
  const ParamStore params = load_stage_params(checkpoint);
  const auto seqs = data::read_dataset(data_root);
  const auto eval = pipeline::infer_and_evaluate(params, cfg, seqs, out / "predictions");
  std::ofstream tsv(out / "metrics.tsv");
  metrics::write_table(tsv, eval.rows);
  print_report("mean", eval.mean);
  std::printf("max memory length %zu, image encoder calls per frame %s\n", eval.worst.max_memory_length,
              eval.one_encode_per_frame ? "1" : "not 1");
  return kOk;
}

int cmd_eval(const fs::path& pred_root, const fs::path& gt_root, const std::string& out_file) {
  std::vector<metrics::NamedReport> rows;
  for (const std::string& id : data::read_index(gt_root)) {
    const synth::SequenceSample gt = data::read_sequence(gt_root, id);
    std::vector<Tensor> preds{gt.masks[0]};
    for (std::size_t t = 1; t < gt.masks.size(); ++t) {
      preds.push_back(io::read_gray(pred_root / id / data::frame_name(t, "pgm")));
    }
    rows.push_back({id, metrics::evaluate_sequence(preds, gt.masks, true)});
  }
  metrics::write_table(std::cout, rows);
  if (!out_file.empty()) {
    std::ofstream f(out_file);
    metrics::write_table(f, rows);
    if (!f) throw std::runtime_error("cannot write " + out_file);
  }
  return kOk;
}

int cmd_gradcheck(std::size_t seeds, const std::string& filter) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto results = suite::run(seeds, {}, filter);
  bool ok = !results.empty();
  for (const auto& r : results) {
    std::printf("%-22s seed %llu  max_rel_error %.3e  %s\n", r.name.c_str(), static_cast<unsigned long long>(r.seed),
                r.report.max_rel_error, r.report.passed ? "ok" : "FAILED");
    ok = ok && r.report.passed;
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::printf("%zu checks in %.1f s: %s\n", results.size(), secs, ok ? "all passed" : "failures");
  return ok ? kOk : kRuntime;
}

int cmd_paramcount(const RunConfig& cfg) {
  auto count = [](pm::PropagationConfig c) {
    ParamStore s;
    Rng rng(0);
    pm::init_params(s, c, rng);
    return pm::count_parameters(s);
  };
  const std::size_t here = count(cfg.pm_config());
  pm::PropagationConfig large = cfg.pm_config();
  large.embed_dim = 256;
  large.affinity_dim = 128;
  const std::size_t sam_scale = count(large);
  std::printf("propagation parameters at this config: %zu\n", here);
  std::printf("propagation parameters at embed_dim 256: %zu\n", sam_scale);
  const bool ok = here < 1000000 && sam_scale < 1000000;
  std::printf("below one million: %s\n", ok ? "yes" : "no");
  return ok ? kOk : kRuntime;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Mask propagation for video camouflaged object segmentation"};
  app.require_subcommand(1);

  Common common;
  std::string out = "run", from, checkpoint, data_root, pred_dir, gt_dir, out_file, filter;
  std::size_t seeds = 5;
  bool full = false;

  auto* synth = app.add_subcommand("synth", "write training and held-out synthetic sequences");
  add_common(synth, common);
  synth->add_option("--out", out, "output directory")->required();

  auto* warmup = app.add_subcommand("warmup", "fit the stub encoders and decoder on static images");
  add_common(warmup, common);
  warmup->add_option("--out", out, "output directory");

  auto* pretrain = app.add_subcommand("pretrain", "fit the propagation module on pseudo-videos");
  add_common(pretrain, common);
  pretrain->add_option("--out", out, "output directory");
  pretrain->add_option("--from", from, "warmup checkpoint directory")->required();

  auto* trainc = app.add_subcommand("train", "main-stage training on sequences (or every stage with --full)");
  add_common(trainc, common);
  trainc->add_option("--out", out, "output directory");
  auto* from_opt = trainc->add_option("--from", from, "pretrain checkpoint directory");
  trainc->add_flag("--full", full, "run warmup, pretrain, main and evaluation")->excludes(from_opt);

  auto* inferc = app.add_subcommand("infer", "propagate masks through every sequence of a dataset");
  add_common(inferc, common);
  inferc->add_option("--checkpoint", checkpoint, "checkpoint directory")->required();
  inferc->add_option("--data", data_root, "dataset root with index.txt")->required();
  inferc->add_option("--out", out, "output directory");

  auto* evalc = app.add_subcommand("eval", "score predicted masks against ground truth");
  evalc->add_option("--pred", pred_dir, "prediction root (<id>/%05d.pgm)")->required();
  evalc->add_option("--gt", gt_dir, "dataset root with index.txt")->required();
  evalc->add_option("--out", out_file, "also write the table to this file");

  auto* grad = app.add_subcommand("gradcheck", "finite-difference check of every differentiable op");
  grad->add_option("--seeds", seeds, "random instances per op")->check(CLI::PositiveNumber);
  grad->add_option("--filter", filter, "only ops whose name contains this text");

  auto* paramc = app.add_subcommand("paramcount", "count propagation module parameters");
  add_common(paramc, common);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kValidation;
  }

  try {
    auto with_config = [&](CLI::App* sub) { return resolve(common, sub); };
    auto stamp = [&](const RunConfig& cfg) { pipeline::write_run_stamp(out, cfg, command_line(argc, argv)); };
    if (synth->parsed()) {
      const RunConfig cfg = with_config(synth);
      stamp(cfg);
      return cmd_synth(cfg, out);
    }
    if (warmup->parsed()) {
      const RunConfig cfg = with_config(warmup);
      stamp(cfg);
      return cmd_stage(cfg, train::Stage::kWarmup, {}, out);
    }
    if (pretrain->parsed()) {
      const RunConfig cfg = with_config(pretrain);
      stamp(cfg);
      return cmd_stage(cfg, train::Stage::kPretrain, from, out);
    }
    if (trainc->parsed()) {
      const RunConfig cfg = with_config(trainc);
      if (!full && from.empty()) throw ConfigError("train needs --from CHECKPOINT or --full");
      stamp(cfg);
      return full ? cmd_full(cfg, out) : cmd_stage(cfg, train::Stage::kMain, from, out);
    }
    if (inferc->parsed()) {
      const RunConfig cfg = with_config(inferc);
      stamp(cfg);
      return cmd_infer(cfg, checkpoint, data_root, out);
    }
    if (evalc->parsed()) return cmd_eval(pred_dir, gt_dir, out_file);
    if (grad->parsed()) return cmd_gradcheck(seeds, filter);
    if (paramc->parsed()) return cmd_paramcount(with_config(paramc));
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return kValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntime;
  }
  return kValidation;
}
