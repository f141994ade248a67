#include "sampm/pipeline.hpp"

#include <cstdio>
#include <fstream>

#include "sampm/dataset.hpp"
#include "sampm/netpbm.hpp"

namespace sampm::pipeline {

namespace fs = std::filesystem;

void write_run_stamp(const fs::path& out, const RunConfig& cfg, const std::string& command) {
  fs::create_directories(out);
  std::ofstream stamp(out / "run_stamp.txt");
  stamp << "command=" << command << "\nseed=" << cfg.seed << "\ndata_seed=" << cfg.data_seed
        << "\nconfig_hash=" << cfg.hash() << '\n';
  std::ofstream(out / "config.txt") << cfg.to_text();
  if (!stamp) throw std::runtime_error("cannot write run stamp in " + out.string());
}

StageOutcome run_stage(const RunConfig& cfg, train::Stage stage, ParamStore params, const fs::path& checkpoint_dir,
                       const Log& log) {
  StageOutcome o;
  o.stub_checksum_before = params.checksum(stubs::kPrefix);
  train::TrainState st = train::begin_stage(cfg, stage, std::move(params));
  const train::TrainData data = train::stage_data(cfg, stage);
  const std::size_t total = train::stage_settings(cfg, stage).iterations;
  const std::size_t every = std::max<std::size_t>(1, total / 10);
  o.monitor = train::run_stage(cfg, st, data, [&](const train::StepResult& r) {
    if (log && (r.iteration % every == 0 || r.iteration + 1 == total)) {
      char buf[160];
      std::snprintf(buf, sizeof buf, "%s %zu/%zu loss=%.5f lr=%.3g grad_norm=%.3f", train::stage_name(stage),
                    r.iteration + 1, total, r.loss, r.lr, r.grad_norm);
      log(buf);
    }
  });
  if (!checkpoint_dir.empty()) st.save(checkpoint_dir);
  o.params = std::move(st.params);
  o.stub_checksum_after = o.params.checksum(stubs::kPrefix);
  return o;
}

EvalOutcome infer_and_evaluate(const ParamStore& params, const RunConfig& cfg,
                               const std::vector<synth::SequenceSample>& seqs, const fs::path& pred_dir) {
  EvalOutcome out;
  stubs::EncoderConfig enc = cfg.encoder;
  enc.frozen = true;
  std::vector<metrics::MetricReport> reports;
  for (const auto& s : seqs) {
    const infer::InferenceResult r =
        infer::infer_sequence(params, enc, cfg.pm_config(), s.frames, s.masks[0], cfg.memory_length);
    out.one_encode_per_frame = out.one_encode_per_frame && r.stats.image_encoder_calls == s.frames.size();
    out.worst.image_encoder_calls = std::max(out.worst.image_encoder_calls, r.stats.image_encoder_calls);
    out.worst.mask_encoder_calls = std::max(out.worst.mask_encoder_calls, r.stats.mask_encoder_calls);
    out.worst.decoder_calls = std::max(out.worst.decoder_calls, r.stats.decoder_calls);
    out.worst.max_memory_length = std::max(out.worst.max_memory_length, r.stats.max_memory_length);
    if (!pred_dir.empty()) {
      fs::create_directories(pred_dir / s.id);
      for (std::size_t t = 0; t < r.predictions.size(); ++t) {
        io::write_mask(pred_dir / s.id / data::frame_name(t + 1, "pgm"), infer::soft_mask(r.predictions[t]));
      }
    }
    out.rows.push_back({s.id, infer::evaluate(r, s.masks)});
    reports.push_back(out.rows.back().report);
  }
  out.mean = metrics::aggregate(reports);
  return out;
}

double warmup_dice(const ParamStore& params, const RunConfig& cfg, std::size_t count) {
  synth::SynthConfig sc = cfg.synth;
  sc.contrast = cfg.warmup_contrast;
  const auto statics = synth::generate_static_set(sc, count, cfg.data_seed + 3);
  double total = 0.0;
  for (const auto& s : statics) {
    const Tensor emb = stubs::image_encode(params, cfg.encoder, s.frame);
    const stubs::MaskPrediction p = stubs::decode(params, cfg.encoder, emb, Tensor(emb.shape(), 0.0));
    total += metrics::dice_iou(metrics::binarize(infer::soft_mask(p)), s.mask).dice;
  }
  return total / static_cast<double>(statics.size());
}

FullRun run_full(const RunConfig& cfg, const fs::path& out, const Log& log, const ParamStore* warmup) {
  FullRun run;
  const fs::path ck = out.empty() ? fs::path() : out / "checkpoints";
  auto dir = [&](const char* stage) { return ck.empty() ? fs::path() : ck / stage; };
  if (warmup) {
    run.warmup_params = *warmup;
  } else {
    run.warmup_params = run_stage(cfg, train::Stage::kWarmup, train::init_stub_params(cfg), dir("warmup"), log).params;
  }
  run.pretrain = run_stage(cfg, train::Stage::kPretrain, run.warmup_params, dir("pretrain"), log);
  run.main = run_stage(cfg, train::Stage::kMain, run.pretrain.params, dir("main"), log);
  const fs::path preds = out.empty() ? fs::path() : out / "predictions";
  run.train = infer_and_evaluate(run.main.params, cfg, train::training_sequences(cfg), preds);
  run.heldout = infer_and_evaluate(run.main.params, cfg, train::heldout_sequences(cfg), preds);
  if (!out.empty()) write_metrics(out, run);
  return run;
}

void write_metrics(const fs::path& out, const FullRun& run) {
  fs::create_directories(out);
  std::vector<metrics::NamedReport> rows;
  for (const auto& r : run.train.rows) rows.push_back({"train/" + r.name, r.report});
  for (const auto& r : run.heldout.rows) rows.push_back({"heldout/" + r.name, r.report});
  std::ofstream tsv(out / "metrics.tsv");
  metrics::write_table(tsv, rows);
  std::ofstream tr(out / "metrics_train.txt"), ho(out / "metrics_heldout.txt");
  metrics::write_key_values(tr, run.train.mean);
  metrics::write_key_values(ho, run.heldout.mean);
  if (!tsv || !tr || !ho) throw std::runtime_error("cannot write metrics in " + out.string());
}

}  // namespace sampm::pipeline
