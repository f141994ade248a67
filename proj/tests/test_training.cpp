#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sys/wait.h>
#include <unistd.h>

#include "sampm/inference.hpp"
#include "sampm/pipeline.hpp"
#include "sampm/propagation.hpp"
#include "sampm/training.hpp"

using namespace sampm;
namespace fs = std::filesystem;

namespace {

// Small enough that a step takes milliseconds.
RunConfig tiny() {
  RunConfig c;
  c.encoder.image_size = 32;
  c.encoder.downscale = 8;
  c.encoder.embed_dim = 16;
  c.pm.attn_dim = 16;
  c.pm.affinity_dim = 16;
  c.synth.image_size = 32;
  c.synth.radius_min = 5;
  c.synth.radius_max = 7;
  c.synth.base_cell = 8;
  c.synth.length = 5;
  c.train_sequences = 2;
  c.heldout_sequences = 1;
  c.static_count = 8;
  c.batch_size = 2;
  c.iteration_multiplier = 1.0;
  c.warmup = {1e-3, 4, {2}};
  c.pretrain = {4e-4, 6, {3}};
  c.main = {5e-5, 4, {}};
  c.validate();
  return c;
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("sampm_test_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::uint64_t stub_sum(const ParamStore& p) { return p.checksum(stubs::kPrefix); }

}  // namespace

TEST(Training, StageNames) {
  for (auto s : {train::Stage::kWarmup, train::Stage::kPretrain, train::Stage::kMain})
    EXPECT_EQ(train::parse_stage(train::stage_name(s)), s);
  EXPECT_THROW(train::parse_stage("finetune"), std::invalid_argument);
}

TEST(Training, FrozenContract) {
  const RunConfig cfg = tiny();
  ParamStore params = train::init_stub_params(cfg);
  EXPECT_FALSE(params.contains("pm.tfmm.wq"));

  train::TrainState warm = train::begin_stage(cfg, train::Stage::kWarmup, params);
  const std::uint64_t before = stub_sum(warm.params);
  train::run_stage(cfg, warm, train::stage_data(cfg, train::Stage::kWarmup));
  EXPECT_NE(stub_sum(warm.params), before);
  EXPECT_TRUE(warm.params.names("pm.").empty());

  train::TrainState pre = train::begin_stage(cfg, train::Stage::kPretrain, warm.params);
  const std::uint64_t frozen = stub_sum(pre.params);
  const std::uint64_t pm_before = pre.params.checksum("pm.");
  for (const auto& n : pre.params.names(stubs::kPrefix)) EXPECT_TRUE(pre.params.frozen(n)) << n;
  for (const auto& n : pre.params.names("pm.")) EXPECT_FALSE(pre.params.frozen(n)) << n;
  const auto mon = train::run_stage(cfg, pre, train::stage_data(cfg, train::Stage::kPretrain));
  EXPECT_EQ(stub_sum(pre.params), frozen);
  EXPECT_NE(pre.params.checksum("pm."), pm_before);
  for (const auto& n : mon.nonzero_grad) EXPECT_EQ(n.rfind("pm.", 0), 0u) << n;

  train::TrainState main = train::begin_stage(cfg, train::Stage::kMain, pre.params);
  train::run_stage(cfg, main, train::stage_data(cfg, train::Stage::kMain));
  EXPECT_EQ(stub_sum(main.params), frozen);
}

TEST(Training, LearningRateHalvesAtMilestone) {
  const RunConfig cfg = tiny();
  train::TrainState st = train::begin_stage(cfg, train::Stage::kPretrain, train::init_stub_params(cfg));
  const auto mon = train::run_stage(cfg, st, train::stage_data(cfg, train::Stage::kPretrain));
  ASSERT_EQ(mon.lrs.size(), 6u);
  EXPECT_EQ(st.iteration, 6u);
  for (std::size_t i = 0; i < 6; ++i) EXPECT_EQ(mon.lrs[i], i < 3 ? 4e-4 : 2e-4) << i;
  for (double l : mon.losses) EXPECT_TRUE(std::isfinite(l));
}

TEST(Training, ResumeIsBitExact) {
  const RunConfig cfg = tiny();
  const auto data = train::stage_data(cfg, train::Stage::kPretrain);
  const ParamStore init = train::init_stub_params(cfg);

  train::TrainState straight = train::begin_stage(cfg, train::Stage::kPretrain, init);
  train::run_stage(cfg, straight, data);

  train::TrainState first = train::begin_stage(cfg, train::Stage::kPretrain, init);
  for (int i = 0; i < 4; ++i) train::train_step(cfg, first, data);
  const fs::path dir = scratch("resume");
  first.save(dir);
  train::TrainState resumed = train::TrainState::load(dir, cfg);
  EXPECT_EQ(resumed.iteration, 4u);
  EXPECT_EQ(resumed.stage, train::Stage::kPretrain);
  train::run_stage(cfg, resumed, data);

  EXPECT_TRUE(resumed.params == straight.params);
  EXPECT_EQ(resumed.opt.steps(), straight.opt.steps());
  EXPECT_TRUE(resumed.opt.second_moment() == straight.opt.second_moment());
  fs::remove_all(dir);
}

TEST(Training, DataSetsAreDeterministicAndDisjoint) {
  const RunConfig cfg = tiny();
  const auto a = train::training_sequences(cfg), b = train::training_sequences(cfg);
  const auto h = train::heldout_sequences(cfg);
  ASSERT_EQ(a.size(), 2u);
  ASSERT_EQ(h.size(), 1u);
  EXPECT_TRUE(std::ranges::equal(a[1].frames[3].data(), b[1].frames[3].data()));
  EXPECT_FALSE(std::ranges::equal(a[0].frames[0].data(), h[0].frames[0].data()));
  EXPECT_EQ(train::warmup_statics(cfg).size(), cfg.static_count);
}

TEST(Inference, EncodesEachFrameOnceAndBoundsMemory) {
  const RunConfig cfg = tiny();
  train::TrainState st = train::begin_stage(cfg, train::Stage::kPretrain, train::init_stub_params(cfg));
  const auto seqs = train::heldout_sequences(cfg);
  const auto r = infer::infer_sequence(st.params, cfg.encoder, cfg.pm_config(), seqs[0].frames, seqs[0].masks[0],
                                       cfg.memory_length);
  const std::size_t t = seqs[0].frames.size();
  EXPECT_EQ(r.predictions.size(), t - 1);
  EXPECT_EQ(r.stats.image_encoder_calls, t);
  EXPECT_EQ(r.stats.decoder_calls, t - 1);
  EXPECT_LE(r.stats.max_memory_length, cfg.memory_length);
  EXPECT_EQ(r.stats.max_memory_length, 2u);

  const auto rep = infer::evaluate(r, seqs[0].masks);
  EXPECT_EQ(rep.frames_scored, t - 1);
  EXPECT_THROW(infer::infer_sequence(st.params, cfg.encoder, cfg.pm_config(), std::span(seqs[0].frames).first(1),
                                     seqs[0].masks[0], 2),
               std::invalid_argument);
}

TEST(Pipeline, FullRunWritesOutputs) {
  const RunConfig cfg = tiny();
  const fs::path out = scratch("full");
  const auto run = pipeline::run_full(cfg, out);
  pipeline::write_metrics(out, run);
  EXPECT_TRUE(fs::exists(out / "metrics.tsv"));
  EXPECT_TRUE(fs::exists(out / "checkpoints" / "main" / "params" / "manifest.txt"));
  EXPECT_EQ(stub_sum(run.main.params), stub_sum(run.warmup_params));
  EXPECT_EQ(run.pretrain.stub_checksum_before, run.pretrain.stub_checksum_after);
  EXPECT_TRUE(run.heldout.one_encode_per_frame);
  EXPECT_LE(run.heldout.worst.max_memory_length, 2u);
  fs::remove_all(out);
}

#ifdef SAMPM_CLI
namespace {

int run_cli(const std::string& args) {
  const std::string cmd = std::string(SAMPM_CLI) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST(Cli, ExitCodes) {
  EXPECT_EQ(run_cli("paramcount"), 0);
  EXPECT_EQ(run_cli("--help"), 0);
  EXPECT_EQ(run_cli(""), 1);
  EXPECT_EQ(run_cli("frobnicate"), 1);
  EXPECT_EQ(run_cli("paramcount --set no_such_key=1"), 1);
  EXPECT_EQ(run_cli("paramcount --set memory_length=0"), 1);
  EXPECT_EQ(run_cli("train --out /tmp/x"), 1);
  EXPECT_EQ(run_cli("eval --pred /nonexistent/p --gt /nonexistent/g"), 2);
}

TEST(Cli, SynthWritesAReadableDataset) {
  const fs::path out = scratch("cli_synth");
  ASSERT_EQ(run_cli("synth --out " + out.string() + " --set train_sequences=1 --set heldout_sequences=1"), 0);
  EXPECT_TRUE(fs::exists(out / "run_stamp.txt"));
  bool found_index = false;
  for (const auto& e : fs::recursive_directory_iterator(out)) found_index = found_index || e.path().filename() == "index.txt";
  EXPECT_TRUE(found_index);
  fs::remove_all(out);
}
#endif
