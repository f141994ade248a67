#include <gtest/gtest.h>

#include <cmath>

#include "sampm/config.hpp"
#include "sampm/optim.hpp"
#include "sampm/rng.hpp"

using namespace sampm;

TEST(Config, DefaultsValidateAndRoundTrip) {
  const RunConfig d;
  EXPECT_NO_THROW(d.validate());
  const RunConfig back = parse_config(d.to_text());
  EXPECT_EQ(back.to_text(), d.to_text());
  EXPECT_EQ(back.hash(), d.hash());
  EXPECT_EQ(d.hash().size(), 16u);
}

TEST(Config, PinnedTrainingBudget) {
  const RunConfig d;
  EXPECT_EQ(d.pretrain.lr, 4e-4);
  EXPECT_EQ(d.pretrain.iterations, 7600u);
  EXPECT_EQ(d.main.lr, 5e-5);
  EXPECT_EQ(d.main.iterations, 2500u);
  EXPECT_EQ(d.iteration_multiplier, 0.1);
  EXPECT_EQ(d.loss.weights.focal, 20.0);
  EXPECT_EQ(d.grad_clip, 1.0);
  EXPECT_EQ(d.memory_length, 2u);
}

TEST(Config, ParsesCommentsWhitespaceAndLists) {
  const RunConfig c = parse_config(
      "# comment line\n"
      "  seed = 7   # trailing\n"
      "\n"
      "pretrain.milestones = 10, 20\n"
      "main.milestones = none\n"
      "augment.hflip = false\n"
      "synth.contrast=0.25\n");
  EXPECT_EQ(c.seed, 7u);
  EXPECT_EQ(c.pretrain.milestones, (std::vector<std::size_t>{10, 20}));
  EXPECT_TRUE(c.main.milestones.empty());
  EXPECT_FALSE(c.augment_ops.hflip);
  EXPECT_TRUE(c.augment_ops.affine);
  EXPECT_EQ(c.synth.contrast, 0.25);
}

TEST(Config, EveryKeyIsSettableAndListed) {
  const RunConfig d;
  const std::string text = d.to_text();
  for (const std::string& k : RunConfig::keys()) {
    EXPECT_NE(text.find(k + " = "), std::string::npos) << k;
  }
  EXPECT_EQ(RunConfig::keys().size(), std::count(text.begin(), text.end(), '\n'));
}

TEST(Config, ErrorsNameTheProblem) {
  try {
    parse_config("seed = 1\nno_such_key = 3\n", "run.cfg");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("run.cfg:2"), std::string::npos) << e.what();
    EXPECT_NE(std::string(e.what()).find("no_such_key"), std::string::npos) << e.what();
  }
  EXPECT_THROW(parse_config("seed = -1\n"), ConfigError);
  EXPECT_THROW(parse_config("grad_clip = 1.0x\n"), ConfigError);
  EXPECT_THROW(parse_config("augment = maybe\n"), ConfigError);
  EXPECT_THROW(parse_config("just words\n"), ConfigError);
  EXPECT_THROW(parse_config("grad_clip = inf\n"), ConfigError);
  EXPECT_THROW(load_config("/nonexistent/run.cfg"), ConfigError);
}

TEST(Config, OverridesAndHashChanges) {
  RunConfig c;
  const std::string before = c.hash();
  apply_overrides(c, {"--seed=3", "main.lr=1e-4"});
  EXPECT_EQ(c.seed, 3u);
  EXPECT_EQ(c.main.lr, 1e-4);
  EXPECT_NE(c.hash(), before);
  EXPECT_THROW(apply_overrides(c, {"--seed"}), ConfigError);
  EXPECT_THROW(apply_overrides(c, {"--bogus=1"}), ConfigError);
}

TEST(Config, ValidationCatchesInconsistencies) {
  RunConfig c;
  c.memory_length = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = RunConfig{};
  c.main.lr = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = RunConfig{};
  c.synth.image_size = 48;
  EXPECT_THROW(c.validate(), ConfigError);
  c = RunConfig{};
  c.prompt_drop = 1.5;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Config, ScaledStage) {
  RunConfig c;
  const StageSettings s = c.scaled(c.pretrain);
  EXPECT_EQ(s.iterations, 760u);
  EXPECT_EQ(s.milestones, (std::vector<std::size_t>{380}));
  EXPECT_EQ(s.lr, c.pretrain.lr);
  c.iteration_multiplier = 1e-6;
  EXPECT_EQ(c.scaled(c.main).iterations, 1u);
}

namespace {

ParamStore store_with(Rng& rng) {
  ParamStore p;
  p.add("a.w", randn({3, 4}, 1.0, rng));
  p.add("b.bias", randn({5}, 1.0, rng));
  p.add("frozen.w", randn({2, 2}, 1.0, rng), true);
  return p;
}

}  // namespace

// Hand-rolled scalar AdamW, one parameter at a time.
TEST(AdamW, MatchesScalarOracleOverManySteps) {
  Rng rng(1);
  ParamStore params = store_with(rng);
  const ParamStore initial = params;
  optim::AdamWConfig cfg{0.9, 0.999, 1e-8, 0.01};
  optim::AdamW opt(params, cfg);

  std::vector<ParamStore> grads;
  for (int t = 0; t < 25; ++t) grads.push_back(store_with(rng).zeros_like());
  for (auto& g : grads)
    for (const auto& n : g.names())
      for (double& v : g.get(n).data()) v = rng.normal() * 0.1;

  for (int t = 0; t < 25; ++t) opt.step(params, grads[t], 1e-2 * (t < 10 ? 1 : 0.5));
  EXPECT_EQ(opt.steps(), 25u);
  EXPECT_EQ(params.get("frozen.w").data()[0], initial.get("frozen.w").data()[0]);
  EXPECT_FALSE(opt.first_moment().contains("frozen.w"));

  for (const std::string name : {"a.w", "b.bias"}) {
    const Tensor& p0 = initial.get(name);
    for (std::size_t i = 0; i < p0.numel(); ++i) {
      double p = p0[i], m = 0, v = 0;
      for (int t = 1; t <= 25; ++t) {
        const double g = grads[t - 1].get(name)[i];
        const double lr = 1e-2 * (t <= 10 ? 1 : 0.5);
        p -= lr * 0.01 * p;
        m = 0.9 * m + 0.1 * g;
        v = 0.999 * v + 0.001 * g * g;
        const double mh = m / (1 - std::pow(0.9, t)), vh = v / (1 - std::pow(0.999, t));
        p -= lr * mh / (std::sqrt(vh) + 1e-8);
      }
      EXPECT_NEAR(params.get(name)[i], p, 1e-13) << name << "[" << i << "]";
    }
  }
}

TEST(AdamW, FirstStepMovesByLearningRate) {
  ParamStore p;
  p.add("x", Tensor({3}, {0.0, 0.0, 0.0}));
  ParamStore g;
  g.add("x", Tensor({3}, {5.0, -0.001, 0.0}));
  optim::AdamW opt(p, {0.9, 0.999, 1e-8, 0.0});
  opt.step(p, g, 0.1);
  EXPECT_NEAR(p.get("x")[0], -0.1, 1e-8);
  EXPECT_NEAR(p.get("x")[1], 0.1, 1e-5);
  EXPECT_EQ(p.get("x")[2], 0.0);
}

TEST(AdamW, SaveLoadContinuesIdentically) {
  Rng rng(2);
  ParamStore a = store_with(rng);
  ParamStore g = a.zeros_like();
  for (const auto& n : g.names())
    for (double& v : g.get(n).data()) v = rng.normal();
  g.erase_prefix("frozen");
  optim::AdamW opt(a, {});
  opt.step(a, g, 1e-3);
  const auto dir = std::filesystem::temp_directory_path() / "sampm_test_adamw";
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  opt.save(dir);
  optim::AdamW loaded = optim::AdamW::load(dir, {});
  ParamStore b = a;
  opt.step(a, g, 1e-3);
  loaded.step(b, g, 1e-3);
  EXPECT_TRUE(a == b);
  EXPECT_EQ(loaded.steps(), 2u);
  std::filesystem::remove_all(dir);
}

TEST(Schedule, MultistepHalvesAtMilestones) {
  const std::vector<std::size_t> ms{100, 200};
  EXPECT_EQ(optim::multistep_lr(1.0, ms, 0), 1.0);
  EXPECT_EQ(optim::multistep_lr(1.0, ms, 99), 1.0);
  EXPECT_EQ(optim::multistep_lr(1.0, ms, 100), 0.5);
  EXPECT_EQ(optim::multistep_lr(1.0, ms, 199), 0.5);
  EXPECT_EQ(optim::multistep_lr(1.0, ms, 200), 0.25);
  EXPECT_EQ(optim::multistep_lr(4e-4, {}, 5000), 4e-4);
}

TEST(Clip, GlobalNorm) {
  ParamStore g;
  g.add("a", Tensor({2}, {3.0, 0.0}));
  g.add("b", Tensor({1}, {4.0}));
  ParamStore measured = g;
  EXPECT_EQ(optim::clip_global_norm(measured, 0.0), 5.0);
  EXPECT_TRUE(measured == g);
  EXPECT_EQ(optim::clip_global_norm(g, 1.0), 5.0);
  EXPECT_NEAR(g.get("a")[0], 0.6, 1e-15);
  EXPECT_NEAR(g.get("b")[0], 0.8, 1e-15);
  EXPECT_NEAR(optim::clip_global_norm(g, 10.0), 1.0, 1e-15);
  EXPECT_NEAR(g.get("b")[0], 0.8, 1e-15);
}
