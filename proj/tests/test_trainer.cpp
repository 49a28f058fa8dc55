#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include "mambaeye/config.hpp"
#include "mambaeye/trainer.hpp"

using namespace mambaeye;
namespace fs = std::filesystem;

namespace {

TrainConfig bars_config() {
  TrainConfig c;
  c.model = ModelConfig::preset("micro-2");
  c.model.num_classes = 2;
  c.data.source = "synthetic-bars";
  c.data.num_classes = 2;
  c.data.train_samples = 256;
  c.data.test_samples = 32;
  c.data.image_side = 16;
  c.canvas_min = 16;
  c.canvas_max = 24;
  c.epochs = 5;
  c.steps = 16;
  c.batch_size = 8;
  c.eval_steps = 16;
  c.eval_resolution = 16;
  c.optim.lr = 3e-3;
  c.optim.warmup_epochs = 0.5;
  c.policy = ScanKind::RandomImage;
  c.seed = 7;
  return c;
}

fs::path fresh_dir(const std::string& name) {
  auto d = fs::temp_directory_path() / ("mambaeye_trainer_" + name);
  fs::remove_all(d);
  return d;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST(Schedule, WarmupThenCosineToZero) {
  EXPECT_EQ(lr_at(0, 100, 10, 1e-3), 0.0);
  EXPECT_EQ(lr_at(10, 100, 10, 1e-3), 1e-3);
  EXPECT_NEAR(lr_at(100, 100, 10, 1e-3), 0.0, 1e-12);
  EXPECT_NEAR(lr_at(55, 100, 10, 1e-3), 0.5e-3, 1e-15);
  double prev = 1.0;
  for (long s = 10; s <= 100; ++s) {
    EXPECT_LE(lr_at(s, 100, 10, 1e-3), prev);
    prev = lr_at(s, 100, 10, 1e-3);
  }
}

TEST(AdamW, ZeroGradientAndNoDecayLeavesWeights) {
  Tensor<float> w({3}, {1.0f, -2.0f, 0.5f});
  AdamW opt({&w}, {0.9, 0.999, 1e-8, 0.0});
  ASSERT_TRUE(opt.step({Tensor<float>({3}, 0.0f)}, 0.1));
  EXPECT_EQ(w.vec(), (std::vector<float>{1.0f, -2.0f, 0.5f}));
}

TEST(AdamW, FirstStepOnLinearFunction) {
  Tensor<float> w({1}, 1.0f);
  AdamW opt({&w}, {0.9, 0.999, 1e-8, 0.0});
  opt.step({Tensor<float>({1}, 1.0f)}, 0.1);
  EXPECT_NEAR(w[0], 0.9f, 1e-6f);
}

TEST(AdamW, DecoupledDecayWithZeroGradient) {
  Tensor<float> w({2}, {2.0f, -4.0f});
  AdamW opt({&w}, {0.9, 0.999, 1e-8, 0.05});
  opt.step({Tensor<float>({2}, 0.0f)}, 0.1);
  EXPECT_FLOAT_EQ(w[0], 2.0f * (1 - 0.1f * 0.05f));
  EXPECT_FLOAT_EQ(w[1], -4.0f * (1 - 0.1f * 0.05f));
}

TEST(AdamW, NonFiniteGradientSkipsUpdate) {
  Tensor<float> w({2}, 1.0f);
  AdamW opt({&w}, {0.9, 0.999, 1e-8, 0.05});
  Tensor<float> g({2}, 0.5f);
  g[1] = std::numeric_limits<float>::quiet_NaN();
  EXPECT_FALSE(opt.step({g}, 0.1));
  EXPECT_EQ(w.vec(), (std::vector<float>{1.0f, 1.0f}));
  EXPECT_EQ(opt.steps_taken(), 0);
}

TEST(Config, RoundTripsThroughIni) {
  TrainConfig c = bars_config();
  c.loss = LossMode::StandardCE;
  c.augment.crop_prob = 0.25;
  const TrainConfig back = parse_train_config(to_ini(c));
  EXPECT_EQ(to_ini(back), to_ini(c));
  EXPECT_EQ(back.model, c.model);
}

TEST(Config, RejectsUnknownKeysAndSections) {
  EXPECT_THROW(parse_train_config("[train]\nepoch = 3\n"), std::invalid_argument);
  EXPECT_THROW(parse_train_config("[optimizer]\nlr = 3\n"), std::invalid_argument);
  EXPECT_THROW(parse_train_config("[train]\nloss = focal\n"), std::invalid_argument);
  const auto c = parse_train_config("[model]\npreset = micro-2\n[train]\neval_resolution = 32\n");
  EXPECT_EQ(c.model.name, "micro-2");
  EXPECT_EQ(parse_train_config("[model]\npreset = micro-2\nlayers = 3\n[train]\neval_resolution = 32\n")
                .model.name,
            "custom");
}

TEST(Config, EnvironmentOverridesDataRoot) {
  DataConfig d;
  d.root = "/nonexistent";
  ::setenv(kDataRootEnv, "/tmp/override", 1);
  EXPECT_EQ(resolve_data_root(d), fs::path("/tmp/override"));
  ::unsetenv(kDataRootEnv);
  EXPECT_EQ(resolve_data_root(d), fs::path("/nonexistent"));
}

TEST(Train, GradientAccumulationMatchesLargeBatch) {
  TrainConfig c = bars_config();
  const auto data = load_splits(c.data);
  const auto model = GlimpseModel<float>::initialized(c.model, 3);
  std::vector<SampleBatchItem> items;
  for (std::size_t i = 0; i < 8; ++i) items.push_back(make_train_item(data.train.samples[i], c, i));
  auto zeros = [&] {
    std::vector<Tensor<float>> g;
    for (const auto& p : model.params().named()) g.emplace_back(p.tensor->shape(), 0.0f);
    return g;
  };
  auto whole = zeros();
  accumulate_gradients(model, items, whole);
  auto parts = zeros();
  accumulate_gradients(model, std::span(items).subspan(0, 4), parts);
  accumulate_gradients(model, std::span(items).subspan(4, 4), parts);
  for (std::size_t i = 0; i < whole.size(); ++i) {
    for (std::size_t j = 0; j < whole[i].size(); ++j) {
      ASSERT_NEAR(whole[i][j], parts[i][j], 1e-6f);
    }
  }
}

TEST(Train, LearnsBarsAndResumesIdentically) {
  const TrainConfig c = bars_config();
  const auto full = fresh_dir("full");
  const auto res = train(c, full);
  ASSERT_EQ(res.metrics.size(), 10u);
  const auto& last_train = res.metrics[8];
  EXPECT_EQ(last_train.split, "train");
  EXPECT_LT(last_train.loss, std::log(2.0));
  EXPECT_TRUE(fs::exists(full / "best" / "manifest.txt"));
  EXPECT_TRUE(fs::exists(full / "run_manifest.json"));

  const auto staged = fresh_dir("staged");
  TrainOptions first;
  first.stop_after_epoch = 2;
  train(c, staged, first);
  TrainOptions second;
  second.resume = true;
  train(c, staged, second);
  EXPECT_EQ(slurp(full / "metrics.csv"), slurp(staged / "metrics.csv"));

  const auto rerun = fresh_dir("rerun");
  train(c, rerun);
  EXPECT_EQ(slurp(full / "metrics.csv"), slurp(rerun / "metrics.csv"));
  EXPECT_EQ(slurp(full / "run_manifest.json"), slurp(rerun / "run_manifest.json"));
}

TEST(Train, AccumulatedRunMatchesLargeBatchRun) {
  TrainConfig big = bars_config();
  big.epochs = 2;
  TrainConfig acc = big;
  acc.batch_size = 4;
  acc.accum_steps = 2;
  const auto a = train(big, fresh_dir("big"));
  const auto b = train(acc, fresh_dir("acc"));
  for (std::size_t i = 0; i < a.metrics.size(); ++i) {
    EXPECT_NEAR(a.metrics[i].loss, b.metrics[i].loss, 1e-6);
  }
}

TEST(TrainConfig, ShippedConfigsParseAndDifferOnlyInLoss) {
  const std::filesystem::path dir = MAMBAEYE_CONFIG_DIR;
  const auto sched = load_train_config(dir / "micro4_shapes.ini");
  auto ce = load_train_config(dir / "micro4_shapes_ce.ini");
  EXPECT_EQ(sched.model, ModelConfig::preset("micro-4"));
  EXPECT_EQ(sched.loss, LossMode::Scheduled);
  EXPECT_EQ(sched.policy, ScanKind::RandomImage);
  EXPECT_EQ(sched.steps, 256);
  EXPECT_LE(sched.epochs, 30);
  EXPECT_EQ(ce.loss, LossMode::StandardCE);
  ce.loss = LossMode::Scheduled;
  EXPECT_EQ(to_ini(ce), to_ini(sched));
}
