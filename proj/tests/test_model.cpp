#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "grad_helpers.hpp"
#include "mambaeye/model.hpp"
#include "mambaeye/ops.hpp"

using namespace mambaeye;

namespace {

Canvas test_canvas(int side, Rect region, std::uint64_t seed) {
  Canvas c;
  c.pixels = Image(3, side, side);
  c.image_region = region;
  Rng rng(seed);
  for (int ch = 0; ch < 3; ++ch)
    for (int y = region.y0; y < region.y0 + region.h; ++y)
      for (int x = region.x0; x < region.x0 + region.w; ++x)
        c.pixels.at(ch, y, x) = static_cast<float>(uniform01(rng));
  return c;
}

}  // namespace

TEST(ModelConfig, PresetsHaveExpectedShape) {
  const auto tiny = ModelConfig::preset("tiny");
  EXPECT_EQ(tiny.layers, 12);
  EXPECT_EQ(tiny.d_input(), 1280);
  EXPECT_EQ(ModelConfig::preset("small").layers, 24);
  EXPECT_EQ(ModelConfig::preset("base").layers, 48);
  const auto m2 = ModelConfig::preset("micro-2");
  EXPECT_EQ(m2.layers, 2);
  EXPECT_EQ(m2.d_model, 64);
  EXPECT_EQ(m2.patch, 4);
  EXPECT_EQ(m2.d_move_emb, 32);
  const auto m4 = ModelConfig::preset("micro-4");
  EXPECT_EQ(m4.layers, 4);
  EXPECT_EQ(m4.d_model, 128);
  EXPECT_EQ(m4.patch, 8);
  EXPECT_EQ(m4.d_move_emb, 64);
  EXPECT_THROW(ModelConfig::preset("huge"), std::invalid_argument);
}

TEST(ModelConfig, ParameterCountsForThousandClasses) {
  const std::pair<const char*, double> expected[] = {
      {"tiny", 5.8e6}, {"small", 11.0e6}, {"base", 21.3e6}};
  for (const auto& [name, count] : expected) {
    auto cfg = ModelConfig::preset(name);
    cfg.num_classes = 1000;
    EXPECT_NEAR(static_cast<double>(count_parameters(cfg)), count, 0.01 * count) << name;
  }
  const auto m2 = ModelConfig::preset("micro-2");
  const auto params = ModelParams<float>::zeros(m2);
  EXPECT_EQ(count_parameters(params.named()), count_parameters(m2));
}

TEST(ModelConfig, FlopsScaleLinearlyInSteps) {
  for (const auto& name : ModelConfig::preset_names()) {
    const auto cfg = ModelConfig::preset(name);
    EXPECT_NEAR(count_flops(cfg, 4096) / count_flops(cfg, 1024), 4.0, 0.02) << name;
  }
  const double ratio =
      count_flops(ModelConfig::preset("base"), 1024) / count_flops(ModelConfig::preset("tiny"), 1024);
  EXPECT_NEAR(ratio, 4.0, 0.8);
}

TEST(Model, StepMatchesParallelRows) {
  const auto cfg = ModelConfig::preset("micro-2");
  const auto model = GlimpseModel<double>::initialized(cfg, 1);
  const Canvas c = test_canvas(32, Rect{4, 4, 24, 24}, 2);
  const auto traj = generate_trajectory(c, {ScanKind::RandomImage, 3}, 40, cfg.patch);
  const auto x = build_inputs<double>(traj, cfg);
  const auto par = model.forward(x);
  auto state = model.make_state();
  for (std::size_t t = 0; t < traj.size(); ++t) {
    const auto row = model.step(x.row(t), state);
    for (int k = 0; k < cfg.num_classes; ++k) {
      EXPECT_NEAR(row[static_cast<std::size_t>(k)], par.at(t, static_cast<std::size_t>(k)), 1e-10);
    }
  }
}

TEST(Model, ZeroGlimpseAndZeroHeadGiveUniformLogits) {
  const auto cfg = ModelConfig::preset("micro-2");
  auto model = GlimpseModel<double>::initialized(cfg, 4);
  model.params().head_weight.fill(0.0);
  model.params().head_bias.fill(0.0);
  Tensor<double> x({5, static_cast<std::size_t>(cfg.d_input())}, 0.0);
  const auto logits = model.forward(x);
  for (double v : logits.vec()) EXPECT_EQ(v, 0.0);
  Tape<double> t;
  Var lsm = ops::log_softmax(t, t.constant(logits));
  for (double v : t.value(lsm).vec()) EXPECT_NEAR(v, -std::log(10.0), 1e-12);
}

TEST(Model, StateSizeIsConstant) {
  const auto cfg = ModelConfig::preset("micro-4");
  const auto model = GlimpseModel<float>::initialized(cfg, 5);
  auto state = model.make_state();
  const auto bytes = state.state_bytes();
  std::vector<float> in(static_cast<std::size_t>(cfg.d_input()), 0.1f);
  for (int i = 0; i < 200; ++i) model.step(in, state);
  EXPECT_EQ(state.state_bytes(), bytes);
}

TEST(Model, LogitsAreTranslationInvariant) {
  const auto cfg = ModelConfig::preset("micro-2");
  const auto model = GlimpseModel<float>::initialized(cfg, 6);
  const Canvas a = test_canvas(48, Rect{4, 4, 20, 20}, 7);
  Canvas b;
  b.pixels = Image(3, 48, 48);
  b.image_region = Rect{17, 11, 20, 20};
  for (int ch = 0; ch < 3; ++ch)
    for (int y = 0; y < 20; ++y)
      for (int x = 0; x < 20; ++x) b.pixels.at(ch, 11 + y, 17 + x) = a.pixels.at(ch, 4 + y, 4 + x);
  const auto ta = generate_trajectory(a, {ScanKind::RandomImage, 8}, 30, cfg.patch);
  const auto tb = generate_trajectory(b, {ScanKind::RandomImage, 8}, 30, cfg.patch);
  const auto la = model.forward(build_inputs<float>(ta, cfg));
  const auto lb = model.forward(build_inputs<float>(tb, cfg));
  EXPECT_EQ(la.vec(), lb.vec());
}

TEST(Model, GradientMatchesFiniteDifferences) {
  const auto cfg = ModelConfig::preset("micro-2");
  const auto model = GlimpseModel<double>::initialized(cfg, 9);
  const Canvas c = test_canvas(24, Rect{0, 0, 24, 24}, 10);
  const auto x = build_inputs<double>(generate_trajectory(c, {ScanKind::RandomImage, 11}, 6, 4), cfg);
  Tensor<double> target({6, 10}, 0.0);
  for (std::size_t t = 0; t < 6; ++t) target.at(t, 3) = 1.0;

  auto params = model.params();
  auto named = params.named();
  std::vector<double> flat;
  for (auto& p : named) flat.insert(flat.end(), p.tensor->vec().begin(), p.tensor->vec().end());
  auto loss_at = [&](std::span<const double> w) {
    std::size_t off = 0;
    for (auto& p : named) {
      for (double& v : p.tensor->vec()) v = w[off++];
    }
    GlimpseModel<double> m(cfg, params);
    Tape<double> tape;
    return tape.value(ops::soft_cross_entropy(tape, m.forward(tape, x, false).logits, target)).item();
  };
  Tape<double> tape;
  auto fv = model.forward(tape, x, true);
  tape.backward(ops::soft_cross_entropy(tape, fv.logits, target));
  std::vector<double> analytic;
  for (Var v : fv.params) {
    const auto g = tape.grad(v);
    analytic.insert(analytic.end(), g.vec().begin(), g.vec().end());
  }
  const auto report = fd_gradient_check(loss_at, flat, analytic, {1e-5, 200, 12});
  EXPECT_EQ(report.coords_checked, 200u);
  EXPECT_LE(report.max_rel_error, 1e-3) << "worst index " << report.worst_index << " analytic "
                                        << report.worst_analytic << " numeric " << report.worst_numeric;
}

TEST(Checkpoint, RoundTripAndShapeValidation) {
  const auto dir = std::filesystem::temp_directory_path() / "mambaeye_test_ckpt";
  std::filesystem::remove_all(dir);
  const auto model = GlimpseModel<float>::initialized(ModelConfig::preset("micro-2"), 13);
  write_checkpoint(dir, make_checkpoint(model, {{"seed", "13"}}));
  const auto ckpt = read_checkpoint(dir);
  EXPECT_EQ(ckpt.meta.at("seed"), "13");
  EXPECT_EQ(ckpt.config, model.config());
  const auto back = load_model(ckpt);
  const auto a = model.params().named();
  const auto b = back.params().named();
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].tensor->vec(), b[i].tensor->vec());

  auto bad = ckpt;
  bad.tensors[0].second = Tensor<float>({3, 3});
  EXPECT_THROW(load_model(bad), CheckpointError);
  std::filesystem::resize_file(dir / "head_bias.f32", 8);
  EXPECT_THROW(read_checkpoint(dir), CheckpointError);
}
