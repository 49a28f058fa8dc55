#include "mambaeye/selfcheck.hpp"

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>

#include "mambaeye/gradcheck.hpp"
#include "mambaeye/kernels.hpp"
#include "mambaeye/losses.hpp"
#include "mambaeye/model.hpp"
#include "mambaeye/move_embedding.hpp"
#include "mambaeye/patchio.hpp"
#include "mambaeye/rng.hpp"

namespace mambaeye {

namespace {

std::string fmt(const char* pattern, double a, double b = 0.0) {
  char buf[160];
  std::snprintf(buf, sizeof(buf), pattern, a, b);
  return buf;
}

ModelConfig dual_mode_config(int layers, int d_model) {
  ModelConfig cfg;
  cfg.name = "custom";
  cfg.layers = layers;
  cfg.d_model = d_model;
  cfg.patch = 4;
  cfg.d_move_emb = 32;
  cfg.d_state = 16;
  cfg.head_dim = 16;
  cfg.chunk = 64;
  return cfg;
}

template <typename T>
double dual_mode_gap(const ModelConfig& cfg, int steps, std::uint64_t seed) {
  const auto model = GlimpseModel<T>::initialized(cfg, seed);
  Rng rng(derive_seed(seed, {1}));
  Tensor<T> x({static_cast<std::size_t>(steps), static_cast<std::size_t>(cfg.d_input())});
  for (T& v : x.vec()) v = static_cast<T>(uniform(rng, -1.0, 1.0));
  const Tensor<T> par = model.forward(x);
  auto state = model.make_state();
  double gap = 0;
  for (std::size_t t = 0; t < static_cast<std::size_t>(steps); ++t) {
    const auto row = model.step(x.row(t), state);
    for (std::size_t k = 0; k < row.size(); ++k) {
      gap = std::max(gap, std::abs(static_cast<double>(row[k]) - static_cast<double>(par.at(t, k))));
    }
  }
  return gap;
}

/// y_t = sum_{s<=t} (prod_{r=s+1..t} decay_r) (c_t . b_s) u_s.
std::vector<double> scan_quadratic(const kernels::ScanDims& d, const std::vector<double>& decay,
                                   const std::vector<double>& u, const std::vector<double>& b,
                                   const std::vector<double>& c) {
  const std::size_t width = d.heads * d.head_dim;
  std::vector<double> y(d.steps * width, 0.0);
  for (std::size_t t = 0; t < d.steps; ++t) {
    for (std::size_t s = 0; s <= t; ++s) {
      double cb = 0;
      for (std::size_t n = 0; n < d.state; ++n) cb += c[t * d.state + n] * b[s * d.state + n];
      for (std::size_t h = 0; h < d.heads; ++h) {
        double a = 1;
        for (std::size_t r = s + 1; r <= t; ++r) a *= decay[r * d.heads + h];
        for (std::size_t p = 0; p < d.head_dim; ++p) {
          y[t * width + h * d.head_dim + p] += a * cb * u[s * width + h * d.head_dim + p];
        }
      }
    }
  }
  return y;
}

Canvas random_canvas(Rng& rng, int side, Rect region) {
  Canvas c;
  c.pixels = Image(3, side, side);
  c.image_region = region;
  for (int ch = 0; ch < 3; ++ch)
    for (int y = region.y0; y < region.y0 + region.h; ++y)
      for (int x = region.x0; x < region.x0 + region.w; ++x)
        c.pixels.at(ch, y, x) = static_cast<float>(uniform01(rng));
  return c;
}

}  // namespace

CheckResult check_dual_mode() {
  CheckResult r;
  r.name = "dual-mode equivalence";
  double worst32 = 0;
  double worst64 = 0;
  std::uint64_t seed = 0;
  for (int layers : {1, 2, 4}) {
    for (int d_model : {32, 64}) {
      const auto cfg = dual_mode_config(layers, d_model);
      for (int steps : {1, 7, 64, 256}) {
        ++seed;
        worst32 = std::max(worst32, dual_mode_gap<float>(cfg, steps, seed));
        worst64 = std::max(worst64, dual_mode_gap<double>(cfg, steps, seed));
      }
    }
  }
  r.passed = worst32 <= 1e-4 && worst64 <= 1e-8;
  r.detail = fmt("max |parallel - recurrent| fp32 %.3g (<= 1e-4), fp64 %.3g (<= 1e-8)", worst32, worst64);
  return r;
}

CheckResult check_scan_bruteforce() {
  CheckResult r;
  r.name = "chunked scan vs quadratic sum";
  Rng rng(11);
  double worst = 0;
  for (std::size_t steps : {1u, 5u, 16u, 63u, 64u, 65u, 100u, 128u}) {
    for (std::size_t chunk : {8u, 64u}) {
      const kernels::ScanDims d{steps, 2, 3, 4};
      std::vector<double> decay(steps * d.heads), u(steps * d.heads * d.head_dim);
      std::vector<double> b(steps * d.state), c(steps * d.state);
      for (double& v : decay) v = uniform(rng, 0.5, 1.0);
      for (double& v : u) v = uniform(rng, -1.0, 1.0);
      for (double& v : b) v = uniform(rng, -1.0, 1.0);
      for (double& v : c) v = uniform(rng, -1.0, 1.0);
      std::vector<double> y(u.size());
      kernels::scan_chunked<double>(d, decay.data(), u.data(), b.data(), c.data(), y.data(), chunk);
      const auto ref = scan_quadratic(d, decay, u, b, c);
      for (std::size_t i = 0; i < y.size(); ++i) worst = std::max(worst, std::abs(y[i] - ref[i]));
    }
  }
  r.passed = worst <= 1e-10;
  r.detail = fmt("max |chunked - quadratic| %.3g (<= 1e-10), T <= 128", worst);
  return r;
}

CheckResult check_gradient() {
  CheckResult r;
  r.name = "scheduled-loss gradient vs finite differences";
  const auto cfg = ModelConfig::preset("micro-2");
  const auto model = GlimpseModel<double>::initialized(cfg, 9);
  Rng rng(10);
  const Canvas canvas = random_canvas(rng, 24, Rect{0, 0, 24, 24});
  const auto traj = generate_trajectory(canvas, {ScanKind::RandomImage, 11}, 8, cfg.patch);
  const auto x = build_inputs<double>(traj, cfg);
  std::vector<double> ratios;
  for (const auto& s : traj) ratios.push_back(s.r);
  const auto targets = build_targets<double>(cfg.num_classes, 3, ratios, LossMode::Scheduled);

  auto params = model.params();
  auto named = params.named();
  std::vector<double> flat;
  for (auto& p : named) flat.insert(flat.end(), p.tensor->vec().begin(), p.tensor->vec().end());
  auto loss_at = [&](std::span<const double> w) {
    std::size_t off = 0;
    for (auto& p : named) {
      for (double& v : p.tensor->vec()) v = w[off++];
    }
    const GlimpseModel<double> m(cfg, params);
    Tape<double> tape;
    return tape.value(sequence_loss(tape, m.forward(tape, x, false).logits, targets)).item();
  };
  Tape<double> tape;
  const auto fv = model.forward(tape, x, true);
  tape.backward(sequence_loss(tape, fv.logits, targets));
  std::vector<double> analytic;
  for (Var v : fv.params) {
    const auto g = tape.grad(v);
    analytic.insert(analytic.end(), g.vec().begin(), g.vec().end());
  }
  const auto report = fd_gradient_check(loss_at, flat, analytic, {1e-5, 200, 12});
  r.passed = report.coords_checked >= 200 && report.max_rel_error <= 1e-3;
  r.detail = fmt("max relative error %.3g (<= 1e-3) over %.0f parameters", report.max_rel_error,
                 static_cast<double>(report.coords_checked));
  return r;
}

CheckResult check_loss_endpoints() {
  CheckResult r;
  r.name = "loss schedule endpoints";
  double worst = 0;
  bool bitwise = true;
  Rng rng(5);
  for (int n : {2, 10, 100, 1000}) {
    const std::size_t steps = 7;
    const std::vector<double> zeros(steps, 0.0);
    const std::vector<double> ones(steps, 1.0);
    const int label = uniform_int(rng, 0, n - 1);
    Tensor<double> zero_logits({steps, static_cast<std::size_t>(n)}, 0.0);
    const double at_zero =
        sequence_loss_value(zero_logits, build_targets<double>(n, label, zeros, LossMode::Scheduled));
    worst = std::max(worst, std::abs(at_zero - std::log(static_cast<double>(n))));

    Tensor<float> logits({steps, static_cast<std::size_t>(n)});
    for (float& v : logits.vec()) v = static_cast<float>(uniform(rng, -4.0, 4.0));
    Tape<float> ta;
    Tape<float> tb;
    const float sched = ta.value(sequence_loss(ta, ta.constant(logits),
                                               build_targets<float>(n, label, ones, LossMode::Scheduled)))
                            .item();
    const float standard =
        tb.value(sequence_loss(tb, tb.constant(logits),
                               build_targets<float>(n, label, zeros, LossMode::StandardCE)))
            .item();
    bitwise = bitwise && std::bit_cast<std::uint32_t>(sched) == std::bit_cast<std::uint32_t>(standard);
  }
  r.passed = worst <= 1e-9 && bitwise;
  r.detail = fmt("r=0 zero-logit loss off ln N by %.3g (<= 1e-9); r=1 equals CE bitwise: ", worst) +
             (bitwise ? "yes" : "no");
  return r;
}

CheckResult check_coverage() {
  CheckResult r;
  r.name = "coverage bitmap and ratio monotonicity";
  Rng rng(17);
  int mismatches = 0;
  for (int inst = 0; inst < 500; ++inst) {
    const int side = uniform_int(rng, 4, 40);
    const int w = uniform_int(rng, 1, side);
    const int h = uniform_int(rng, 1, side);
    const Rect region{uniform_int(rng, 0, side - w), uniform_int(rng, 0, side - h), w, h};
    CoverageMap map(region);
    std::vector<char> brute(static_cast<std::size_t>(side * side), 0);
    const int patches = uniform_int(rng, 1, 20);
    for (int k = 0; k < patches; ++k) {
      const int p = uniform_int(rng, 1, 8);
      const Rect patch{uniform_int(rng, -p, side), uniform_int(rng, -p, side), p, p};
      const double ratio = map.update(patch);
      long count = 0;
      for (int y = 0; y < side; ++y) {
        for (int x = 0; x < side; ++x) {
          const bool in_patch = x >= patch.x0 && x < patch.x0 + p && y >= patch.y0 && y < patch.y0 + p;
          const bool in_region = x >= region.x0 && x < region.x0 + w && y >= region.y0 && y < region.y0 + h;
          char& cell = brute[static_cast<std::size_t>(y * side + x)];
          if (in_patch && in_region) cell = 1;
          count += cell;
        }
      }
      if (map.covered_count() != count || map.popcount() != count ||
          ratio != static_cast<double>(count) / static_cast<double>(region.area())) {
        ++mismatches;
      }
    }
    for (int y = region.y0; y < region.y0 + h; ++y) {
      for (int x = region.x0; x < region.x0 + w; ++x) {
        if (map.covered(x, y) != (brute[static_cast<std::size_t>(y * side + x)] != 0)) ++mismatches;
      }
    }
  }

  int violations = 0;
  const ScanKind kinds[] = {ScanKind::RandomImage, ScanKind::RandomMixed, ScanKind::RasterHorizontal,
                            ScanKind::ZigzagHorizontal};
  for (int traj = 0; traj < 10000; ++traj) {
    const int patch = uniform_int(rng, 2, 6);
    const int side = uniform_int(rng, patch, 32);
    const int w = uniform_int(rng, patch, side);
    const int h = uniform_int(rng, patch, side);
    Canvas canvas;
    canvas.pixels = Image(1, side, side);
    canvas.image_region = Rect{uniform_int(rng, 0, side - w), uniform_int(rng, 0, side - h), w, h};
    TrajectoryCursor cursor(canvas, {kinds[traj % 4], derive_seed(19, {static_cast<std::uint64_t>(traj)})},
                            patch);
    GlimpseStep step;
    double prev = 0;
    for (int t = 0; t < 24; ++t) {
      cursor.next(step);
      if (step.r < prev || step.r < 0.0 || step.r > 1.0) ++violations;
      prev = step.r;
    }
  }
  r.passed = mismatches == 0 && violations == 0;
  r.detail = fmt("500 instances: %.0f mismatches; 10000 trajectories: %.0f monotonicity violations",
                 mismatches, violations);
  return r;
}

CheckResult check_translation_invariance() {
  CheckResult r;
  r.name = "translation invariance";
  const auto cfg = ModelConfig::preset("micro-2");
  const auto model = GlimpseModel<float>::initialized(cfg, 6);
  const auto emb_cfg = cfg.move_embedding();
  Rng rng(23);
  int emb_failures = 0;
  int logit_failures = 0;
  for (int c = 0; c < 100; ++c) {
    const int steps = uniform_int(rng, 2, 24);
    std::vector<std::pair<int, int>> coords;
    for (int t = 0; t < steps; ++t) coords.emplace_back(uniform_int(rng, 0, 200), uniform_int(rng, 0, 200));
    const int sx = uniform_int(rng, -1000, 1000);
    const int sy = uniform_int(rng, -1000, 1000);
    for (int t = 0; t < steps; ++t) {
      const bool first = t == 0;
      const auto [x, y] = coords[static_cast<std::size_t>(t)];
      const auto [px, py] = first ? coords[0] : coords[static_cast<std::size_t>(t - 1)];
      const auto a = encode_move<float>(x - px, y - py, first, emb_cfg);
      const auto b = encode_move<float>((x + sx) - (px + sx), (y + sy) - (py + sy), first, emb_cfg);
      if (a != b) ++emb_failures;
    }

    const int w = uniform_int(rng, cfg.patch, 20);
    const int h = uniform_int(rng, cfg.patch, 20);
    const int side = 48;
    const Rect ra{uniform_int(rng, 0, side - w), uniform_int(rng, 0, side - h), w, h};
    const Rect rb{uniform_int(rng, 0, side - w), uniform_int(rng, 0, side - h), w, h};
    const Canvas a = random_canvas(rng, side, ra);
    Canvas b;
    b.pixels = Image(3, side, side);
    b.image_region = rb;
    for (int ch = 0; ch < 3; ++ch)
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) b.pixels.at(ch, rb.y0 + y, rb.x0 + x) = a.pixels.at(ch, ra.y0 + y, ra.x0 + x);
    const ScanPolicy policy{ScanKind::RandomImage, derive_seed(29, {static_cast<std::uint64_t>(c)})};
    const auto ta = generate_trajectory(a, policy, steps, cfg.patch);
    const auto tb = generate_trajectory(b, policy, steps, cfg.patch);
    const auto la = model.forward(build_inputs<float>(ta, cfg));
    const auto lb = model.forward(build_inputs<float>(tb, cfg));
    if (la.vec() != lb.vec()) ++logit_failures;
  }
  r.passed = emb_failures == 0 && logit_failures == 0;
  r.detail = fmt("100 cases: %.0f move-embedding and %.0f logit mismatches", emb_failures, logit_failures);
  return r;
}

CheckResult check_flops_linearity() {
  CheckResult r;
  r.name = "FLOP count linear in T";
  double worst = 0;
  for (const auto& name : ModelConfig::preset_names()) {
    const auto cfg = ModelConfig::preset(name);
    worst = std::max(worst, std::abs(count_flops(cfg, 4096) / count_flops(cfg, 1024) - 4.0) / 4.0);
  }
  r.passed = worst <= 0.005;
  r.detail = fmt("max |flops(4096)/flops(1024) - 4| / 4 = %.3g (<= 0.005)", worst);
  return r;
}

std::vector<NamedCheck> selfcheck_suite() {
  return {{"dual-mode", check_dual_mode},
          {"scan", check_scan_bruteforce},
          {"gradient", check_gradient},
          {"loss-endpoints", check_loss_endpoints},
          {"coverage", check_coverage},
          {"translation", check_translation_invariance},
          {"flops", check_flops_linearity}};
}

CheckResult run_check(const NamedCheck& check) {
  const auto start = std::chrono::steady_clock::now();
  CheckResult r;
  try {
    r = check.run();
  } catch (const std::exception& e) {
    r.name = check.name;
    r.passed = false;
    r.detail = std::string("threw: ") + e.what();
  }
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return r;
}

}  // namespace mambaeye
