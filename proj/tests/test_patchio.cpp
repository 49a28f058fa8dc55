#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <vector>

#include "mambaeye/dataset.hpp"
#include "mambaeye/patchio.hpp"

using namespace mambaeye;

namespace {

Canvas blank_canvas(int side, Rect region, int channels = 3) {
  Canvas c;
  c.pixels = Image(channels, side, side);
  c.image_region = region;
  return c;
}

Image gradient_image(int h, int w) {
  Image img(3, h, w);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) img.at(c, y, x) = 0.1f * c + 0.01f * y + 0.001f * x;
  return img;
}

std::vector<std::pair<int, int>> cells(const std::vector<GlimpseStep>& traj, const Canvas& c,
                                       int patch) {
  std::vector<std::pair<int, int>> out;
  for (const auto& g : traj) {
    out.emplace_back((g.x - c.image_region.x0) / patch, (g.y - c.image_region.y0) / patch);
  }
  return out;
}

// Brute-force coverage: a plain boolean bitmap over the image region.
double brute_coverage(const Rect& region, const std::vector<Rect>& patches) {
  std::vector<char> hit(static_cast<std::size_t>(region.area()), 0);
  for (const Rect& p : patches) {
    for (int y = p.y0; y < p.y0 + p.h; ++y) {
      for (int x = p.x0; x < p.x0 + p.w; ++x) {
        if (x >= region.x0 && x < region.x0 + region.w && y >= region.y0 &&
            y < region.y0 + region.h) {
          hit[static_cast<std::size_t>((y - region.y0) * region.w + (x - region.x0))] = 1;
        }
      }
    }
  }
  long n = 0;
  for (char h : hit) n += h;
  return static_cast<double>(n) / region.area();
}

std::filesystem::path temp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("mambaeye_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace

TEST(Canvas, EvalCanvasResizesLongSideAndCentres) {
  const Canvas c = make_eval_canvas(gradient_image(32, 64), 128);
  EXPECT_EQ(c.width(), 128);
  EXPECT_EQ(c.height(), 128);
  EXPECT_EQ(c.image_region, (Rect{0, 32, 128, 64}));
  EXPECT_EQ(c.pixels.at(0, 0, 0), 0.0f);
  EXPECT_EQ(c.pixels.at(2, 127, 127), 0.0f);
}

TEST(Canvas, TrainCanvasPastesUnresizedAndGrowsForLargeImages) {
  Rng rng(1);
  const Image img = gradient_image(20, 30);
  for (int i = 0; i < 50; ++i) {
    const Canvas c = make_train_canvas(img, 32, 64, rng);
    EXPECT_EQ(c.width(), c.height());
    EXPECT_GE(c.width(), 32);
    EXPECT_LE(c.width(), 64);
    EXPECT_EQ(c.image_region.w, 30);
    EXPECT_EQ(c.image_region.h, 20);
    EXPECT_EQ(c.pixels.at(1, c.image_region.y0 + 3, c.image_region.x0 + 4), img.at(1, 3, 4));
  }
  const Canvas big = make_train_canvas(gradient_image(80, 40), 32, 64, rng);
  EXPECT_EQ(big.height(), 80);
  EXPECT_TRUE((Rect{0, 0, big.width(), big.height()}).contains(big.image_region));
}

TEST(Scan, RasterRepeatsCyclically) {
  const Canvas c = blank_canvas(32, Rect{0, 0, 32, 32});
  const auto traj = generate_trajectory(c, {ScanKind::RasterHorizontal, 0}, 6, 16);
  const std::vector<std::pair<int, int>> want{{0, 0}, {1, 0}, {0, 1}, {1, 1}, {0, 0}, {1, 0}};
  EXPECT_EQ(cells(traj, c, 16), want);
  EXPECT_TRUE(traj[0].initial);
  EXPECT_FALSE(traj[1].initial);
}

TEST(Scan, ZigzagReversesOddRows) {
  const Canvas c = blank_canvas(32, Rect{0, 0, 32, 32});
  const auto traj = generate_trajectory(c, {ScanKind::ZigzagHorizontal, 0}, 4, 16);
  const std::vector<std::pair<int, int>> want{{0, 0}, {1, 0}, {1, 1}, {0, 1}};
  EXPECT_EQ(cells(traj, c, 16), want);
}

TEST(Scan, DeterministicScanTruncatesLargeGrids) {
  const Canvas c = blank_canvas(64, Rect{0, 0, 64, 64});
  const auto traj = generate_trajectory(c, {ScanKind::RasterHorizontal, 0}, 3, 8);
  EXPECT_EQ(cells(traj, c, 8), (std::vector<std::pair<int, int>>{{0, 0}, {1, 0}, {2, 0}}));
}

TEST(Scan, RasterRowWrapAndZigzagRowTransition) {
  const Canvas c = make_eval_canvas(gradient_image(32, 64), 128);
  const int p = 16;
  auto raster = generate_trajectory(c, {ScanKind::RasterHorizontal, 0}, 64, p);
  TrajectoryCursor rc(c, {ScanKind::RasterHorizontal, 0}, p);
  const int gw = rc.grid_width();
  ASSERT_EQ(gw, 8);
  for (std::size_t t = 1; t < raster.size(); ++t) {
    if (t % gw == 0 && t % (gw * rc.grid_height()) != 0) {
      EXPECT_EQ(std::abs(raster[t].dx), (gw - 1) * p);
      EXPECT_EQ(raster[t].dy, p);
    } else if (t % gw != 0) {
      EXPECT_EQ(raster[t].dx, p);
      EXPECT_EQ(raster[t].dy, 0);
    }
  }
  auto zz = generate_trajectory(c, {ScanKind::ZigzagHorizontal, 0}, 32, p);
  for (std::size_t t = 1; t < zz.size(); ++t) {
    if (t % gw == 0) {
      EXPECT_EQ(zz[t].dx, 0);
      EXPECT_EQ(zz[t].dy, p);
    } else {
      EXPECT_EQ(std::abs(zz[t].dx), p);
      EXPECT_EQ(zz[t].dy, 0);
    }
  }
}

TEST(Scan, DeterministicScanRejectsRegionSmallerThanPatch) {
  const Canvas c = blank_canvas(32, Rect{8, 8, 10, 10});
  EXPECT_THROW(generate_trajectory(c, {ScanKind::RasterHorizontal, 0}, 4, 16), TrajectoryError);
  EXPECT_NO_THROW(generate_trajectory(c, {ScanKind::RandomImage, 0}, 4, 16));
}

TEST(Scan, FirstRandomPatchRatio) {
  const Canvas c = blank_canvas(64, Rect{16, 16, 32, 32});
  const auto traj = generate_trajectory(c, {ScanKind::RandomImage, 3}, 1, 16);
  EXPECT_DOUBLE_EQ(traj[0].r, 0.25);
  EXPECT_EQ(traj[0].dx, 0);
  EXPECT_EQ(traj[0].dy, 0);
}

TEST(Scan, RandomImagePatchesStayInsideRegion) {
  const Canvas c = make_eval_canvas(gradient_image(32, 64), 128);
  TrajectoryCursor cursor(c, {ScanKind::RandomImage, 11}, 16);
  GlimpseStep g;
  for (int i = 0; i < 10000; ++i) {
    cursor.next(g);
    ASSERT_TRUE(c.image_region.contains(Rect{g.x, g.y, 16, 16}));
  }
}

TEST(Scan, RandomMixedSplitsTrajectoriesBetweenImageAndCanvas) {
  const Canvas c = blank_canvas(96, Rect{32, 32, 32, 32});
  int whole = 0;
  for (std::uint64_t s = 0; s < 400; ++s) {
    TrajectoryCursor cursor(c, {ScanKind::RandomMixed, s}, 8);
    whole += cursor.samples_whole_canvas();
  }
  EXPECT_GT(whole, 140);
  EXPECT_LT(whole, 260);
}

TEST(Scan, FixedSeedIsBitReproducible) {
  const Canvas c = make_eval_canvas(gradient_image(40, 40), 64);
  for (ScanKind k : {ScanKind::RandomImage, ScanKind::RandomMixed}) {
    const auto a = generate_trajectory(c, {k, 99}, 200, 8);
    const auto b = generate_trajectory(c, {k, 99}, 200, 8);
    for (std::size_t t = 0; t < a.size(); ++t) {
      ASSERT_EQ(a[t].x, b[t].x);
      ASSERT_EQ(a[t].y, b[t].y);
      ASSERT_EQ(a[t].r, b[t].r);
      ASSERT_EQ(a[t].v, b[t].v);
    }
  }
}

TEST(Coverage, PaddingPatchLeavesRatioUnchanged) {
  CoverageMap m(Rect{16, 16, 32, 32});
  const double r0 = m.update(Rect{20, 20, 8, 8});
  EXPECT_EQ(m.update(Rect{0, 0, 16, 16}), r0);
}

TEST(Coverage, TilingReachesOne) {
  CoverageMap m(Rect{0, 0, 32, 32});
  for (int y = 0; y < 32; y += 16)
    for (int x = 0; x < 32; x += 16) m.update(Rect{x, y, 16, 16});
  EXPECT_EQ(m.ratio(), 1.0);
}

TEST(Coverage, HalfOverlappingPatches) {
  CoverageMap m(Rect{0, 0, 32, 32});
  m.update(Rect{0, 0, 16, 16});
  EXPECT_DOUBLE_EQ(m.update(Rect{8, 0, 16, 16}), 0.375);
}

TEST(Coverage, ZigzagCoversEveryPixelAfterGridSteps) {
  const Canvas c = make_eval_canvas(gradient_image(32, 64), 128);
  const auto traj = generate_trajectory(c, {ScanKind::ZigzagHorizontal, 0}, 32, 16);
  EXPECT_EQ(traj.back().r, 1.0);
  EXPECT_LT(traj[30].r, 1.0);
}

TEST(Coverage, MatchesBruteForceAndIsMonotone) {
  Rng rng(5);
  for (int inst = 0; inst < 200; ++inst) {
    const int side = uniform_int(rng, 20, 90);
    const Rect region{uniform_int(rng, 0, 10), uniform_int(rng, 0, 10), uniform_int(rng, 1, side),
                      uniform_int(rng, 1, side)};
    CoverageMap m(region);
    std::vector<Rect> patches;
    double prev = 0;
    const int n = uniform_int(rng, 1, 30);
    for (int i = 0; i < n; ++i) {
      const int p = uniform_int(rng, 1, 40);
      patches.push_back(Rect{uniform_int(rng, -10, side), uniform_int(rng, -10, side), p, p});
      const double r = m.update(patches.back());
      EXPECT_GE(r, prev);
      EXPECT_LE(r, 1.0);
      prev = r;
    }
    EXPECT_EQ(m.ratio(), brute_coverage(region, patches));
    EXPECT_EQ(m.popcount(), m.covered_count());
  }
}

TEST(Augment, IdentityWhenDisabled) {
  const Image img = gradient_image(24, 24);
  EXPECT_EQ(augment(img, AugmentConfig::none(), 7).pixels, img.pixels);
}

TEST(Augment, ZeroStrengthJitterLeavesImageUnchanged) {
  const Image img = gradient_image(24, 24);
  AugmentConfig cfg;
  cfg.jitter_prob = 1.0;
  EXPECT_EQ(augment(img, cfg, 7).pixels, img.pixels);
}

TEST(Augment, CropOfConstantImageIsConstant) {
  Image img(3, 32, 32, 0.4f);
  AugmentConfig cfg;
  cfg.crop_prob = 1.0;
  cfg.crop_min_area = 0.3;
  cfg.scale_min = 0.5;
  cfg.scale_max = 1.5;
  for (std::uint64_t s = 0; s < 10; ++s) {
    const Image out = augment(img, cfg, s);
    for (float v : out.pixels) ASSERT_NEAR(v, 0.4f, 1e-6f);
  }
}

TEST(Dataset, CifarRoundTripAndErrors) {
  const auto dir = temp_dir("cifar");
  Dataset d = make_synthetic_shapes(20, 32, 3);
  write_cifar10_binary(d, dir / "data_batch_1.bin");
  const Dataset back = load_dataset(dir, DatasetFormat::Cifar10Binary);
  ASSERT_EQ(back.size(), 20u);
  for (std::size_t i = 0; i < 20; ++i) EXPECT_EQ(back.samples[i].label, d.samples[i].label);

  {
    std::ofstream f(dir / "data_batch_2.bin", std::ios::binary);
    std::vector<char> partial(kCifarRecordBytes + 100, 0);
    f.write(partial.data(), static_cast<std::streamsize>(partial.size()));
  }
  try {
    load_cifar10_binary(dir / "data_batch_2.bin");
    FAIL() << "expected DatasetError";
  } catch (const DatasetError& e) {
    EXPECT_NE(std::string(e.what()).find("3073"), std::string::npos) << e.what();
  }
  {
    std::ofstream f(dir / "data_batch_2.bin", std::ios::binary);
    std::vector<char> rec(kCifarRecordBytes, 0);
    rec[0] = 12;
    f.write(rec.data(), static_cast<std::streamsize>(rec.size()));
  }
  EXPECT_THROW(load_cifar10_binary(dir / "data_batch_2.bin"), DatasetError);

  const auto empty = temp_dir("empty");
  try {
    load_image_folder(empty);
    FAIL() << "expected DatasetError";
  } catch (const DatasetError& e) {
    EXPECT_NE(std::string(e.what()).find("no samples"), std::string::npos) << e.what();
  }
}

TEST(Dataset, ImageFolderWithClassDirsAndLabelsCsv) {
  const auto dir = temp_dir("folder");
  const Dataset d = make_synthetic_bars(6, 16, 1);
  for (std::size_t i = 0; i < d.size(); ++i) {
    const auto cls = dir / (d.samples[i].label == 0 ? "horizontal" : "vertical");
    std::filesystem::create_directories(cls);
    write_png(cls / ("img" + std::to_string(i) + ".png"), d.samples[i].image);
  }
  const Dataset back = load_image_folder(dir);
  EXPECT_EQ(back.size(), 6u);
  EXPECT_EQ(back.num_classes, 2);

  const auto flat = temp_dir("flat");
  std::ofstream csv(flat / "labels.csv");
  csv << "filename,label\n";
  for (std::size_t i = 0; i < d.size(); ++i) {
    write_png(flat / ("x" + std::to_string(i) + ".png"), d.samples[i].image);
    csv << "x" << i << ".png," << d.samples[i].label << "\n";
  }
  csv.close();
  const Dataset flat_back = load_image_folder(flat, 2);
  ASSERT_EQ(flat_back.size(), 6u);
  EXPECT_THROW(load_image_folder(flat, 1), DatasetError);
}
