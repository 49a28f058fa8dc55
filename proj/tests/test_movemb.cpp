#include <gtest/gtest.h>

#include <cmath>
#include <set>
#include <vector>

#include "mambaeye/move_embedding.hpp"

using namespace mambaeye;

TEST(MoveEmbedding, InitialStepIsZeroVector) {
  const auto m = encode_move<double>(5, -3, true, MoveEmbeddingConfig{});
  ASSERT_EQ(m.size(), 512u);
  for (double v : m) EXPECT_EQ(v, 0.0);
}

TEST(MoveEmbedding, ZeroMoveAlternatesZeroAndOne) {
  const auto m = encode_move<double>(0, 0, false, MoveEmbeddingConfig{});
  for (std::size_t i = 0; i < m.size(); ++i) EXPECT_EQ(m[i], i % 2 == 0 ? 0.0 : 1.0);
}

TEST(MoveEmbedding, MatchesSinusoidFormula) {
  const MoveEmbeddingConfig cfg{};
  const auto m = encode_move<double>(7, -12, false, cfg);
  for (int i = 0; i < cfg.d_axis / 2; ++i) {
    const double w = std::pow(cfg.freq_base, -2.0 * i / cfg.d_axis);
    EXPECT_NEAR(m[2 * i], std::sin(7 * w), 1e-15);
    EXPECT_NEAR(m[2 * i + 1], std::cos(7 * w), 1e-15);
    EXPECT_NEAR(m[cfg.d_axis + 2 * i], std::sin(-12 * w), 1e-15);
    EXPECT_NEAR(m[cfg.d_axis + 2 * i + 1], std::cos(-12 * w), 1e-15);
  }
}

TEST(MoveEmbedding, NegationFlipsSinKeepsCos) {
  const MoveEmbeddingConfig cfg{};
  const auto a = encode_move<double>(9, 4, false, cfg);
  const auto b = encode_move<double>(-9, -4, false, cfg);
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (i % 2 == 0) EXPECT_EQ(a[i], -b[i]);
    else EXPECT_EQ(a[i], b[i]);
  }
}

TEST(MoveEmbedding, BoundedByOne) {
  for (int dx = -64; dx <= 64; dx += 7) {
    for (int dy = -64; dy <= 64; dy += 5) {
      for (float v : encode_move<float>(dx, dy, false, MoveEmbeddingConfig{})) {
        ASSERT_LE(std::abs(v), 1.0f);
      }
    }
  }
}

TEST(MoveEmbedding, InjectiveOnSmallGrid) {
  std::set<std::vector<double>> seen;
  for (int dx = -64; dx <= 64; ++dx) {
    for (int dy = -64; dy <= 64; ++dy) {
      seen.insert(encode_move<double>(dx, dy, false, MoveEmbeddingConfig{}));
    }
  }
  EXPECT_EQ(seen.size(), 129u * 129u);
}

TEST(MoveEmbedding, ConfigValidation) {
  EXPECT_THROW((MoveEmbeddingConfig{100, 60, 10000.0}).validate(), std::invalid_argument);
  EXPECT_THROW((MoveEmbeddingConfig{6, 3, 10000.0}).validate(), std::invalid_argument);
  EXPECT_NO_THROW((MoveEmbeddingConfig{32, 16, 10000.0}).validate());
}
