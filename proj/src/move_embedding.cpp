#include "mambaeye/move_embedding.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace mambaeye {

void MoveEmbeddingConfig::validate() const {
  if (d_axis <= 0 || d_axis % 2 != 0 || d_move_emb != 2 * d_axis) {
    throw std::invalid_argument("move embedding needs d_move_emb == 2 * d_axis with even d_axis (got " +
                                std::to_string(d_move_emb) + ", " + std::to_string(d_axis) + ")");
  }
}

template <typename T>
void encode_move(int dx, int dy, bool initial, const MoveEmbeddingConfig& cfg, std::span<T> out) {
  if (out.size() != static_cast<std::size_t>(cfg.d_move_emb)) {
    throw std::invalid_argument("move embedding output has wrong length");
  }
  if (initial) {
    std::fill(out.begin(), out.end(), T(0));
    return;
  }
  const int axis = cfg.d_axis;
  for (int i = 0; i < axis / 2; ++i) {
    const double inv_freq = std::pow(cfg.freq_base, -2.0 * i / axis);
    const double ax = dx * inv_freq;
    const double ay = dy * inv_freq;
    out[2 * i] = static_cast<T>(std::sin(ax));
    out[2 * i + 1] = static_cast<T>(std::cos(ax));
    out[axis + 2 * i] = static_cast<T>(std::sin(ay));
    out[axis + 2 * i + 1] = static_cast<T>(std::cos(ay));
  }
}

template void encode_move<float>(int, int, bool, const MoveEmbeddingConfig&, std::span<float>);
template void encode_move<double>(int, int, bool, const MoveEmbeddingConfig&, std::span<double>);

}  // namespace mambaeye
