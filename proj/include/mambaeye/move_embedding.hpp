#pragma once

#include <span>
#include <vector>

namespace mambaeye {

struct MoveEmbeddingConfig {
  int d_move_emb = 512;
  int d_axis = 256;
  double freq_base = 10000.0;

  /// Throws std::invalid_argument unless d_move_emb == 2 * d_axis and d_axis is even.
  void validate() const;
};

/// Writes concat(enc(dx), enc(dy)) into `out` (length d_move_emb), with
/// enc(d)[2i] = sin(d / base^(2i / d_axis)) and enc(d)[2i+1] the matching cos.
/// The initial step of a trajectory is encoded as the zero vector.
template <typename T>
void encode_move(int dx, int dy, bool initial, const MoveEmbeddingConfig& cfg, std::span<T> out);

template <typename T>
std::vector<T> encode_move(int dx, int dy, bool initial, const MoveEmbeddingConfig& cfg) {
  std::vector<T> out(static_cast<std::size_t>(cfg.d_move_emb));
  encode_move<T>(dx, dy, initial, cfg, std::span<T>(out));
  return out;
}

}  // namespace mambaeye
