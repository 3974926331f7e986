#pragma once

#include <cstdint>
#include <vector>

#include "optterm/core_mdp.hpp"
#include "optterm/env/pinball.hpp"

namespace optterm {

/// Tilings split between the position plane and the velocity plane; every
/// tiling is tiles_per_dim x tiles_per_dim with its own fixed offset.
struct TileCoderConfig {
  int position_tilings = 12;
  int velocity_tilings = 4;
  int tiles_per_dim = 10;

  int n_tilings() const { return position_tilings + velocity_tilings; }
};

class TileCoder {
 public:
  explicit TileCoder(TileCoderConfig cfg = {});

  const TileCoderConfig& config() const { return cfg_; }
  int n_tilings() const { return cfg_.n_tilings(); }
  int n_features() const { return n_tilings() * tiles_per_tiling_; }

  /// One active index per tiling, in tiling order. Out-of-range coordinates
  /// are clamped and counted.
  std::vector<int> features(const PinballState& s) const;

  std::int64_t clamped_count() const { return clamped_; }

 private:
  int tile(double value, double lo, double hi, double offset) const;

  TileCoderConfig cfg_;
  int tiles_per_tiling_;
  std::vector<double> offset_a_;
  std::vector<double> offset_b_;
  mutable std::int64_t clamped_ = 0;
};

/// Linear option values over tile features, one weight column per option.
struct TileWeights {
  Matrix w;

  TileWeights(const TileCoder& coder, int n_options) : w(Matrix::Zero(coder.n_features(), n_options)) {}
};

double q_value(const TileWeights& weights, const std::vector<int>& features, int option);
inline double q_value(const TileWeights& weights, const TileCoder& coder, const PinballState& s, int option) {
  return q_value(weights, coder.features(s), option);
}

/// Adds alpha * delta / n_active to each active weight, which moves the value
/// at the updated state by exactly alpha * delta.
void apply_update(TileWeights& weights, const std::vector<int>& features, int option, double delta, double alpha);
inline void apply_update(TileWeights& weights, const TileCoder& coder, const PinballState& s, int option,
                         double delta, double alpha) {
  apply_update(weights, coder.features(s), option, delta, alpha);
}

}  // namespace optterm
