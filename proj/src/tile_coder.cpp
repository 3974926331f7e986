#include "optterm/env/tile_coder.hpp"

#include <algorithm>
#include <cmath>

#include "optterm/errors.hpp"

namespace optterm {

TileCoder::TileCoder(TileCoderConfig cfg) : cfg_(cfg), tiles_per_tiling_(cfg.tiles_per_dim * cfg.tiles_per_dim) {
  if (cfg_.position_tilings < 0 || cfg_.velocity_tilings < 0 || cfg_.n_tilings() < 1 || cfg_.tiles_per_dim < 1) {
    throw ConfigError("tile coder needs at least one tiling and one tile per dimension");
  }
  // Asymmetric displacement (1, 3) spreads the offsets within each group.
  auto fill = [&](int count) {
    for (int k = 0; k < count; ++k) {
      offset_a_.push_back(std::fmod(static_cast<double>(k) / count, 1.0));
      offset_b_.push_back(std::fmod(3.0 * k / count, 1.0));
    }
  };
  fill(cfg_.position_tilings);
  fill(cfg_.velocity_tilings);
}

int TileCoder::tile(double value, double lo, double hi, double offset) const {
  const int n = cfg_.tiles_per_dim;
  if (value < lo || value > hi || !std::isfinite(value)) {
    ++clamped_;
    value = std::isfinite(value) ? std::clamp(value, lo, hi) : lo;
  }
  const double scaled = (value - lo) / (hi - lo) * n + offset;
  return std::min(static_cast<int>(scaled), n - 1);
}

std::vector<int> TileCoder::features(const PinballState& s) const {
  std::vector<int> out;
  out.reserve(static_cast<std::size_t>(n_tilings()));
  const int n = cfg_.tiles_per_dim;
  for (int k = 0; k < n_tilings(); ++k) {
    const bool position = k < cfg_.position_tilings;
    const auto i = static_cast<std::size_t>(k);
    const int col = position ? tile(s.x, 0.0, 1.0, offset_a_[i]) : tile(s.xdot, -1.0, 1.0, offset_a_[i]);
    const int row = position ? tile(s.y, 0.0, 1.0, offset_b_[i]) : tile(s.ydot, -1.0, 1.0, offset_b_[i]);
    out.push_back(k * tiles_per_tiling_ + row * n + col);
  }
  return out;
}

double q_value(const TileWeights& weights, const std::vector<int>& features, int option) {
  double v = 0.0;
  for (int f : features) v += weights.w(f, option);
  return v;
}

void apply_update(TileWeights& weights, const std::vector<int>& features, int option, double delta, double alpha) {
  const double step = alpha * delta / static_cast<double>(features.size());
  for (int f : features) weights.w(f, option) += step;
}

}  // namespace optterm
