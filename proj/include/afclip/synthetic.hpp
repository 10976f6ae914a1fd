#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "afclip/types.hpp"

namespace afclip {

struct SyntheticSample {
  Image image;
  Matrix mask;  // 1 on defect pixels
  int label = 0;
};

struct SyntheticConfig {
  int count = 64;
  int size = 64;
  double anomalous_fraction = 0.5;
  std::uint64_t seed = 7;
};

namespace detail {

inline void paint(Image& img, Matrix& mask, int y, int x, const std::array<float, 3>& rgb) {
  if (y < 0 || x < 0 || y >= img.height || x >= img.width) return;
  for (int c = 0; c < 3; ++c) img.at(y, x, c) = rgb[static_cast<std::size_t>(c)];
  mask(y, x) = 1.0;
}

}  // namespace detail

// A textured square (striped grating with per-image phase, tint and noise)
// on a dark background. Anomalous samples get one defect inside the square:
// a dark-red elliptical blob or a dark scratch of one to two pixels.
inline std::vector<SyntheticSample> make_textured_squares(const SyntheticConfig& config) {
  require(config.count > 0 && config.size >= 16, "synthetic corpus: need count > 0 and size >= 16");
  std::mt19937_64 rng(config.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, 0.03);
  const int s = config.size;
  const int margin = s / 16;
  const auto n_anomalous = static_cast<int>(std::lround(config.anomalous_fraction * config.count));

  std::vector<SyntheticSample> out;
  out.reserve(static_cast<std::size_t>(config.count));
  for (int k = 0; k < config.count; ++k) {
    // spread the anomalous samples evenly through the sequence
    const int label = static_cast<int>((static_cast<long>(k + 1) * n_anomalous) / config.count -
                                       (static_cast<long>(k) * n_anomalous) / config.count);
    SyntheticSample sample{Image(s, s), Matrix::Zero(s, s), label};
    const double phase = 2.0 * M_PI * unit(rng);
    const double angle = 0.25 * M_PI * (unit(rng) - 0.5);
    const double tint = 0.05 * (unit(rng) - 0.5);
    const double period = 8.0;
    for (int y = 0; y < s; ++y) {
      for (int x = 0; x < s; ++x) {
        const bool inside = y >= margin && y < s - margin && x >= margin && x < s - margin;
        if (!inside) {
          for (int c = 0; c < 3; ++c) sample.image.at(y, x, c) = static_cast<float>(0.1 + noise(rng));
          continue;
        }
        const double u = std::cos(angle) * x + std::sin(angle) * y;
        const double stripe = 0.5 + 0.5 * std::sin(2.0 * M_PI * u / period + phase);
        const double base = 0.55 + 0.1 * stripe + tint;
        sample.image.at(y, x, 0) = static_cast<float>(base + 0.08 + noise(rng));
        sample.image.at(y, x, 1) = static_cast<float>(base + 0.02 + noise(rng));
        sample.image.at(y, x, 2) = static_cast<float>(base - 0.10 + noise(rng));
      }
    }
    if (sample.label == 1) {
      const int lo = margin + s / 8;
      const int hi = s - margin - s / 8;
      const double cy = lo + (hi - lo) * unit(rng);
      const double cx = lo + (hi - lo) * unit(rng);
      if (unit(rng) < 0.5) {
        const double ry = s / 16.0 + (s / 16.0) * unit(rng);
        const double rx = s / 16.0 + (s / 16.0) * unit(rng);
        const std::array<float, 3> color{0.45f, 0.12f, 0.08f};
        for (int y = static_cast<int>(cy - ry) - 1; y <= static_cast<int>(cy + ry) + 1; ++y)
          for (int x = static_cast<int>(cx - rx) - 1; x <= static_cast<int>(cx + rx) + 1; ++x) {
            const double dy = (y - cy) / ry;
            const double dx = (x - cx) / rx;
            if (dy * dy + dx * dx <= 1.0) detail::paint(sample.image, sample.mask, y, x, color);
          }
      } else {
        const double theta = M_PI * unit(rng);
        const double half = s / 8.0 + (s / 8.0) * unit(rng);
        const int thickness = 2 + static_cast<int>(unit(rng) * 2.0);
        const std::array<float, 3> color{0.15f, 0.1f, 0.1f};
        for (double t = -half; t <= half; t += 0.25) {
          const int y = static_cast<int>(std::lround(cy + t * std::sin(theta)));
          const int x = static_cast<int>(std::lround(cx + t * std::cos(theta)));
          for (int dy = 0; dy < thickness; ++dy)
            for (int dx = 0; dx < thickness; ++dx) detail::paint(sample.image, sample.mask, y + dy, x + dx, color);
        }
      }
    }
    for (auto& v : sample.image.pixels) v = std::clamp(v, 0.0f, 1.0f);
    out.push_back(std::move(sample));
  }
  return out;
}

}  // namespace afclip
