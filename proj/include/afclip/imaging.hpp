#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "afclip/types.hpp"

namespace afclip {

// Bilinear resampling with corner pixels aligned between source and target.
inline Matrix bilinear_resize(const Matrix& src, int out_rows, int out_cols) {
  require(src.rows() > 0 && src.cols() > 0, "bilinear_resize: empty source");
  require(out_rows > 0 && out_cols > 0, "bilinear_resize: empty target");
  const auto coord = [](int o, int out, Eigen::Index in) {
    if (out == 1 || in == 1) return 0.0;
    return static_cast<double>(o) * static_cast<double>(in - 1) / static_cast<double>(out - 1);
  };
  Matrix dst(out_rows, out_cols);
  for (int y = 0; y < out_rows; ++y) {
    const double sy = coord(y, out_rows, src.rows());
    const auto y0 = static_cast<Eigen::Index>(std::floor(sy));
    const auto y1 = std::min<Eigen::Index>(y0 + 1, src.rows() - 1);
    const double fy = sy - static_cast<double>(y0);
    for (int x = 0; x < out_cols; ++x) {
      const double sx = coord(x, out_cols, src.cols());
      const auto x0 = static_cast<Eigen::Index>(std::floor(sx));
      const auto x1 = std::min<Eigen::Index>(x0 + 1, src.cols() - 1);
      const double fx = sx - static_cast<double>(x0);
      const double top = src(y0, x0) + fx * (src(y0, x1) - src(y0, x0));
      const double bottom = src(y1, x0) + fx * (src(y1, x1) - src(y1, x0));
      dst(y, x) = top + fy * (bottom - top);
    }
  }
  return dst;
}

namespace detail {

// Half-sample symmetric reflection (d c b a | a b c d | d c b a).
inline Eigen::Index reflect_index(Eigen::Index i, Eigen::Index n) {
  if (n == 1) return 0;
  const Eigen::Index period = 2 * n;
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - 1 - i;
}

inline std::vector<double> gaussian_kernel(double sigma) {
  const int radius = static_cast<int>(4.0 * sigma + 0.5);
  std::vector<double> k(static_cast<std::size_t>(2 * radius + 1));
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    const double v = std::exp(-0.5 * (i * i) / (sigma * sigma));
    k[static_cast<std::size_t>(i + radius)] = v;
    sum += v;
  }
  for (auto& v : k) v /= sum;
  return k;
}

}  // namespace detail

// Separable Gaussian filter truncated at 4 sigma, reflective borders.
// sigma == 0 returns the input unchanged.
inline Matrix gaussian_blur(const Matrix& src, double sigma) {
  require(sigma >= 0.0, "gaussian_blur: sigma must be non-negative");
  if (sigma == 0.0 || src.size() == 0) return src;
  const auto kernel = detail::gaussian_kernel(sigma);
  const auto radius = static_cast<Eigen::Index>(kernel.size() / 2);
  Matrix tmp(src.rows(), src.cols());
  for (Eigen::Index y = 0; y < src.rows(); ++y) {
    for (Eigen::Index x = 0; x < src.cols(); ++x) {
      double acc = 0.0;
      for (Eigen::Index k = -radius; k <= radius; ++k) {
        acc += kernel[static_cast<std::size_t>(k + radius)] *
               src(y, detail::reflect_index(x + k, src.cols()));
      }
      tmp(y, x) = acc;
    }
  }
  Matrix dst(src.rows(), src.cols());
  for (Eigen::Index y = 0; y < src.rows(); ++y) {
    for (Eigen::Index x = 0; x < src.cols(); ++x) {
      double acc = 0.0;
      for (Eigen::Index k = -radius; k <= radius; ++k) {
        acc += kernel[static_cast<std::size_t>(k + radius)] *
               tmp(detail::reflect_index(y + k, src.rows()), x);
      }
      dst(y, x) = acc;
    }
  }
  return dst;
}

inline Image resize_image(const Image& src, int size) {
  if (src.height == size && src.width == size) return src;
  Image out(size, size);
  Matrix plane(src.height, src.width);
  for (int c = 0; c < 3; ++c) {
    for (int y = 0; y < src.height; ++y)
      for (int x = 0; x < src.width; ++x) plane(y, x) = src.at(y, x, c);
    const Matrix resized = bilinear_resize(plane, size, size);
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x) out.at(y, x, c) = static_cast<float>(resized(y, x));
  }
  return out;
}

// Nearest-neighbour resize for binary masks.
inline Matrix nearest_resize(const Matrix& src, int out_rows, int out_cols) {
  Matrix dst(out_rows, out_cols);
  for (int y = 0; y < out_rows; ++y) {
    const auto sy = std::min<Eigen::Index>(y * src.rows() / out_rows, src.rows() - 1);
    for (int x = 0; x < out_cols; ++x) {
      const auto sx = std::min<Eigen::Index>(x * src.cols() / out_cols, src.cols() - 1);
      dst(y, x) = src(sy, sx);
    }
  }
  return dst;
}

}  // namespace afclip
