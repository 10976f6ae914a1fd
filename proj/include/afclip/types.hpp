#pragma once

#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "afclip/errors.hpp"

namespace afclip {

// Token matrices are row-per-token, so row-major keeps each token contiguous.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

// Interleaved RGB raster, values nominally in [0, 1] before normalization.
struct Image {
  int height = 0;
  int width = 0;
  std::vector<float> pixels;  // height * width * 3, HWC

  Image() = default;
  Image(int h, int w) : height(h), width(w), pixels(static_cast<std::size_t>(h) * w * 3, 0.0f) {}

  float& at(int y, int x, int c) { return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
  float at(int y, int x, int c) const {
    return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + c];
  }
};

inline bool all_finite(const Matrix& m) { return m.allFinite(); }

inline void check_finite(const Matrix& m, const char* what) {
  if (!m.allFinite()) throw NumericError(std::string("non-finite values in ") + what);
}

// 64-bit FNV-1a, used for weight and config fingerprints.
class Fingerprint {
 public:
  void update(const void* data, std::size_t size) {
    const auto* bytes = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < size; ++i) {
      hash_ ^= bytes[i];
      hash_ *= 1099511628211ULL;
    }
  }
  void update(const Matrix& m) {
    const std::int64_t dims[2] = {m.rows(), m.cols()};
    update(dims, sizeof(dims));
    update(m.data(), sizeof(double) * static_cast<std::size_t>(m.size()));
  }
  void update(const std::string& s) { update(s.data(), s.size()); }
  std::uint64_t value() const { return hash_; }

 private:
  std::uint64_t hash_ = 14695981039346656037ULL;
};

inline std::string to_hex(std::uint64_t v) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = kDigits[v & 0xF];
    v >>= 4;
  }
  return out;
}

}  // namespace afclip
