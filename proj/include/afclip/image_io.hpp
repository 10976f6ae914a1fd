#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <utility>

#include <opencv2/imgcodecs.hpp>

#include "afclip/types.hpp"

namespace afclip {

inline Image load_image(const std::string& path) {
  const cv::Mat bgr = cv::imread(path, cv::IMREAD_COLOR);
  if (bgr.empty()) throw DataError("cannot read image: " + path);
  Image img(bgr.rows, bgr.cols);
  for (int y = 0; y < bgr.rows; ++y) {
    const auto* row = bgr.ptr<cv::Vec3b>(y);
    for (int x = 0; x < bgr.cols; ++x)
      for (int c = 0; c < 3; ++c) img.at(y, x, c) = static_cast<float>(row[x][2 - c]) / 255.0f;
  }
  return img;
}

// Any non-zero pixel is anomalous.
inline Matrix load_mask(const std::string& path) {
  const cv::Mat gray = cv::imread(path, cv::IMREAD_GRAYSCALE);
  if (gray.empty()) throw DataError("cannot read mask: " + path);
  Matrix m(gray.rows, gray.cols);
  for (int y = 0; y < gray.rows; ++y) {
    const auto* row = gray.ptr<std::uint8_t>(y);
    for (int x = 0; x < gray.cols; ++x) m(y, x) = row[x] > 0 ? 1.0 : 0.0;
  }
  return m;
}

// Width and height without keeping the decoded pixels around.
inline std::pair<int, int> image_size(const std::string& path) {
  const cv::Mat img = cv::imread(path, cv::IMREAD_UNCHANGED);
  if (img.empty()) throw DataError("cannot read image: " + path);
  return {img.rows, img.cols};
}

inline void save_image(const std::string& path, const Image& img) {
  cv::Mat bgr(img.height, img.width, CV_8UC3);
  for (int y = 0; y < img.height; ++y) {
    auto* row = bgr.ptr<cv::Vec3b>(y);
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < 3; ++c)
        row[x][2 - c] = cv::saturate_cast<std::uint8_t>(std::lround(255.0f * img.at(y, x, c)));
  }
  if (!cv::imwrite(path, bgr)) throw DataError("cannot write image: " + path);
}

// 8-bit grayscale rendering of a map, values clipped to [lo, hi].
inline void save_gray(const std::string& path, const Matrix& map, double lo = 0.0, double hi = 1.0) {
  cv::Mat gray(static_cast<int>(map.rows()), static_cast<int>(map.cols()), CV_8UC1);
  const double span = hi > lo ? hi - lo : 1.0;
  for (int y = 0; y < gray.rows; ++y) {
    auto* row = gray.ptr<std::uint8_t>(y);
    for (int x = 0; x < gray.cols; ++x) {
      const double v = std::clamp((map(y, x) - lo) / span, 0.0, 1.0);
      row[x] = static_cast<std::uint8_t>(std::lround(255.0 * v));
    }
  }
  if (!cv::imwrite(path, gray)) throw DataError("cannot write image: " + path);
}

// NumPy .npy (format 1.0, little-endian float64, C order).
inline void save_npy(const std::string& path, const Matrix& m) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write array: " + path);
  std::string header = "{'descr': '<f8', 'fortran_order': False, 'shape': (" +
                       std::to_string(m.rows()) + ", " + std::to_string(m.cols()) + "), }";
  const std::size_t unpadded = 10 + header.size() + 1;
  header.append((64 - unpadded % 64) % 64, ' ');
  header.push_back('\n');
  out.write("\x93NUMPY\x01\x00", 8);
  const auto len = static_cast<std::uint16_t>(header.size());
  out.put(static_cast<char>(len & 0xFF));
  out.put(static_cast<char>(len >> 8));
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  out.write(reinterpret_cast<const char*>(m.data()),
            static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(m.size())));
  if (!out) throw DataError("failed writing array: " + path);
}

inline Matrix load_npy(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read array: " + path);
  char magic[8];
  in.read(magic, 8);
  if (!in || std::string(magic, 6) != "\x93NUMPY") throw DataError("not an npy file: " + path);
  const int lo = in.get();
  const int hi = in.get();
  std::string header(static_cast<std::size_t>(lo | (hi << 8)), '\0');
  in.read(header.data(), static_cast<std::streamsize>(header.size()));
  if (header.find("'<f8'") == std::string::npos || header.find("False") == std::string::npos)
    throw DataError("unsupported npy layout: " + path);
  const auto open = header.find('(');
  const auto comma = header.find(',', open);
  const auto close = header.find(')', open);
  const long rows = std::stol(header.substr(open + 1, comma - open - 1));
  const long cols = std::stol(header.substr(comma + 1, close - comma - 1));
  Matrix m(rows, cols);
  in.read(reinterpret_cast<char*>(m.data()),
          static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(m.size())));
  if (!in) throw DataError("truncated npy file: " + path);
  return m;
}

}  // namespace afclip
