#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace trafficview {

/// 8-bit single-channel image, row-major.
class GrayImage {
 public:
  GrayImage() = default;
  GrayImage(int rows, int cols, std::uint8_t fill = 0);
  GrayImage(int rows, int cols, std::vector<std::uint8_t> pixels);

  int rows() const noexcept { return rows_; }
  int cols() const noexcept { return cols_; }
  bool empty() const noexcept { return pixels_.empty(); }

  std::uint8_t at(int r, int c) const { return pixels_[static_cast<std::size_t>(r) * cols_ + c]; }
  std::uint8_t& at(int r, int c) { return pixels_[static_cast<std::size_t>(r) * cols_ + c]; }

  std::span<const std::uint8_t> pixels() const noexcept { return pixels_; }

  friend bool operator==(const GrayImage&, const GrayImage&) = default;

 private:
  int rows_ = 0;
  int cols_ = 0;
  std::vector<std::uint8_t> pixels_;
};

/// Decodes any PNG/JPEG (color or gray) into the canonical grayscale form.
/// Throws IoError when the file is missing or cannot be decoded.
GrayImage load_gray(const std::string& path);

/// Writes a lossless grayscale PNG.
void save_png(const GrayImage& image, const std::string& path);

}  // namespace trafficview
