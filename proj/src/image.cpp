#include "trafficview/image.hpp"

#include <filesystem>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include "trafficview/error.hpp"

namespace trafficview {

GrayImage::GrayImage(int rows, int cols, std::uint8_t fill)
    : rows_(rows), cols_(cols), pixels_(static_cast<std::size_t>(rows) * cols, fill) {
  if (rows < 1 || cols < 1) throw InvalidArgument("image dimensions must be positive");
}

GrayImage::GrayImage(int rows, int cols, std::vector<std::uint8_t> pixels)
    : rows_(rows), cols_(cols), pixels_(std::move(pixels)) {
  if (rows < 1 || cols < 1) throw InvalidArgument("image dimensions must be positive");
  if (pixels_.size() != static_cast<std::size_t>(rows) * cols) throw InvalidArgument("pixel buffer size mismatch");
}

GrayImage load_gray(const std::string& path) {
  if (!std::filesystem::exists(path)) throw IoError("no such file: " + path);
  cv::Mat m;
  try {
    m = cv::imread(path, cv::IMREAD_GRAYSCALE);
  } catch (const cv::Exception& e) {
    throw IoError("cannot decode " + path + ": " + e.what());
  }
  if (m.empty() || m.type() != CV_8UC1) throw IoError("cannot decode " + path);
  std::vector<std::uint8_t> px(static_cast<std::size_t>(m.rows) * m.cols);
  for (int r = 0; r < m.rows; ++r) {
    const auto* row = m.ptr<std::uint8_t>(r);
    std::copy(row, row + m.cols, px.begin() + static_cast<std::ptrdiff_t>(r) * m.cols);
  }
  return GrayImage(m.rows, m.cols, std::move(px));
}

void save_png(const GrayImage& image, const std::string& path) {
  if (image.empty()) throw InvalidArgument("cannot save an empty image");
  auto parent = std::filesystem::path(path).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
  cv::Mat m(image.rows(), image.cols(), CV_8UC1, const_cast<std::uint8_t*>(image.pixels().data()));
  if (!cv::imwrite(path, m)) throw IoError("cannot write " + path);
}

}  // namespace trafficview
