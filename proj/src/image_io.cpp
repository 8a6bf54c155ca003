#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include <cstring>

#include "histosge/errors.hpp"
#include "histosge/image.hpp"

namespace histosge {
namespace {

cv::Mat to_bgr_mat(const RgbImage& image) {
  cv::Mat rgb(image.height(), image.width(), CV_8UC3, const_cast<std::uint8_t*>(image.data().data()));
  cv::Mat bgr;
  cv::cvtColor(rgb, bgr, cv::COLOR_RGB2BGR);
  return bgr;
}

const std::vector<int> kPngParams = {cv::IMWRITE_PNG_COMPRESSION, 6};

}  // namespace

RgbImage read_image(const std::filesystem::path& path) {
  cv::Mat bgr = cv::imread(path.string(), cv::IMREAD_COLOR);
  if (bgr.empty()) throw FormatError("cannot decode image file " + path.string());
  cv::Mat rgb;
  cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
  RgbImage out(rgb.cols, rgb.rows);
  for (int y = 0; y < rgb.rows; ++y) {
    std::memcpy(&out.data()[static_cast<std::size_t>(y) * rgb.cols * 3], rgb.ptr<std::uint8_t>(y),
                static_cast<std::size_t>(rgb.cols) * 3);
  }
  return out;
}

void write_image(const RgbImage& image, const std::filesystem::path& path) {
  if (!cv::imwrite(path.string(), to_bgr_mat(image), kPngParams)) {
    throw IoError("cannot write image " + path.string());
  }
}

std::vector<std::uint8_t> encode_png(const RgbImage& image) {
  std::vector<std::uint8_t> bytes;
  if (!cv::imencode(".png", to_bgr_mat(image), bytes, kPngParams)) {
    throw IoError("PNG encoding failed");
  }
  return bytes;
}

}  // namespace histosge
