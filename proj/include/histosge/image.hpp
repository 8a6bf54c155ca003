#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace histosge {

/// 8-bit interleaved RGB raster, row-major.
class RgbImage {
public:
  RgbImage() = default;
  RgbImage(int width, int height, std::uint8_t fill = 0)
      : width_(width), height_(height), pixels_(static_cast<std::size_t>(width) * height * 3, fill) {}

  int width() const { return width_; }
  int height() const { return height_; }
  bool empty() const { return pixels_.empty(); }

  std::uint8_t& at(int x, int y, int channel) {
    return pixels_[(static_cast<std::size_t>(y) * width_ + x) * 3 + channel];
  }
  std::uint8_t at(int x, int y, int channel) const {
    return pixels_[(static_cast<std::size_t>(y) * width_ + x) * 3 + channel];
  }

  void set(int x, int y, std::uint8_t r, std::uint8_t g, std::uint8_t b) {
    auto* p = &pixels_[(static_cast<std::size_t>(y) * width_ + x) * 3];
    p[0] = r;
    p[1] = g;
    p[2] = b;
  }

  const std::vector<std::uint8_t>& data() const { return pixels_; }
  std::vector<std::uint8_t>& data() { return pixels_; }

  friend bool operator==(const RgbImage&, const RgbImage&) = default;

private:
  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint8_t> pixels_;
};

/// PNG or TIFF by extension. Throws FormatError on unreadable files.
RgbImage read_image(const std::filesystem::path& path);
/// PNG at a fixed compression level, so identical rasters give identical bytes.
void write_image(const RgbImage& image, const std::filesystem::path& path);
std::vector<std::uint8_t> encode_png(const RgbImage& image);

}  // namespace histosge
