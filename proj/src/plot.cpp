#include "histosge/plot.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "histosge/errors.hpp"
#include "histosge/superres.hpp"

namespace histosge {

namespace {

constexpr int kMaxSide = 1024;
constexpr int kBarWidth = 16;
constexpr int kBarMargin = 8;

constexpr std::array<std::array<double, 3>, 9> kViridisAnchors = {{
    {68, 1, 84},
    {71, 44, 122},
    {59, 81, 139},
    {44, 113, 142},
    {33, 144, 141},
    {39, 173, 129},
    {92, 200, 99},
    {170, 220, 50},
    {253, 231, 37},
}};

void fill_disc(RgbImage& img, int cx, int cy, int radius, const std::array<std::uint8_t, 3>& c) {
  for (int y = std::max(0, cy - radius); y <= std::min(img.height() - 1, cy + radius); ++y) {
    for (int x = std::max(0, cx - radius); x <= std::min(img.width() - 1, cx + radius); ++x) {
      if ((x - cx) * (x - cx) + (y - cy) * (y - cy) <= radius * radius) img.set(x, y, c[0], c[1], c[2]);
    }
  }
}

void fill_square(RgbImage& img, int cx, int cy, int half, const std::array<std::uint8_t, 3>& c) {
  for (int y = std::max(0, cy - half); y <= std::min(img.height() - 1, cy + half); ++y) {
    for (int x = std::max(0, cx - half); x <= std::min(img.width() - 1, cx + half); ++x) img.set(x, y, c[0], c[1], c[2]);
  }
}

}  // namespace

std::array<std::uint8_t, 3> viridis(double t) {
  t = std::clamp(std::isfinite(t) ? t : 0.0, 0.0, 1.0);
  const double pos = t * (kViridisAnchors.size() - 1);
  const auto i = std::min<std::size_t>(static_cast<std::size_t>(pos), kViridisAnchors.size() - 2);
  const double f = pos - static_cast<double>(i);
  std::array<std::uint8_t, 3> out{};
  for (int c = 0; c < 3; ++c) {
    out[c] = static_cast<std::uint8_t>(std::lround(kViridisAnchors[i][c] * (1.0 - f) + kViridisAnchors[i + 1][c] * f));
  }
  return out;
}

RgbImage render_spatial_plot(const STDataset& ds, std::size_t gene_index) {
  if (gene_index >= ds.n_genes()) throw ParameterError("gene index out of range");
  const int w = ds.image.width(), h = ds.image.height();
  const double scale = std::min(1.0, static_cast<double>(kMaxSide) / std::max(w, h));
  const int cw = std::max(1, static_cast<int>(std::lround(w * scale)));
  const int ch = std::max(1, static_cast<int>(std::lround(h * scale)));
  RgbImage img(cw + kBarMargin * 2 + kBarWidth, ch, 255);

  std::vector<Spot> measured;
  for (const auto& s : ds.spots) {
    if (s.measured) measured.push_back(s);
  }
  double spacing = 10.0;
  if (measured.size() >= 2) {
    try {
      spacing = nearest_neighbor_spacing(measured);
    } catch (const DegenerateError&) {
    }
  }
  const int radius = std::max(1, static_cast<int>(std::lround(0.4 * spacing * scale)));
  const int half = std::max(1, static_cast<int>(std::lround(0.2 * spacing * scale)));

  const auto col = ds.expression.col(static_cast<Eigen::Index>(gene_index));
  const double lo = col.size() > 0 ? col.minCoeff() : 0.0;
  const double hi = col.size() > 0 ? col.maxCoeff() : 1.0;
  auto colour = [&](double v) { return viridis(hi > lo ? (v - lo) / (hi - lo) : 0.5); };

  // Constructed spots first so measured discs stay on top.
  for (int pass = 0; pass < 2; ++pass) {
    for (std::size_t i = 0; i < ds.spots.size(); ++i) {
      const auto& s = ds.spots[i];
      if (s.measured != (pass == 1)) continue;
      const int cx = static_cast<int>(std::lround(s.x_px * scale));
      const int cy = static_cast<int>(std::lround(s.y_px * scale));
      const auto c = colour(col[static_cast<Eigen::Index>(i)]);
      if (s.measured) fill_disc(img, cx, cy, radius, c);
      else fill_square(img, cx, cy, half, c);
    }
  }

  for (int y = 0; y < ch; ++y) {
    const auto c = viridis(1.0 - static_cast<double>(y) / std::max(1, ch - 1));
    for (int x = cw + kBarMargin; x < cw + kBarMargin + kBarWidth; ++x) img.set(x, y, c[0], c[1], c[2]);
  }
  return img;
}

}  // namespace histosge
