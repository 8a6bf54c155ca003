#include "histosge/superres.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <unordered_set>

#include "histosge/errors.hpp"

namespace histosge {

namespace {

std::uint64_t pixel_key(long long x, long long y) {
  return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(x)) << 32) | static_cast<std::uint32_t>(y);
}

}  // namespace

double PolarOffset::dx() const { return r * std::cos(theta); }
double PolarOffset::dy() const { return r * std::sin(theta); }

double nearest_neighbor_spacing(std::span<const Spot> spots) {
  if (spots.size() < 2) throw DegenerateError("spacing needs at least two spots");
  std::vector<double> nearest(spots.size(), std::numeric_limits<double>::infinity());
  for (std::size_t i = 0; i < spots.size(); ++i) {
    for (std::size_t j = i + 1; j < spots.size(); ++j) {
      const double d = std::hypot(static_cast<double>(spots[i].x_px - spots[j].x_px),
                                  static_cast<double>(spots[i].y_px - spots[j].y_px));
      if (d == 0.0) {
        throw DegenerateError("spots " + spots[i].spot_id + " and " + spots[j].spot_id + " share coordinates");
      }
      nearest[i] = std::min(nearest[i], d);
      nearest[j] = std::min(nearest[j], d);
    }
  }
  std::sort(nearest.begin(), nearest.end());
  const std::size_t n = nearest.size();
  return n % 2 == 1 ? nearest[n / 2] : 0.5 * (nearest[n / 2 - 1] + nearest[n / 2]);
}

UpsampleScheme scheme_8x(double spacing) {
  if (!(spacing > 0.0)) throw ParameterError("spacing R must be positive");
  const double half = spacing / 2.0;
  const double diag = spacing / (2.0 * std::numbers::sqrt2);
  constexpr double pi = std::numbers::pi;
  return UpsampleScheme{8,
                        {{half, 0.0},
                         {diag, pi / 4},
                         {diag, 3 * pi / 4},
                         {diag, 7 * pi / 4},
                         {diag, 5 * pi / 4},
                         {half, pi},
                         {half, pi / 2}}};
}

UpsampleScheme generalized_scheme(int factor, double spacing) {
  if (!(spacing > 0.0)) throw ParameterError("spacing R must be positive");
  constexpr double pi = std::numbers::pi;
  switch (factor) {
    case 8:
      return scheme_8x(spacing);
    case 4:
      return UpsampleScheme{4, {{spacing / 2, 0.0}, {spacing / 2, pi / 2}, {spacing / (2 * std::numbers::sqrt2), pi / 4}}};
    case 2:
      return UpsampleScheme{2, {{spacing / 2, 0.0}}};
    default:
      throw ParameterError("unsupported upsampling factor " + std::to_string(factor) + " (supported: 2, 4, 8)");
  }
}

std::vector<Spot> construct_unmeasured(std::span<const Spot> spots, const UpsampleScheme& scheme,
                                       std::pair<int, int> image_bounds) {
  const auto [width, height] = image_bounds;
  std::unordered_set<std::uint64_t> occupied;
  auto near_occupied = [&](long long x, long long y) {
    for (long long dy = -1; dy <= 1; ++dy) {
      for (long long dx = -1; dx <= 1; ++dx) {
        if (occupied.contains(pixel_key(x + dx, y + dy))) return true;
      }
    }
    return false;
  };
  for (const auto& s : spots) occupied.insert(pixel_key(s.x_px, s.y_px));

  std::vector<Spot> out;
  for (const auto& s : spots) {
    if (!s.measured) continue;
    for (std::size_t k = 0; k < scheme.translations.size(); ++k) {
      const auto& t = scheme.translations[k];
      const long long x = std::llround(s.x_px + t.dx());
      const long long y = std::llround(s.y_px + t.dy());
      if (x < 0 || y < 0 || x >= width || y >= height) continue;
      if (near_occupied(x, y)) continue;
      occupied.insert(pixel_key(x, y));
      out.push_back(Spot{s.spot_id + "_u" + std::to_string(k + 1), static_cast<int>(x), static_cast<int>(y), false});
    }
  }
  return out;
}

}  // namespace histosge
