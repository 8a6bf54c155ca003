#pragma once

// Unmeasured-spot construction by polar translation of measured spots.
//
// Supported factors (R = nearest-neighbour spacing):
//   N = 2 : (R/2, 0)
//   N = 4 : (R/2, 0), (R/2, pi/2), (R/(2 sqrt 2), pi/4)
//   N = 8 : (R/2, 0), (R/(2 sqrt 2), pi/4), (R/(2 sqrt 2), 3pi/4),
//           (R/(2 sqrt 2), 7pi/4), (R/(2 sqrt 2), 5pi/4), (R/2, pi), (R/2, pi/2)
// The 2- and 4-fold tables are subsets of the 8-fold one.

#include <span>
#include <utility>
#include <vector>

#include "histosge/st_core.hpp"

namespace histosge {

struct PolarOffset {
  double r = 0.0;
  double theta = 0.0;

  double dx() const;
  double dy() const;
};

struct UpsampleScheme {
  int factor = 0;
  std::vector<PolarOffset> translations;  // factor - 1 entries
};

/// Median over spots of the distance to the nearest other spot.
/// Throws DegenerateError on coincident spots or fewer than two spots.
double nearest_neighbor_spacing(std::span<const Spot> spots);

UpsampleScheme scheme_8x(double spacing);
/// factor in {2, 4, 8}; other factors throw ParameterError.
UpsampleScheme generalized_scheme(int factor, double spacing);

/// For each measured spot (in order) and each translation (in order), emits
/// a spot at the rounded translated position, measured = false, id
/// "<parent>_u<k>". A candidate within one pixel (Chebyshev distance <= 1)
/// of any measured or previously accepted spot is dropped, as is any
/// candidate outside [0,w) x [0,h).
std::vector<Spot> construct_unmeasured(std::span<const Spot> spots, const UpsampleScheme& scheme,
                                       std::pair<int, int> image_bounds);

}  // namespace histosge
