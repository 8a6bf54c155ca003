#pragma once

#include <span>

#include "histosge/image.hpp"
#include "histosge/st_core.hpp"

namespace histosge {

/// Spatial scatter of one gene: white canvas in slice pixel coordinates
/// (downscaled so the longer side is at most 1024 px), spots coloured by
/// min-max scaled expression on a viridis ramp. Measured spots are discs of
/// radius 0.4 R, constructed spots squares of half-side 0.2 R (R = spot
/// spacing, after scaling). A vertical colour bar sits on the right edge.
RgbImage render_spatial_plot(const STDataset& ds, std::size_t gene_index);

/// Viridis colour for t in [0,1], linear between nine fixed anchors.
std::array<std::uint8_t, 3> viridis(double t);

}  // namespace histosge
