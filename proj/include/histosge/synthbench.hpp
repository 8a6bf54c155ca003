#pragma once

// Synthetic slices with a known image -> expression map.
//
// The image is cut into rectangular regions on the spot lattice (a grid of
// ceil(sqrt(n_textures)) columns); region i gets texture class i mod
// n_textures. Each class has a procedural texture (stripes, dots, ramp,
// flat, cycling) in its own base colour and a fixed expression prototype.
// Spot expression = prototype of the region under the spot + N(0, sigma),
// clamped at zero.

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "histosge/st_core.hpp"

namespace histosge {

struct SynthConfig {
  int grid_rows = 10;
  int grid_cols = 10;
  int pitch_px = 60;
  int n_genes = 50;
  int n_textures = 4;
  double noise_sigma = 0.1;
  std::uint64_t seed = 0;
};

/// Returns warnings (e.g. pitch below the default patch size); throws
/// ParameterError on invalid settings.
std::vector<std::string> validate(const SynthConfig& cfg);

struct SynthRegion {
  int x0 = 0, y0 = 0, x1 = 0, y1 = 0;  // half-open pixel rectangle
  int texture = 0;
};

struct SynthTruth {
  int width = 0;
  int height = 0;
  std::vector<SynthRegion> regions;
  Matrix prototypes;  // n_textures x n_genes
  std::vector<std::string> gene_names;

  /// Texture class at a pixel; throws BoundsError outside the image.
  int texture_at(int x, int y) const;
};

std::pair<STDataset, SynthTruth> generate(const SynthConfig& cfg);

/// Noise-free expression at the spot's pixel.
Vector true_expression(const SynthTruth& truth, const Spot& spot);

void save_truth(const SynthTruth& truth, const std::filesystem::path& path);
SynthTruth load_truth(const std::filesystem::path& path);

}  // namespace histosge
