#pragma once

#include <array>
#include <string>
#include <utility>
#include <vector>

#include "histosge/st_core.hpp"
#include "histosge/types.hpp"

namespace histosge {

struct PreprocessConfig {
  int patch_w = 50;
  int patch_h = 50;
  int n_hvg = 1000;
  double normalize_target_sum = 1e4;
};

/// One spot's image window, HWC layout, values in [0,1].
struct PatchTensor {
  std::string spot_id;
  int height = 0;
  int width = 0;
  std::vector<double> pixels;

  double at(int y, int x, int c) const { return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
  double& at(int y, int x, int c) { return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
};

/// Library-size normalization to `target_sum` per spot, then log1p.
/// Throws DegenerateError on an all-zero spot.
Matrix normalize_expression(const Matrix& raw, double target_sum = 1e4);

struct HvgSelection {
  Matrix expression;                 // n_spots x n_hvg
  std::vector<std::size_t> indices;  // ascending original gene indices
};

/// Keeps the n_hvg genes with the largest variance (population variance
/// over spots). Ties go to the lower gene index.
HvgSelection select_hvg(const Matrix& normalized, int n_hvg);

/// Window rows [y - h/2, y - h/2 + h), columns likewise; out-of-image pixels
/// replicate the nearest edge pixel.
PatchTensor extract_patch(const STDataset& ds, const Spot& spot, const PreprocessConfig& cfg);
PatchTensor extract_patch(const RgbImage& image, const Spot& spot, const PreprocessConfig& cfg);

/// Per-channel mean.
std::array<double, 3> rgb_feature(const PatchTensor& patch);

/// normalize_expression + select_hvg on a whole dataset; gene names follow
/// the selection.
STDataset preprocess_dataset(const STDataset& ds, const PreprocessConfig& cfg, bool normalize = true);

}  // namespace histosge
