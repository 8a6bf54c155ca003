#include "histosge/preprocess.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>

#include "histosge/errors.hpp"

namespace histosge {

Matrix normalize_expression(const Matrix& raw, double target_sum) {
  if (!(target_sum > 0.0)) throw ParameterError("normalize target sum must be positive");
  Matrix out(raw.rows(), raw.cols());
  for (Eigen::Index i = 0; i < raw.rows(); ++i) {
    if ((raw.row(i).array() < 0.0).any() || !raw.row(i).allFinite()) {
      throw ValidationError("spot " + std::to_string(i) + " has negative or non-finite counts");
    }
    const double total = raw.row(i).sum();
    if (total <= 0.0) throw DegenerateError("spot " + std::to_string(i) + " has no nonzero counts");
    out.row(i) = (raw.row(i).array() * (target_sum / total)).log1p();
  }
  return out;
}

HvgSelection select_hvg(const Matrix& normalized, int n_hvg) {
  const auto n_genes = normalized.cols();
  if (n_hvg < 1 || n_hvg > n_genes) {
    throw ParameterError("n_hvg must lie in [1, " + std::to_string(n_genes) + "], got " +
                         std::to_string(n_hvg));
  }
  std::vector<double> variance(static_cast<std::size_t>(n_genes));
  for (Eigen::Index j = 0; j < n_genes; ++j) {
    const auto col = normalized.col(j).array();
    const double mean = col.mean();
    variance[static_cast<std::size_t>(j)] = (col - mean).square().mean();
  }
  std::vector<std::size_t> order(variance.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return variance[a] > variance[b]; });
  order.resize(static_cast<std::size_t>(n_hvg));
  std::sort(order.begin(), order.end());

  HvgSelection sel;
  sel.indices = order;
  sel.expression.resize(normalized.rows(), n_hvg);
  for (std::size_t k = 0; k < order.size(); ++k) {
    sel.expression.col(static_cast<Eigen::Index>(k)) = normalized.col(static_cast<Eigen::Index>(order[k]));
  }
  return sel;
}

PatchTensor extract_patch(const RgbImage& image, const Spot& spot, const PreprocessConfig& cfg) {
  if (cfg.patch_w < 1 || cfg.patch_h < 1) throw ParameterError("patch size must be at least 1x1");
  if (spot.x_px < 0 || spot.y_px < 0 || spot.x_px >= image.width() || spot.y_px >= image.height()) {
    throw BoundsError("spot " + spot.spot_id + " lies outside the image");
  }
  PatchTensor patch;
  patch.spot_id = spot.spot_id;
  patch.height = cfg.patch_h;
  patch.width = cfg.patch_w;
  patch.pixels.resize(static_cast<std::size_t>(cfg.patch_h) * cfg.patch_w * 3);
  const int y0 = spot.y_px - cfg.patch_h / 2;
  const int x0 = spot.x_px - cfg.patch_w / 2;
  for (int dy = 0; dy < cfg.patch_h; ++dy) {
    const int y = std::clamp(y0 + dy, 0, image.height() - 1);
    for (int dx = 0; dx < cfg.patch_w; ++dx) {
      const int x = std::clamp(x0 + dx, 0, image.width() - 1);
      for (int c = 0; c < 3; ++c) patch.at(dy, dx, c) = image.at(x, y, c) / 255.0;
    }
  }
  return patch;
}

PatchTensor extract_patch(const STDataset& ds, const Spot& spot, const PreprocessConfig& cfg) {
  return extract_patch(ds.image, spot, cfg);
}

std::array<double, 3> rgb_feature(const PatchTensor& patch) {
  std::array<double, 3> sum{0.0, 0.0, 0.0};
  const std::size_t n = static_cast<std::size_t>(patch.height) * patch.width;
  for (std::size_t p = 0; p < n; ++p) {
    for (int c = 0; c < 3; ++c) sum[c] += patch.pixels[p * 3 + c];
  }
  for (auto& s : sum) s /= static_cast<double>(n);
  return sum;
}

STDataset preprocess_dataset(const STDataset& ds, const PreprocessConfig& cfg, bool normalize) {
  STDataset out = ds;
  const Matrix norm = normalize ? normalize_expression(ds.expression, cfg.normalize_target_sum) : ds.expression;
  const int n_hvg = std::min<int>(cfg.n_hvg, static_cast<int>(ds.n_genes()));
  auto sel = select_hvg(norm, n_hvg);
  out.expression = std::move(sel.expression);
  out.gene_names.clear();
  for (auto idx : sel.indices) out.gene_names.push_back(ds.gene_names[idx]);
  return out;
}

}  // namespace histosge
