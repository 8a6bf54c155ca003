#pragma once

// Reusable experiment setups shared by the unit tests and the acceptance
// runner.

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "histosge/metrics.hpp"
#include "histosge/model.hpp"
#include "histosge/rng.hpp"
#include "histosge/trainer.hpp"

namespace scenarios {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst_param;
  std::size_t n_checked = 0;
};

/// Central differences on every entry of every parameter tensor. The relative
/// error of an entry is |analytic - numeric| / max(|analytic|, |numeric|),
/// with entries whose gradients are both below `abs_floor` compared
/// absolutely against that floor.
inline GradCheckResult gradient_check(histosge::ModelConfig cfg, std::uint64_t seed, double step = 1e-5,
                                      double abs_floor = 1e-7) {
  using namespace histosge;
  HisToSGEModel model(cfg, seed);
  Rng rng(seed + 1);
  // Move every tensor off its structured initial value (zero biases, unit
  // gains) so no gradient is trivially zero.
  for (auto& p : model.params()) {
    for (Eigen::Index i = 0; i < p.value.size(); ++i) p.value.data()[i] += rng.normal(0.0, 0.2);
  }
  const int n_spots = 4;
  Matrix features(n_spots, cfg.d_model);
  for (Eigen::Index i = 0; i < features.size(); ++i) features.data()[i] = rng.normal();
  Matrix observed(n_spots, cfg.gene_dim);
  for (Eigen::Index i = 0; i < observed.size(); ++i) observed.data()[i] = rng.normal();
  std::vector<Spot> spots;
  for (int i = 0; i < n_spots; ++i) spots.push_back({"s" + std::to_string(i), 3 + 11 * i, 40 - 7 * i});

  const auto analytic = loss_and_gradients(features, spots, observed, model);
  GradCheckResult result;
  for (std::size_t t = 0; t < model.params().size(); ++t) {
    Matrix& value = model.params()[t].value;
    for (Eigen::Index i = 0; i < value.size(); ++i) {
      const double saved = value.data()[i];
      value.data()[i] = saved + step;
      const double up = loss(forward(features, spots, model), observed);
      value.data()[i] = saved - step;
      const double down = loss(forward(features, spots, model), observed);
      value.data()[i] = saved;
      const double numeric = (up - down) / (2.0 * step);
      const double a = analytic.grads[t].data()[i];
      const double denom = std::max({std::abs(a), std::abs(numeric), abs_floor});
      const double rel = std::abs(a - numeric) / denom;
      if (rel > result.max_rel_error) {
        result.max_rel_error = rel;
        result.worst_param = model.params()[t].name;
      }
      ++result.n_checked;
    }
  }
  return result;
}

inline histosge::ModelConfig gradient_check_config() {
  histosge::ModelConfig cfg;
  cfg.d_model = 16;
  cfg.n_heads = 2;
  cfg.n_layers = 1;
  cfg.d_ff = 8;
  cfg.gene_dim = 3;
  cfg.dropout_rate = 0.0;
  cfg.pe_mode = histosge::PeMode::learned_table;
  cfg.pe_table_size = 4;
  return cfg;
}

struct OverfitResult {
  double final_loss = 0.0;
  std::uint64_t steps = 0;
  double min_gene_pcc = 0.0;
};

/// Eight spots with random features and targets, trained full-batch with Adam.
inline OverfitResult overfit_eight_spots(int max_steps = 2000) {
  using namespace histosge;
  Rng rng(21);
  const int n = 8, genes = 5, embed = 27;
  ModelConfig mcfg;
  mcfg.d_model = embed + 5;
  mcfg.n_heads = 4;
  mcfg.n_layers = 1;
  mcfg.d_ff = 64;
  mcfg.gene_dim = genes;
  mcfg.dropout_rate = 0.0;
  Matrix features(n, mcfg.d_model);
  std::vector<Spot> spots;
  for (int i = 0; i < n; ++i) {
    spots.push_back({"toy" + std::to_string(i), 10 + 20 * (i % 4), 10 + 20 * (i / 4)});
    for (int j = 0; j < embed; ++j) features(i, j) = rng.normal(0.0, 0.2);
    features(i, embed) = spots.back().x_px;
    features(i, embed + 1) = spots.back().y_px;
    for (int j = embed + 2; j < mcfg.d_model; ++j) features(i, j) = rng.uniform_real();
  }
  Matrix observed(n, genes);
  for (Eigen::Index i = 0; i < observed.size(); ++i) observed.data()[i] = rng.uniform_real(0.0, 3.0);

  TrainConfig tcfg;
  tcfg.epochs = max_steps;
  tcfg.batch_size = n;  // one step per epoch
  tcfg.seed = 5;
  const auto res = train_on_features(features, spots, observed, mcfg, tcfg);
  OverfitResult out;
  out.steps = res.report.steps;
  const Matrix pred = forward(features, spots, res.model);
  out.final_loss = loss(pred, observed);
  out.min_gene_pcc = 1.0;
  for (int g = 0; g < genes; ++g) {
    const Vector a = observed.col(g), b = pred.col(g);
    const auto r = pcc(std::span<const double>(a.data(), n), std::span<const double>(b.data(), n));
    out.min_gene_pcc = std::min(out.min_gene_pcc, r.value_or(-1.0));
  }
  return out;
}

}  // namespace scenarios
