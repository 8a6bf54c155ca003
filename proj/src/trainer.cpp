#include "histosge/trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <numeric>
#include <unordered_map>

#include "histosge/checkpoint.hpp"
#include "histosge/errors.hpp"
#include "histosge/rng.hpp"

namespace histosge {

namespace {

// Stream separation for the single user seed.
constexpr std::uint64_t kShuffleStream = 0x9E3779B97F4A7C15ULL;
constexpr std::uint64_t kDropoutStream = 0xD1B54A32D192ED03ULL;

class Optimizer {
public:
  Optimizer(const HisToSGEModel& model, const TrainConfig& cfg) : cfg_(cfg) {
    if (cfg.optimizer == OptimizerKind::adam) {
      m_ = model.zero_gradients();
      v_ = model.zero_gradients();
    }
  }

  void step(HisToSGEModel& model, const Gradients& grads, double lr) {
    ++t_;
    auto& params = model.params();
    if (cfg_.optimizer == OptimizerKind::sgd) {
      for (std::size_t i = 0; i < params.size(); ++i) {
        if (cfg_.weight_decay > 0.0) params[i].value *= 1.0 - lr * cfg_.weight_decay;
        params[i].value.noalias() -= lr * grads[i];
      }
      return;
    }
    const double b1 = cfg_.adam_beta1, b2 = cfg_.adam_beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto m = m_[i].array();
      auto v = v_[i].array();
      const auto g = grads[i].array();
      m = b1 * m + (1.0 - b1) * g;
      v = b2 * v + (1.0 - b2) * g.square();
      if (cfg_.weight_decay > 0.0) params[i].value *= 1.0 - lr * cfg_.weight_decay;
      params[i].value.array() -= lr * (m / c1) / ((v / c2).sqrt() + cfg_.adam_eps);
    }
  }

private:
  const TrainConfig& cfg_;
  Gradients m_, v_;
  std::uint64_t t_ = 0;
};

Matrix gather_rows(const Matrix& m, std::span<const std::size_t> rows) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), m.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    out.row(static_cast<Eigen::Index>(r)) = m.row(static_cast<Eigen::Index>(rows[r]));
  }
  return out;
}

int effective_batch(AttentionScope scope, int batch_size, int slice_cap, std::size_t n) {
  if (scope == AttentionScope::slice) {
    if (n > static_cast<std::size_t>(slice_cap)) {
      throw ParameterError("slice attention requested for " + std::to_string(n) + " spots, above slice_cap " +
                           std::to_string(slice_cap));
    }
    return static_cast<int>(std::max<std::size_t>(n, 1));
  }
  return batch_size;
}

std::string epoch_checkpoint_name(int epoch) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "epoch_%05d.ckpt", epoch);
  return buf;
}

}  // namespace

void validate(const TrainConfig& cfg) {
  if (cfg.epochs < 1) throw ParameterError("epochs must be at least 1");
  if (cfg.batch_size < 1) throw ParameterError("batch_size must be at least 1");
  // Zero is accepted: it gives a no-update run with a constant loss trace.
  if (!(cfg.learning_rate >= 0.0) || !std::isfinite(cfg.learning_rate)) {
    throw ParameterError("learning_rate must be a finite non-negative number");
  }
  if (cfg.checkpoint_every < 0) throw ParameterError("checkpoint_every must be non-negative");
  if (cfg.weight_decay < 0.0) throw ParameterError("weight_decay must be non-negative");
  if (cfg.early_stopping_patience < 0) throw ParameterError("early_stopping_patience must be non-negative");
  if (cfg.slice_cap < 1) throw ParameterError("slice_cap must be positive");
}

TrainResult train_on_features(const Matrix& features, const std::vector<Spot>& spots, const Matrix& observed,
                              const ModelConfig& mcfg, const TrainConfig& tcfg, const CheckpointMetadata& metadata) {
  validate(tcfg);
  validate(mcfg);
  const std::size_t n = spots.size();
  if (n == 0) throw ParameterError("training set is empty");
  if (static_cast<std::size_t>(features.rows()) != n || static_cast<std::size_t>(observed.rows()) != n) {
    throw ContractError("features, spots and observations must have one row per spot");
  }
  if (observed.cols() != mcfg.gene_dim) {
    throw ParameterError("gene_dim " + std::to_string(mcfg.gene_dim) + " does not match the " +
                         std::to_string(observed.cols()) + " genes of the training data");
  }
  const auto t0 = std::chrono::steady_clock::now();

  TrainResult result{HisToSGEModel(mcfg, tcfg.seed), {}};
  HisToSGEModel& model = result.model;
  TrainReport& report = result.report;
  report.seed = tcfg.seed;

  Optimizer optimizer(model, tcfg);
  Rng shuffle_rng(tcfg.seed ^ kShuffleStream);
  Rng dropout_rng(tcfg.seed ^ kDropoutStream);
  const int batch = effective_batch(tcfg.attention_scope, tcfg.batch_size, tcfg.slice_cap, n);

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::string last_checkpoint;
  double best = std::numeric_limits<double>::infinity();
  int stale_epochs = 0;

  auto write_checkpoint = [&](const std::string& file) {
    if (tcfg.checkpoint_dir.empty()) return;
    const auto path = tcfg.checkpoint_dir / file;
    save_checkpoint(model, report.steps, metadata, path);
    last_checkpoint = path.string();
  };

  for (int epoch = 0; epoch < tcfg.epochs; ++epoch) {
    shuffle_rng.shuffle(std::span<std::size_t>(order));
    double lr = tcfg.learning_rate;
    if (tcfg.lr_schedule == LrSchedule::cosine) {
      lr *= 0.5 * (1.0 + std::cos(std::numbers::pi * epoch / tcfg.epochs));
    }
    double weighted = 0.0;
    for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(batch)) {
      const std::size_t stop = std::min(n, start + static_cast<std::size_t>(batch));
      const std::span<const std::size_t> rows(order.data() + start, stop - start);
      std::vector<Spot> batch_spots;
      batch_spots.reserve(rows.size());
      for (auto r : rows) batch_spots.push_back(spots[r]);
      auto lg = loss_and_gradients(gather_rows(features, rows), batch_spots, gather_rows(observed, rows), model,
                                   rows, &dropout_rng);
      if (!std::isfinite(lg.loss)) {
        throw DivergenceError("non-finite loss at epoch " + std::to_string(epoch + 1) + ", batch " +
                                  std::to_string(start / static_cast<std::size_t>(batch) + 1) +
                                  (last_checkpoint.empty() ? "; no checkpoint written yet"
                                                           : "; last finite checkpoint " + last_checkpoint),
                              last_checkpoint);
      }
      weighted += lg.loss * static_cast<double>(rows.size());
      optimizer.step(model, lg.grads, lr);
      ++report.steps;
    }
    const double epoch_loss = weighted / static_cast<double>(n);
    report.loss_trace.push_back(epoch_loss);
    if (!model.all_finite()) {
      throw DivergenceError("parameters became non-finite after epoch " + std::to_string(epoch + 1) +
                                (last_checkpoint.empty() ? "" : "; last finite checkpoint " + last_checkpoint),
                            last_checkpoint);
    }
    if (tcfg.checkpoint_every > 0 && (epoch + 1) % tcfg.checkpoint_every == 0) {
      write_checkpoint(epoch_checkpoint_name(epoch + 1));
    }
    if (tcfg.early_stopping_patience > 0) {
      // Gains below 1e-9 relative are summation-order noise from reshuffling.
      if (!std::isfinite(best) || epoch_loss < best - 1e-9 * std::abs(best)) {
        best = epoch_loss;
        stale_epochs = 0;
      } else if (++stale_epochs >= tcfg.early_stopping_patience) {
        break;
      }
    }
  }
  write_checkpoint("final.ckpt");
  report.final_checkpoint = last_checkpoint;
  report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return result;
}

TrainResult train(const STDataset& ds_train, const FeatureExtractor& extractor, ModelConfig mcfg,
                  const TrainConfig& tcfg, const PreprocessConfig& pcfg, EmbeddingCache* cache,
                  CheckpointMetadata metadata) {
  if (mcfg.gene_dim != static_cast<int>(ds_train.n_genes())) {
    throw ParameterError("model gene_dim " + std::to_string(mcfg.gene_dim) + " does not match the " +
                         std::to_string(ds_train.n_genes()) + " genes of the (preprocessed) training set");
  }
  if (mcfg.embed_dim() != extractor.embed_dim()) {
    throw IncompatibilityError("model d_model " + std::to_string(mcfg.d_model) + " needs a " +
                               std::to_string(mcfg.embed_dim()) + "-dim extractor, got " +
                               std::to_string(extractor.embed_dim()));
  }
  if (mcfg.pe_mode == PeMode::learned_table && mcfg.pe_table_size == 0) {
    mcfg.pe_table_size = static_cast<int>(ds_train.n_spots());
  }
  metadata.emplace("extractor", extractor.name());
  std::string genes;
  for (const auto& g : ds_train.gene_names) genes += g + '\n';
  metadata.emplace("gene_names", genes);
  metadata.emplace("patch_w", std::to_string(pcfg.patch_w));
  metadata.emplace("patch_h", std::to_string(pcfg.patch_h));

  const auto maps = build_feature_map(ds_train, ds_train.spots, extractor, pcfg, cache, tcfg.threads);
  return train_on_features(stack_features(maps), ds_train.spots, ds_train.expression, mcfg, tcfg, metadata);
}

Matrix predict_features(const HisToSGEModel& model, const Matrix& features, const std::vector<Spot>& spots,
                        const PredictOptions& options, std::span<const std::size_t> ordinals) {
  const std::size_t n = spots.size();
  Matrix out(static_cast<Eigen::Index>(n), model.config().gene_dim);
  if (n == 0) return out;
  if (options.batch_size < 1) throw ParameterError("batch_size must be at least 1");
  const int batch = effective_batch(options.attention_scope, options.batch_size, options.slice_cap, n);
  for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(batch)) {
    const auto len = std::min(n, start + static_cast<std::size_t>(batch)) - start;
    const auto rows = static_cast<Eigen::Index>(len);
    const std::span<const Spot> batch_spots(spots.data() + start, len);
    const auto batch_ordinals = ordinals.empty() ? ordinals : ordinals.subspan(start, len);
    out.middleRows(static_cast<Eigen::Index>(start), rows) =
        forward(Matrix(features.middleRows(static_cast<Eigen::Index>(start), rows)), batch_spots, model,
                batch_ordinals);
  }
  return out;
}

Matrix predict(const HisToSGEModel& model, const STDataset& ds, const std::vector<Spot>& spots,
               const FeatureExtractor& extractor, const PreprocessConfig& pcfg, const PredictOptions& options,
               EmbeddingCache* cache) {
  if (model.config().embed_dim() != extractor.embed_dim()) {
    throw IncompatibilityError("model expects " + std::to_string(model.config().embed_dim()) +
                               "-dim embeddings, extractor " + extractor.name() + " produces " +
                               std::to_string(extractor.embed_dim()));
  }
  if (spots.empty()) return Matrix(0, model.config().gene_dim);
  std::vector<std::size_t> ordinals;
  if (model.config().pe_mode == PeMode::learned_table) {
    std::unordered_map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < ds.spots.size(); ++i) index.emplace(ds.spots[i].spot_id, i);
    for (std::size_t i = 0; i < spots.size(); ++i) {
      auto it = index.find(spots[i].spot_id);
      ordinals.push_back(it != index.end() ? it->second : ds.spots.size() + i);
    }
  }
  const auto maps = build_feature_map(ds, spots, extractor, pcfg, cache, options.threads);
  return predict_features(model, stack_features(maps), spots, options, ordinals);
}

}  // namespace histosge
