#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "histosge/embedding_cache.hpp"
#include "histosge/extractors.hpp"
#include "histosge/model.hpp"
#include "histosge/preprocess.hpp"
#include "histosge/st_core.hpp"

namespace histosge {

enum class OptimizerKind { adam, sgd };
enum class LrSchedule { constant, cosine };
enum class AttentionScope { batch, slice };

struct TrainConfig {
  int epochs = 1000;
  int batch_size = 512;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;
  int checkpoint_every = 0;  // epochs; 0 writes only the final checkpoint
  OptimizerKind optimizer = OptimizerKind::adam;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double weight_decay = 0.0;        // decoupled, applied as w -= lr * wd * w
  LrSchedule lr_schedule = LrSchedule::constant;
  int early_stopping_patience = 0;  // epochs without improvement (> 1e-9 relative); 0 disables
  AttentionScope attention_scope = AttentionScope::batch;
  int slice_cap = 4096;             // largest slice attended as one sequence
  int threads = 1;                  // feature extraction only
  std::filesystem::path checkpoint_dir;  // empty: no files written
};

void validate(const TrainConfig& cfg);

struct TrainReport {
  std::vector<double> loss_trace;  // one mean loss per completed epoch
  std::string final_checkpoint;
  double wall_seconds = 0.0;
  std::uint64_t seed = 0;
  std::uint64_t steps = 0;
};

struct TrainResult {
  HisToSGEModel model;
  TrainReport report;
};

/// Stored in every checkpoint the trainer writes.
using CheckpointMetadata = std::map<std::string, std::string>;

/// Trains on precomputed feature rows. The model is initialized from
/// tcfg.seed; batches are reshuffled every epoch from a generator seeded
/// with tcfg.seed as well, so a fixed seed reproduces the run bitwise.
TrainResult train_on_features(const Matrix& features, const std::vector<Spot>& spots, const Matrix& observed,
                              const ModelConfig& mcfg, const TrainConfig& tcfg,
                              const CheckpointMetadata& metadata = {});

/// Full pipeline: features for every training spot (through the cache when
/// given), then train_on_features. mcfg.gene_dim must equal the dataset's
/// gene count and mcfg.d_model the extractor's width + 5. In learned_table
/// mode a zero pe_table_size is replaced by the spot count.
TrainResult train(const STDataset& ds_train, const FeatureExtractor& extractor, ModelConfig mcfg,
                  const TrainConfig& tcfg, const PreprocessConfig& pcfg = {}, EmbeddingCache* cache = nullptr,
                  CheckpointMetadata metadata = {});

struct PredictOptions {
  int batch_size = 512;
  AttentionScope attention_scope = AttentionScope::batch;
  int slice_cap = 4096;
  int threads = 1;
};

/// Forward passes over consecutive batches of `features` rows.
Matrix predict_features(const HisToSGEModel& model, const Matrix& features, const std::vector<Spot>& spots,
                        const PredictOptions& options = {}, std::span<const std::size_t> ordinals = {});

/// Predicted expression for `spots` (rows in the same order). Learned-table
/// models look spots up by id in `ds`.
Matrix predict(const HisToSGEModel& model, const STDataset& ds, const std::vector<Spot>& spots,
               const FeatureExtractor& extractor, const PreprocessConfig& pcfg = {},
               const PredictOptions& options = {}, EmbeddingCache* cache = nullptr);

}  // namespace histosge
