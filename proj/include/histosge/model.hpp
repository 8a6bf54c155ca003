#pragma once

// Attention regressor from multimodal spot features to gene expression.
//
//   X0 = M + PE                                  (n_spots x d_model)
//   for each layer (pre-norm residual blocks):
//     X1 = X + MHSA(LN1(X))       MHSA(Z) = [head_1 .. head_n] W_o,
//                                 head_i  = softmax(Z Wq_i (Z Wk_i)^T / sqrt(d_k)) Z Wv_i
//     X' = X1 + FF(LN2(X1))       FF(Z)   = GELU(Z W1 + b1) W2 + b2
//   Y    = LN_final(X')
//   pred = GELU(Y U1 + c1) U2 + c2                (n_spots x gene_dim)
// plain_mhsa drops every residual and norm: X1 = MHSA(X), X' = FF(X1), Y = X'.
//
// Attention runs across the spots of one batch, so the attention map of a
// batch of N spots is N x N.

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "histosge/extractors.hpp"
#include "histosge/rng.hpp"
#include "histosge/st_core.hpp"
#include "histosge/types.hpp"

namespace histosge {

enum class PeMode { learned_table, sinusoidal_xy };

std::string to_string(PeMode mode);
PeMode parse_pe_mode(const std::string& text);

struct ModelConfig {
  int d_model = 1029;
  int n_heads = 7;  // must divide d_model; 1029 = 3 * 7^3
  int n_layers = 2;
  int d_ff = 1024;
  int gene_dim = 1000;
  double dropout_rate = 0.1;
  PeMode pe_mode = PeMode::sinusoidal_xy;
  int pe_table_size = 0;  // rows of the learned table; learned_table mode only
  double pe_base = 10000.0;
  bool plain_mhsa = false;

  int d_k() const { return d_model / n_heads; }
  int embed_dim() const { return d_model - 5; }
};

/// Throws ParameterError on inconsistent settings.
void validate(const ModelConfig& cfg);

/// Canonical key=value text (sorted keys, shortest round-trip numbers).
std::string canonical_text(const ModelConfig& cfg);
std::string config_digest(const ModelConfig& cfg);

struct Param {
  std::string name;
  Matrix value;
};

/// Gradients, index-aligned with HisToSGEModel::params().
using Gradients = std::vector<Matrix>;

class HisToSGEModel {
public:
  HisToSGEModel() = default;
  /// Fan-in uniform initialization: weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)),
  /// biases and the learned PE table zero, layer-norm gains one.
  HisToSGEModel(const ModelConfig& cfg, std::uint64_t seed);

  const ModelConfig& config() const { return cfg_; }
  std::vector<Param>& params() { return params_; }
  const std::vector<Param>& params() const { return params_; }

  const Matrix& param(const std::string& name) const;
  Matrix& param(const std::string& name);
  bool has_param(const std::string& name) const { return index_.contains(name); }
  std::size_t param_index(const std::string& name) const;

  Gradients zero_gradients() const;
  std::size_t parameter_count() const;
  bool all_finite() const;

  /// Replaces parameters after validating names and shapes (checkpoint load).
  void assign(const ModelConfig& cfg, std::vector<Param> params);

private:
  void add(std::string name, int rows, int cols);
  ModelConfig cfg_;
  std::vector<Param> params_;
  std::map<std::string, std::size_t> index_;
};

/// Positional encoding rows for the given spots. `ordinals` index the learned
/// table (empty means 0..n-1) and are ignored in sinusoidal mode.
Matrix positional_encoding(std::span<const Spot> spots, const ModelConfig& cfg, const HisToSGEModel& model,
                           std::span<const std::size_t> ordinals = {});

/// softmax(Q K^T / sqrt(d_k)) V. When `weights` is given it receives the
/// softmax-normalized attention map (rows of Q x rows of K).
Matrix attention(const Matrix& q, const Matrix& k, const Matrix& v, Matrix* weights = nullptr);

/// Attention sublayer of `layer`: x + MHSA(LN1(x)), or MHSA(x) when
/// plain_mhsa. No dropout.
Matrix mhsa(const Matrix& x, const HisToSGEModel& model, int layer);

/// Inference forward pass over one attention batch.
Matrix forward(const Matrix& features, std::span<const Spot> spots, const HisToSGEModel& model,
               std::span<const std::size_t> ordinals = {});
Matrix forward(const std::vector<MultimodalFeatureMap>& maps, std::span<const Spot> spots,
               const HisToSGEModel& model, std::span<const std::size_t> ordinals = {});

/// Mean squared error over all entries: sum ||pred_i - obs_i||^2 / (n_spots * gene_dim).
double loss(const Matrix& pred, const Matrix& observed);

struct LossAndGradients {
  double loss = 0.0;
  Matrix pred;
  Gradients grads;
};

/// Forward + backward for one batch. With `dropout_rng` set and a positive
/// dropout rate, inverted dropout is applied after the attention and
/// feed-forward sublayers.
LossAndGradients loss_and_gradients(const Matrix& features, std::span<const Spot> spots,
                                    const Matrix& observed, const HisToSGEModel& model,
                                    std::span<const std::size_t> ordinals = {}, Rng* dropout_rng = nullptr);

}  // namespace histosge
