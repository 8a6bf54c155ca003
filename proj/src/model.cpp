#include "histosge/model.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

#include "histosge/digest.hpp"
#include "histosge/errors.hpp"
#include "text_util.hpp"

namespace histosge {

namespace {

constexpr double kLayerNormEps = 1e-5;
constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;

std::string layer_name(int layer, const char* suffix) {
  return "layers." + std::to_string(layer) + "." + suffix;
}

double gelu(double x) { return 0.5 * x * (1.0 + std::tanh(kGeluC * (x + kGeluA * x * x * x))); }

double gelu_grad(double x) {
  const double t = std::tanh(kGeluC * (x + kGeluA * x * x * x));
  return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * kGeluC * (1.0 + 3.0 * kGeluA * x * x);
}

Matrix gelu(const Matrix& x) { return x.unaryExpr([](double v) { return gelu(v); }); }

void softmax_rows(Matrix& s) {
  for (Eigen::Index i = 0; i < s.rows(); ++i) {
    auto row = s.row(i);
    const double mx = row.maxCoeff();
    row = (row.array() - mx).exp();
    row /= row.sum();
  }
}

struct LayerNormCache {
  Matrix xhat;
  Vector inv_std;
};

Matrix layer_norm(const Matrix& x, const Matrix& gamma, const Matrix& beta, LayerNormCache* cache) {
  const auto n = x.rows(), d = x.cols();
  Matrix xhat(n, d);
  Vector inv_std(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double mean = x.row(i).mean();
    const double var = (x.row(i).array() - mean).square().mean();
    inv_std[i] = 1.0 / std::sqrt(var + kLayerNormEps);
    xhat.row(i) = (x.row(i).array() - mean) * inv_std[i];
  }
  Matrix y = (xhat.array().rowwise() * gamma.row(0).array()).rowwise() + beta.row(0).array();
  if (cache != nullptr) {
    cache->xhat = std::move(xhat);
    cache->inv_std = std::move(inv_std);
  }
  return y;
}

Matrix layer_norm_backward(const Matrix& dy, const LayerNormCache& cache, const Matrix& gamma, Matrix& dgamma,
                           Matrix& dbeta) {
  dgamma.row(0) += (dy.array() * cache.xhat.array()).colwise().sum().matrix();
  dbeta.row(0) += dy.colwise().sum();
  const Matrix dxhat = dy.array().rowwise() * gamma.row(0).array();
  Matrix dx(dy.rows(), dy.cols());
  for (Eigen::Index i = 0; i < dy.rows(); ++i) {
    const double mean_d = dxhat.row(i).mean();
    const double mean_dx = (dxhat.row(i).array() * cache.xhat.row(i).array()).mean();
    dx.row(i) = cache.inv_std[i] * (dxhat.row(i).array() - mean_d - cache.xhat.row(i).array() * mean_dx);
  }
  return dx;
}

Matrix dropout_mask(Eigen::Index rows, Eigen::Index cols, double rate, Rng& rng) {
  Matrix mask(rows, cols);
  const double keep = 1.0 / (1.0 - rate);
  for (Eigen::Index i = 0; i < mask.size(); ++i) mask.data()[i] = rng.uniform_real() < rate ? 0.0 : keep;
  return mask;
}

struct LayerCache {
  Matrix attn_in;  // LN1(x), or x when plain
  Matrix q, k, v;
  std::vector<Matrix> probs;
  Matrix concat;
  Matrix drop_attn;  // empty when dropout off
  LayerNormCache ln1;
  Matrix ff_in;  // LN2(x1), or x1 when plain
  Matrix ff_pre;
  Matrix ff_act;
  Matrix drop_ff;
  LayerNormCache ln2;
};

struct ForwardState {
  std::vector<LayerCache> layers;
  LayerNormCache final_ln;
  Matrix y;
  Matrix head_pre;
  Matrix head_act;
  Matrix pred;
};

struct ParamRefs {
  const Matrix *wq, *wk, *wv, *wo, *ln1_g, *ln1_b, *w1, *b1, *w2, *b2, *ln2_g, *ln2_b;
};

ParamRefs layer_params(const HisToSGEModel& model, int l) {
  const bool plain = model.config().plain_mhsa;
  ParamRefs r{};
  r.wq = &model.param(layer_name(l, "attn.w_q"));
  r.wk = &model.param(layer_name(l, "attn.w_k"));
  r.wv = &model.param(layer_name(l, "attn.w_v"));
  r.wo = &model.param(layer_name(l, "attn.w_o"));
  r.w1 = &model.param(layer_name(l, "ff.w1"));
  r.b1 = &model.param(layer_name(l, "ff.b1"));
  r.w2 = &model.param(layer_name(l, "ff.w2"));
  r.b2 = &model.param(layer_name(l, "ff.b2"));
  if (!plain) {
    r.ln1_g = &model.param(layer_name(l, "ln1.gamma"));
    r.ln1_b = &model.param(layer_name(l, "ln1.beta"));
    r.ln2_g = &model.param(layer_name(l, "ln2.gamma"));
    r.ln2_b = &model.param(layer_name(l, "ln2.beta"));
  }
  return r;
}

// Attention sublayer output before residual/norm: concat(heads) W_o.
Matrix attention_block(const Matrix& x, const ParamRefs& p, int n_heads, LayerCache* cache) {
  Matrix q = x * *p.wq;
  Matrix k = x * *p.wk;
  Matrix v = x * *p.wv;
  const int dk = static_cast<int>(q.cols()) / n_heads;
  Matrix concat(x.rows(), q.cols());
  std::vector<Matrix> probs;
  for (int h = 0; h < n_heads; ++h) {
    Matrix weights;
    concat.middleCols(h * dk, dk) =
        attention(q.middleCols(h * dk, dk), k.middleCols(h * dk, dk), v.middleCols(h * dk, dk), &weights);
    if (cache != nullptr) probs.push_back(std::move(weights));
  }
  Matrix out = concat * *p.wo;
  if (cache != nullptr) {
    cache->q = std::move(q);
    cache->k = std::move(k);
    cache->v = std::move(v);
    cache->probs = std::move(probs);
    cache->concat = std::move(concat);
  }
  return out;
}

Matrix input_with_pe(const Matrix& features, std::span<const Spot> spots, const HisToSGEModel& model,
                     std::span<const std::size_t> ordinals) {
  const auto& cfg = model.config();
  if (features.cols() != cfg.d_model) {
    throw ContractError("feature width " + std::to_string(features.cols()) + " does not match d_model " +
                        std::to_string(cfg.d_model));
  }
  if (static_cast<std::size_t>(features.rows()) != spots.size()) {
    throw ContractError("feature rows (" + std::to_string(features.rows()) + ") and spots (" +
                        std::to_string(spots.size()) + ") are not aligned");
  }
  return features + positional_encoding(spots, cfg, model, ordinals);
}

ForwardState run_forward(const Matrix& x0, const HisToSGEModel& model, Rng* dropout_rng) {
  const auto& cfg = model.config();
  const bool drop = dropout_rng != nullptr && cfg.dropout_rate > 0.0;
  ForwardState st;
  Matrix x = x0;
  for (int l = 0; l < cfg.n_layers; ++l) {
    const ParamRefs p = layer_params(model, l);
    LayerCache lc;
    lc.attn_in = cfg.plain_mhsa ? x : layer_norm(x, *p.ln1_g, *p.ln1_b, &lc.ln1);
    Matrix a = attention_block(lc.attn_in, p, cfg.n_heads, &lc);
    if (drop) {
      lc.drop_attn = dropout_mask(a.rows(), a.cols(), cfg.dropout_rate, *dropout_rng);
      a.array() *= lc.drop_attn.array();
    }
    Matrix x1 = cfg.plain_mhsa ? std::move(a) : Matrix(x + a);
    lc.ff_in = cfg.plain_mhsa ? x1 : layer_norm(x1, *p.ln2_g, *p.ln2_b, &lc.ln2);
    lc.ff_pre = (lc.ff_in * *p.w1).rowwise() + p.b1->row(0);
    lc.ff_act = gelu(lc.ff_pre);
    Matrix f = (lc.ff_act * *p.w2).rowwise() + p.b2->row(0);
    if (drop) {
      lc.drop_ff = dropout_mask(f.rows(), f.cols(), cfg.dropout_rate, *dropout_rng);
      f.array() *= lc.drop_ff.array();
    }
    x = cfg.plain_mhsa ? std::move(f) : Matrix(x1 + f);
    st.layers.push_back(std::move(lc));
  }
  if (cfg.plain_mhsa || cfg.n_layers == 0) {
    st.y = std::move(x);
  } else {
    st.y = layer_norm(x, model.param("final_ln.gamma"), model.param("final_ln.beta"), &st.final_ln);
  }
  st.head_pre = (st.y * model.param("head.w1")).rowwise() + model.param("head.b1").row(0);
  st.head_act = gelu(st.head_pre);
  st.pred = (st.head_act * model.param("head.w2")).rowwise() + model.param("head.b2").row(0);
  return st;
}

}  // namespace

std::string to_string(PeMode mode) {
  return mode == PeMode::learned_table ? "learned_table" : "sinusoidal_xy";
}

PeMode parse_pe_mode(const std::string& text) {
  if (text == "learned_table") return PeMode::learned_table;
  if (text == "sinusoidal_xy") return PeMode::sinusoidal_xy;
  throw ParameterError("unknown pe_mode '" + text + "' (expected learned_table or sinusoidal_xy)");
}

void validate(const ModelConfig& cfg) {
  if (cfg.d_model < 1 || cfg.n_heads < 1 || cfg.d_model % cfg.n_heads != 0) {
    throw ParameterError("d_model (" + std::to_string(cfg.d_model) + ") must be divisible by n_heads (" +
                         std::to_string(cfg.n_heads) + ")");
  }
  if (cfg.n_layers < 0) throw ParameterError("n_layers must be non-negative");
  if (cfg.d_ff < 1) throw ParameterError("d_ff must be positive");
  if (cfg.gene_dim < 1) throw ParameterError("gene_dim must be at least 1");
  if (!(cfg.dropout_rate >= 0.0 && cfg.dropout_rate < 1.0)) throw ParameterError("dropout_rate must lie in [0,1)");
  if (cfg.pe_mode == PeMode::learned_table && cfg.pe_table_size < 1) {
    throw ParameterError("learned_table positional encoding needs pe_table_size >= 1");
  }
  if (!(cfg.pe_base > 1.0)) throw ParameterError("pe_base must exceed 1");
}

std::string canonical_text(const ModelConfig& cfg) {
  std::ostringstream out;
  out << "d_ff=" << cfg.d_ff << '\n'
      << "d_model=" << cfg.d_model << '\n'
      << "dropout_rate=" << detail::format_double(cfg.dropout_rate) << '\n'
      << "gene_dim=" << cfg.gene_dim << '\n'
      << "n_heads=" << cfg.n_heads << '\n'
      << "n_layers=" << cfg.n_layers << '\n'
      << "pe_base=" << detail::format_double(cfg.pe_base) << '\n'
      << "pe_mode=" << to_string(cfg.pe_mode) << '\n'
      << "pe_table_size=" << cfg.pe_table_size << '\n'
      << "plain_mhsa=" << (cfg.plain_mhsa ? 1 : 0) << '\n';
  return out.str();
}

std::string config_digest(const ModelConfig& cfg) { return to_hex(sha256(canonical_text(cfg))); }

HisToSGEModel::HisToSGEModel(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  validate(cfg);
  const int d = cfg.d_model, ff = cfg.d_ff;
  if (cfg.pe_mode == PeMode::learned_table) add("pe.table", cfg.pe_table_size, d);
  for (int l = 0; l < cfg.n_layers; ++l) {
    add(layer_name(l, "attn.w_q"), d, d);
    add(layer_name(l, "attn.w_k"), d, d);
    add(layer_name(l, "attn.w_v"), d, d);
    add(layer_name(l, "attn.w_o"), d, d);
    if (!cfg.plain_mhsa) {
      add(layer_name(l, "ln1.gamma"), 1, d);
      add(layer_name(l, "ln1.beta"), 1, d);
    }
    add(layer_name(l, "ff.w1"), d, ff);
    add(layer_name(l, "ff.b1"), 1, ff);
    add(layer_name(l, "ff.w2"), ff, d);
    add(layer_name(l, "ff.b2"), 1, d);
    if (!cfg.plain_mhsa) {
      add(layer_name(l, "ln2.gamma"), 1, d);
      add(layer_name(l, "ln2.beta"), 1, d);
    }
  }
  if (!cfg.plain_mhsa && cfg.n_layers > 0) {
    add("final_ln.gamma", 1, d);
    add("final_ln.beta", 1, d);
  }
  add("head.w1", d, ff);
  add("head.b1", 1, ff);
  add("head.w2", ff, cfg.gene_dim);
  add("head.b2", 1, cfg.gene_dim);

  Rng rng(seed);
  for (auto& p : params_) {
    const bool is_weight = p.name.ends_with(".w_q") || p.name.ends_with(".w_k") || p.name.ends_with(".w_v") ||
                           p.name.ends_with(".w_o") || p.name.ends_with(".w1") || p.name.ends_with(".w2");
    if (is_weight) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(p.value.rows()));
      for (Eigen::Index i = 0; i < p.value.size(); ++i) p.value.data()[i] = rng.uniform_real(-bound, bound);
    } else if (p.name.ends_with(".gamma")) {
      p.value.setOnes();
    }
  }
}

void HisToSGEModel::add(std::string name, int rows, int cols) {
  index_.emplace(name, params_.size());
  params_.push_back(Param{std::move(name), Matrix::Zero(rows, cols)});
}

std::size_t HisToSGEModel::param_index(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ContractError("model has no parameter " + name);
  return it->second;
}

const Matrix& HisToSGEModel::param(const std::string& name) const { return params_[param_index(name)].value; }
Matrix& HisToSGEModel::param(const std::string& name) { return params_[param_index(name)].value; }

Gradients HisToSGEModel::zero_gradients() const {
  Gradients g;
  g.reserve(params_.size());
  for (const auto& p : params_) g.push_back(Matrix::Zero(p.value.rows(), p.value.cols()));
  return g;
}

std::size_t HisToSGEModel::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += static_cast<std::size_t>(p.value.size());
  return n;
}

bool HisToSGEModel::all_finite() const {
  for (const auto& p : params_) {
    if (!p.value.allFinite()) return false;
  }
  return true;
}

void HisToSGEModel::assign(const ModelConfig& cfg, std::vector<Param> params) {
  HisToSGEModel shape(cfg, 0);
  if (params.size() != shape.params_.size()) {
    throw IncompatibilityError("checkpoint holds " + std::to_string(params.size()) + " tensors, config expects " +
                               std::to_string(shape.params_.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& want = shape.params_[i];
    if (params[i].name != want.name || params[i].value.rows() != want.value.rows() ||
        params[i].value.cols() != want.value.cols()) {
      throw IncompatibilityError("checkpoint tensor " + params[i].name + " does not match expected " + want.name);
    }
  }
  cfg_ = cfg;
  index_ = std::move(shape.index_);
  params_ = std::move(params);
}

Matrix positional_encoding(std::span<const Spot> spots, const ModelConfig& cfg, const HisToSGEModel& model,
                           std::span<const std::size_t> ordinals) {
  const auto n = static_cast<Eigen::Index>(spots.size());
  Matrix pe(n, cfg.d_model);
  if (cfg.pe_mode == PeMode::learned_table) {
    if (!ordinals.empty() && ordinals.size() != spots.size()) {
      throw ContractError("ordinal count does not match spot count");
    }
    const Matrix& table = model.param("pe.table");
    for (Eigen::Index i = 0; i < n; ++i) {
      const std::size_t ord = ordinals.empty() ? static_cast<std::size_t>(i) : ordinals[static_cast<std::size_t>(i)];
      if (ord >= static_cast<std::size_t>(table.rows())) {
        throw EncodingError("spot ordinal " + std::to_string(ord) + " exceeds the learned table size " +
                            std::to_string(table.rows()));
      }
      pe.row(i) = table.row(static_cast<Eigen::Index>(ord));
    }
    return pe;
  }
  // First floor(d/2) columns encode x, the rest y; within an axis of n_a
  // columns, column j uses frequency base^(-2*floor(j/2)/n_a), sin for even j.
  const int nx = cfg.d_model / 2;
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& s = spots[static_cast<std::size_t>(i)];
    for (int axis = 0; axis < 2; ++axis) {
      const int begin = axis == 0 ? 0 : nx;
      const int width = axis == 0 ? nx : cfg.d_model - nx;
      const double pos = axis == 0 ? s.x_px : s.y_px;
      for (int j = 0; j < width; ++j) {
        const double freq = std::pow(cfg.pe_base, -2.0 * (j / 2) / static_cast<double>(width));
        pe(i, begin + j) = (j % 2 == 0) ? std::sin(pos * freq) : std::cos(pos * freq);
      }
    }
  }
  return pe;
}

Matrix attention(const Matrix& q, const Matrix& k, const Matrix& v, Matrix* weights) {
  if (q.cols() != k.cols()) throw ContractError("Q and K must have the same column count");
  if (k.rows() != v.rows()) throw ContractError("K and V must have the same row count");
  Matrix s = (q * k.transpose()) / std::sqrt(static_cast<double>(q.cols()));
  softmax_rows(s);
  Matrix out = s * v;
  if (weights != nullptr) *weights = std::move(s);
  return out;
}

Matrix mhsa(const Matrix& x, const HisToSGEModel& model, int layer) {
  const auto& cfg = model.config();
  if (x.cols() != cfg.d_model) throw ContractError("mhsa input width does not match d_model");
  const ParamRefs p = layer_params(model, layer);
  if (cfg.plain_mhsa) return attention_block(x, p, cfg.n_heads, nullptr);
  return x + attention_block(layer_norm(x, *p.ln1_g, *p.ln1_b, nullptr), p, cfg.n_heads, nullptr);
}

Matrix forward(const Matrix& features, std::span<const Spot> spots, const HisToSGEModel& model,
               std::span<const std::size_t> ordinals) {
  if (spots.empty()) return Matrix(0, model.config().gene_dim);
  return run_forward(input_with_pe(features, spots, model, ordinals), model, nullptr).pred;
}

Matrix forward(const std::vector<MultimodalFeatureMap>& maps, std::span<const Spot> spots,
               const HisToSGEModel& model, std::span<const std::size_t> ordinals) {
  if (maps.size() != spots.size()) throw ContractError("feature maps and spots are not aligned");
  for (std::size_t i = 0; i < maps.size(); ++i) {
    if (maps[i].spot_id != spots[i].spot_id) {
      throw ContractError("feature map " + maps[i].spot_id + " is aligned with spot " + spots[i].spot_id);
    }
  }
  if (maps.empty()) return Matrix(0, model.config().gene_dim);
  return forward(stack_features(maps), spots, model, ordinals);
}

double loss(const Matrix& pred, const Matrix& observed) {
  if (pred.rows() != observed.rows() || pred.cols() != observed.cols()) {
    throw ContractError("loss: prediction is " + std::to_string(pred.rows()) + "x" + std::to_string(pred.cols()) +
                        ", observation " + std::to_string(observed.rows()) + "x" + std::to_string(observed.cols()));
  }
  if (pred.size() == 0) return 0.0;
  return (pred - observed).squaredNorm() / static_cast<double>(pred.size());
}

LossAndGradients loss_and_gradients(const Matrix& features, std::span<const Spot> spots, const Matrix& observed,
                                    const HisToSGEModel& model, std::span<const std::size_t> ordinals,
                                    Rng* dropout_rng) {
  const auto& cfg = model.config();
  const Matrix x0 = input_with_pe(features, spots, model, ordinals);
  ForwardState st = run_forward(x0, model, dropout_rng);

  LossAndGradients out;
  out.loss = loss(st.pred, observed);
  out.grads = model.zero_gradients();
  auto grad = [&](const std::string& name) -> Matrix& { return out.grads[model.param_index(name)]; };

  // Head.
  Matrix dpred = (st.pred - observed) * (2.0 / static_cast<double>(st.pred.size()));
  grad("head.w2") += st.head_act.transpose() * dpred;
  grad("head.b2").row(0) += dpred.colwise().sum();
  Matrix dhead = (dpred * model.param("head.w2").transpose()).array() *
                 st.head_pre.unaryExpr([](double v) { return gelu_grad(v); }).array();
  grad("head.w1") += st.y.transpose() * dhead;
  grad("head.b1").row(0) += dhead.colwise().sum();
  Matrix dx = dhead * model.param("head.w1").transpose();
  if (!cfg.plain_mhsa && cfg.n_layers > 0) {
    dx = layer_norm_backward(dx, st.final_ln, model.param("final_ln.gamma"), grad("final_ln.gamma"),
                             grad("final_ln.beta"));
  }

  for (int l = cfg.n_layers - 1; l >= 0; --l) {
    const LayerCache& lc = st.layers[static_cast<std::size_t>(l)];
    const ParamRefs p = layer_params(model, l);

    // Feed-forward branch: x2 = x1 + F(ff_in) (plain: x2 = F(x1)).
    Matrix df = dx;
    if (lc.drop_ff.size() > 0) df.array() *= lc.drop_ff.array();
    grad(layer_name(l, "ff.w2")) += lc.ff_act.transpose() * df;
    grad(layer_name(l, "ff.b2")).row(0) += df.colwise().sum();
    const Matrix dpre =
        (df * p.w2->transpose()).array() * lc.ff_pre.unaryExpr([](double v) { return gelu_grad(v); }).array();
    grad(layer_name(l, "ff.w1")) += lc.ff_in.transpose() * dpre;
    grad(layer_name(l, "ff.b1")).row(0) += dpre.colwise().sum();
    const Matrix dff_in = dpre * p.w1->transpose();
    Matrix dx1;
    if (cfg.plain_mhsa) {
      dx1 = dff_in;
    } else {
      dx1 = dx + layer_norm_backward(dff_in, lc.ln2, *p.ln2_g, grad(layer_name(l, "ln2.gamma")),
                                     grad(layer_name(l, "ln2.beta")));
    }

    // Attention branch: x1 = x + A(attn_in) (plain: x1 = A(x)).
    Matrix da = dx1;
    if (lc.drop_attn.size() > 0) da.array() *= lc.drop_attn.array();
    grad(layer_name(l, "attn.w_o")) += lc.concat.transpose() * da;
    const Matrix dconcat = da * p.wo->transpose();
    const int dk = cfg.d_k();
    const double scale = 1.0 / std::sqrt(static_cast<double>(dk));
    Matrix dq(dconcat.rows(), dconcat.cols()), dkm(dconcat.rows(), dconcat.cols()), dv(dconcat.rows(), dconcat.cols());
    for (int h = 0; h < cfg.n_heads; ++h) {
      const Matrix& probs = lc.probs[static_cast<std::size_t>(h)];
      const auto dout = dconcat.middleCols(h * dk, dk);
      const Matrix dprobs = dout * lc.v.middleCols(h * dk, dk).transpose();
      dv.middleCols(h * dk, dk) = probs.transpose() * dout;
      const Vector row_dot = (dprobs.array() * probs.array()).rowwise().sum();
      const Matrix dscores = (probs.array() * (dprobs.array().colwise() - row_dot.array())) * scale;
      dq.middleCols(h * dk, dk) = dscores * lc.k.middleCols(h * dk, dk);
      dkm.middleCols(h * dk, dk) = dscores.transpose() * lc.q.middleCols(h * dk, dk);
    }
    grad(layer_name(l, "attn.w_q")) += lc.attn_in.transpose() * dq;
    grad(layer_name(l, "attn.w_k")) += lc.attn_in.transpose() * dkm;
    grad(layer_name(l, "attn.w_v")) += lc.attn_in.transpose() * dv;
    const Matrix dattn_in = dq * p.wq->transpose() + dkm * p.wk->transpose() + dv * p.wv->transpose();
    if (cfg.plain_mhsa) {
      dx = dattn_in;
    } else {
      dx = dx1 + layer_norm_backward(dattn_in, lc.ln1, *p.ln1_g, grad(layer_name(l, "ln1.gamma")),
                                     grad(layer_name(l, "ln1.beta")));
    }
  }

  if (cfg.pe_mode == PeMode::learned_table) {
    Matrix& dtable = grad("pe.table");
    for (Eigen::Index i = 0; i < dx.rows(); ++i) {
      const std::size_t ord = ordinals.empty() ? static_cast<std::size_t>(i) : ordinals[static_cast<std::size_t>(i)];
      dtable.row(static_cast<Eigen::Index>(ord)) += dx.row(i);
    }
  }
  out.pred = std::move(st.pred);
  return out;
}

}  // namespace histosge
