#include <gtest/gtest.h>

#include <fstream>
#include <iterator>
#include <numeric>

#include "histosge/checkpoint.hpp"
#include "histosge/errors.hpp"
#include "histosge/model.hpp"
#include "oracles.hpp"
#include "scenarios.hpp"
#include "test_support.hpp"

using namespace histosge;

namespace {

Matrix random_matrix(Rng& rng, int r, int c, double sigma = 1.0) {
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal(0.0, sigma);
  return m;
}

oracle::Grid to_grid(const Matrix& m) {
  oracle::Grid g(m.rows(), std::vector<double>(m.cols()));
  for (int i = 0; i < m.rows(); ++i)
    for (int j = 0; j < m.cols(); ++j) g[i][j] = m(i, j);
  return g;
}

ModelConfig small_config(int d_model = 12, int heads = 3) {
  ModelConfig cfg;
  cfg.d_model = d_model;
  cfg.n_heads = heads;
  cfg.n_layers = 2;
  cfg.d_ff = 10;
  cfg.gene_dim = 4;
  cfg.dropout_rate = 0.0;
  return cfg;
}

std::vector<Spot> line_spots(int n) {
  std::vector<Spot> s;
  for (int i = 0; i < n; ++i) s.push_back({"p" + std::to_string(i), 5 * i, 100 - 3 * i});
  return s;
}

}  // namespace

TEST(ModelConfig, DefaultsAreConsistent) {
  ModelConfig cfg;
  EXPECT_EQ(cfg.d_model, 1029);
  EXPECT_EQ(cfg.embed_dim(), 1024);
  EXPECT_EQ(cfg.d_model % cfg.n_heads, 0);
  EXPECT_NO_THROW(validate(ModelConfig{.gene_dim = 10}));
  EXPECT_THROW(validate(ModelConfig{.n_heads = 8}), ParameterError);
  EXPECT_THROW(validate(ModelConfig{.gene_dim = 0}), ParameterError);
  EXPECT_THROW(validate(ModelConfig{.dropout_rate = 1.0}), ParameterError);
}

TEST(ModelConfig, CanonicalTextRoundTrips) {
  auto cfg = small_config();
  cfg.pe_mode = PeMode::learned_table;
  cfg.pe_table_size = 17;
  cfg.dropout_rate = 0.125;
  const auto back = parse_model_config(canonical_text(cfg));
  EXPECT_EQ(canonical_text(back), canonical_text(cfg));
  EXPECT_EQ(config_digest(back), config_digest(cfg));
  cfg.d_ff += 1;
  EXPECT_NE(config_digest(back), config_digest(cfg));
}

TEST(PositionalEncoding, SinusoidalSameCoordinatesSameRows) {
  ModelConfig cfg;
  cfg.gene_dim = 3;
  const HisToSGEModel model(cfg, 1);
  const std::vector<Spot> spots{{"a", 120, 77}, {"b", 120, 77}, {"c", 121, 77}};
  const Matrix pe = positional_encoding(spots, cfg, model);
  ASSERT_EQ(pe.rows(), 3);
  ASSERT_EQ(pe.cols(), 1029);
  EXPECT_EQ(pe.row(0), pe.row(1));
  EXPECT_GT((pe.row(0) - pe.row(2)).norm(), 0.0);
}

TEST(PositionalEncoding, SinusoidalValuesAtOrigin) {
  auto cfg = small_config(12, 3);
  const HisToSGEModel model(cfg, 1);
  const std::vector<Spot> spots{{"o", 0, 0}};
  const Matrix pe = positional_encoding(spots, cfg, model);
  // sin columns vanish at zero, cos columns are one.
  for (int j = 0; j < 12; ++j) EXPECT_DOUBLE_EQ(pe(0, j), (j % 2) ? 1.0 : 0.0) << j;
}

TEST(PositionalEncoding, LearnedTableLookupAndBounds) {
  auto cfg = small_config();
  cfg.pe_mode = PeMode::learned_table;
  cfg.pe_table_size = 3;
  HisToSGEModel model(cfg, 2);
  Rng rng(3);
  model.param("pe.table") = random_matrix(rng, 3, 12);
  const auto spots = line_spots(2);
  const std::vector<std::size_t> ord{2, 0};
  const Matrix pe = positional_encoding(spots, cfg, model, ord);
  EXPECT_EQ(pe.row(0), model.param("pe.table").row(2));
  EXPECT_EQ(pe.row(1), model.param("pe.table").row(0));
  const std::vector<std::size_t> bad{0, 3};
  EXPECT_THROW(positional_encoding(spots, cfg, model, bad), EncodingError);
}

TEST(Attention, SingleRowReturnsValue) {
  Rng rng(1);
  const Matrix q = random_matrix(rng, 1, 4), k = random_matrix(rng, 1, 4), v = random_matrix(rng, 1, 6);
  Matrix w;
  const Matrix out = attention(q, k, v, &w);
  EXPECT_EQ(w(0, 0), 1.0);
  EXPECT_TRUE(out.isApprox(v, 1e-15));
}

TEST(Attention, ZeroQueryAveragesValues) {
  Rng rng(2);
  const Matrix q = Matrix::Zero(3, 4), k = random_matrix(rng, 5, 4), v = random_matrix(rng, 5, 2);
  const Matrix out = attention(q, k, v);
  const Eigen::RowVectorXd mean = v.colwise().mean();
  for (int i = 0; i < 3; ++i) EXPECT_LT((out.row(i) - mean).norm(), 1e-14);
}

TEST(Attention, MatchesLoopOracle) {
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const Matrix q = random_matrix(rng, 3, 4), k = random_matrix(rng, 3, 4), v = random_matrix(rng, 3, 4);
    Matrix w;
    const Matrix out = attention(q, k, v, &w);
    const auto ref = oracle::attention(to_grid(q), to_grid(k), to_grid(v));
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 4; ++j) EXPECT_NEAR(out(i, j), ref[i][j], 1e-10);
    ASSERT_EQ(w.rows(), 3);
    ASSERT_EQ(w.cols(), 3);
    for (int i = 0; i < 3; ++i) EXPECT_NEAR(w.row(i).sum(), 1.0, 1e-6);
  }
}

TEST(Attention, LargeScoresStayFinite) {
  Rng rng(4);
  const Matrix q = random_matrix(rng, 6, 8, 50.0), k = random_matrix(rng, 6, 8, 50.0), v = random_matrix(rng, 6, 3);
  Matrix w;
  const Matrix out = attention(q, k, v, &w);
  EXPECT_TRUE(out.allFinite());
  for (int i = 0; i < 6; ++i) EXPECT_NEAR(w.row(i).sum(), 1.0, 1e-6);
}

TEST(Mhsa, IdentityProjectionsReduceToAttention) {
  auto cfg = small_config(6, 1);
  cfg.n_layers = 1;
  cfg.plain_mhsa = true;
  HisToSGEModel model(cfg, 9);
  for (const char* w : {"attn.w_q", "attn.w_k", "attn.w_v", "attn.w_o"}) {
    model.param(std::string("layers.0.") + w) = Matrix::Identity(6, 6);
  }
  Rng rng(5);
  const Matrix x = random_matrix(rng, 5, 6);
  EXPECT_LT((mhsa(x, model, 0) - attention(x, x, x)).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(Mhsa, ShapePreservedAndPermutationEquivariant) {
  for (bool plain : {false, true}) {
    auto cfg = small_config(12, 3);
    cfg.plain_mhsa = plain;
    const HisToSGEModel model(cfg, 10);
    Rng rng(6);
    const Matrix x = random_matrix(rng, 7, 12);
    const Matrix y = mhsa(x, model, 0);
    ASSERT_EQ(y.rows(), 7);
    ASSERT_EQ(y.cols(), 12);
    EXPECT_TRUE(y.allFinite());
    std::vector<int> perm(7);
    std::iota(perm.begin(), perm.end(), 0);
    Rng prng(11);
    prng.shuffle(std::span<int>(perm));
    Matrix xp(7, 12);
    for (int i = 0; i < 7; ++i) xp.row(i) = x.row(perm[i]);
    const Matrix yp = mhsa(xp, model, 0);
    for (int i = 0; i < 7; ++i) EXPECT_LT((yp.row(i) - y.row(perm[i])).norm(), 1e-12);
  }
}

TEST(Forward, OutputShapeForThousandGenes) {
  ModelConfig cfg;
  cfg.gene_dim = 1000;
  cfg.n_layers = 1;
  const HisToSGEModel model(cfg, 1);
  Rng rng(1);
  const Matrix x = random_matrix(rng, 5, 1029, 0.1);
  const Matrix pred = forward(x, line_spots(5), model);
  EXPECT_EQ(pred.rows(), 5);
  EXPECT_EQ(pred.cols(), 1000);
}

TEST(Forward, ZeroedHeadGivesZeroPredictions) {
  const auto cfg = small_config();
  HisToSGEModel model(cfg, 2);
  model.param("head.w2").setZero();
  model.param("head.b2").setZero();
  Rng rng(2);
  const Matrix pred = forward(random_matrix(rng, 4, 12), line_spots(4), model);
  EXPECT_EQ(pred.cwiseAbs().maxCoeff(), 0.0);
}

TEST(Forward, DuplicateSpotsPredictIdenticalRows) {
  const auto cfg = small_config();
  const HisToSGEModel model(cfg, 3);
  Rng rng(3);
  Matrix x = random_matrix(rng, 4, 12);
  x.row(3) = x.row(1);
  auto spots = line_spots(4);
  spots[3].x_px = spots[1].x_px;
  spots[3].y_px = spots[1].y_px;
  const Matrix pred = forward(x, spots, model);
  EXPECT_LT((pred.row(1) - pred.row(3)).norm(), 1e-12);
}

TEST(Forward, PermutationEquivariant) {
  const auto cfg = small_config();
  const HisToSGEModel model(cfg, 4);
  Rng rng(4);
  const Matrix x = random_matrix(rng, 6, 12);
  const auto spots = line_spots(6);
  const std::vector<int> perm{3, 0, 5, 1, 4, 2};
  Matrix xp(6, 12);
  std::vector<Spot> sp;
  for (int i = 0; i < 6; ++i) {
    xp.row(i) = x.row(perm[i]);
    sp.push_back(spots[perm[i]]);
  }
  const Matrix a = forward(x, spots, model), b = forward(xp, sp, model);
  for (int i = 0; i < 6; ++i) EXPECT_LT((b.row(i) - a.row(perm[i])).norm(), 1e-12);
}

TEST(Forward, MisalignedInputsAreContractErrors) {
  const auto cfg = small_config();
  const HisToSGEModel model(cfg, 5);
  EXPECT_THROW(forward(Matrix::Zero(3, 12), line_spots(4), model), ContractError);
  EXPECT_THROW(forward(Matrix::Zero(4, 11), line_spots(4), model), ContractError);
}

TEST(Loss, Examples) {
  const Matrix a = Matrix::Ones(3, 2);
  EXPECT_EQ(loss(a, a), 0.0);
  Matrix p = Matrix::Zero(1, 2), o = Matrix::Ones(1, 2);
  EXPECT_DOUBLE_EQ(loss(p, o), 1.0);
  Rng rng(6);
  const Matrix x = random_matrix(rng, 4, 3), y = random_matrix(rng, 4, 3);
  EXPECT_EQ(loss(x, y), loss(y, x));
  EXPECT_GT(loss(x, y), 0.0);
  EXPECT_THROW(loss(x, Matrix::Zero(4, 2)), ContractError);
}

TEST(Gradients, MatchFiniteDifferencesLearnedTable) {
  const auto r = scenarios::gradient_check(scenarios::gradient_check_config(), 1);
  EXPECT_LE(r.max_rel_error, 1e-4) << "worst tensor " << r.worst_param;
  EXPECT_GT(r.n_checked, 500u);
}

TEST(Gradients, MatchFiniteDifferencesSinusoidalAndPlain) {
  auto cfg = scenarios::gradient_check_config();
  cfg.pe_mode = PeMode::sinusoidal_xy;
  cfg.pe_table_size = 0;
  auto r = scenarios::gradient_check(cfg, 2);
  EXPECT_LE(r.max_rel_error, 1e-4) << "worst tensor " << r.worst_param;
  cfg.plain_mhsa = true;
  cfg.n_layers = 2;
  r = scenarios::gradient_check(cfg, 3);
  EXPECT_LE(r.max_rel_error, 1e-4) << "worst tensor " << r.worst_param;
}

TEST(Gradients, DropoutMaskedPassIsConsistent) {
  // With a fixed dropout stream the masked network is deterministic, so two
  // calls with equal generator states agree exactly.
  auto cfg = small_config();
  cfg.dropout_rate = 0.3;
  const HisToSGEModel model(cfg, 6);
  Rng rng(7);
  const Matrix x = random_matrix(rng, 5, 12), obs = random_matrix(rng, 5, 4);
  Rng d1(99), d2(99);
  const auto a = loss_and_gradients(x, line_spots(5), obs, model, {}, &d1);
  const auto b = loss_and_gradients(x, line_spots(5), obs, model, {}, &d2);
  EXPECT_EQ(a.loss, b.loss);
  const auto plain = loss_and_gradients(x, line_spots(5), obs, model);
  EXPECT_NE(a.loss, plain.loss);
  EXPECT_DOUBLE_EQ(plain.loss, loss(forward(x, line_spots(5), model), obs));
}

TEST(Model, InitialisationRulesAndDeterminism) {
  const auto cfg = small_config();
  const HisToSGEModel a(cfg, 42), b(cfg, 42), c(cfg, 43);
  EXPECT_EQ(a.param("layers.0.attn.w_q"), b.param("layers.0.attn.w_q"));
  EXPECT_NE(a.param("layers.0.attn.w_q"), c.param("layers.0.attn.w_q"));
  const double bound = 1.0 / std::sqrt(12.0);
  EXPECT_LE(a.param("layers.1.ff.w1").cwiseAbs().maxCoeff(), bound);
  EXPECT_EQ(a.param("layers.0.ff.b1").cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(a.param("layers.0.ln1.gamma"), Matrix::Ones(1, 12));
  EXPECT_TRUE(a.all_finite());
  std::size_t total = 0;
  for (const auto& p : a.params()) total += static_cast<std::size_t>(p.value.size());
  EXPECT_EQ(a.parameter_count(), total);
}

TEST(Checkpoint, RoundTripAndIncompatibility) {
  testing_support::TempDir tmp;
  const auto cfg = small_config();
  const HisToSGEModel model(cfg, 8);
  save_checkpoint(model, 77, {{"extractor", "x"}}, tmp / "m.ckpt");
  const auto ck = load_checkpoint(tmp / "m.ckpt");
  EXPECT_EQ(ck.step, 77u);
  EXPECT_EQ(ck.metadata.at("extractor"), "x");
  EXPECT_EQ(ck.config_digest, config_digest(cfg));
  for (std::size_t i = 0; i < model.params().size(); ++i) {
    const Matrix expect = model.params()[i].value.cast<float>().cast<double>();
    EXPECT_EQ(ck.model.params()[i].value, expect);
  }
  // Flip a byte of the stored config text: the digest no longer matches.
  std::string bytes;
  {
    std::ifstream in(tmp / "m.ckpt", std::ios::binary);
    bytes.assign(std::istreambuf_iterator<char>(in), {});
  }
  const auto pos = bytes.find("d_ff=10");
  ASSERT_NE(pos, std::string::npos);
  bytes[pos + 5] = '9';
  {
    std::ofstream out(tmp / "bad.ckpt", std::ios::binary);
    out << bytes;
  }
  EXPECT_THROW(load_checkpoint(tmp / "bad.ckpt"), IncompatibilityError);
  {
    std::ofstream out(tmp / "junk.ckpt", std::ios::binary);
    out << "not a checkpoint";
  }
  EXPECT_THROW(load_checkpoint(tmp / "junk.ckpt"), FormatError);
}

TEST(Model, AssignRejectsShapeMismatch) {
  const auto cfg = small_config();
  HisToSGEModel model(cfg, 1);
  auto params = model.params();
  params[0].value = Matrix::Zero(1, 1);
  EXPECT_THROW(model.assign(cfg, params), IncompatibilityError);
}
