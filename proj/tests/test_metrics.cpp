#include <gtest/gtest.h>

#include <nlohmann/json.hpp>

#include <numeric>

#include "histosge/errors.hpp"
#include "histosge/metrics.hpp"
#include "histosge/rng.hpp"
#include "oracles.hpp"

using namespace histosge;

namespace {

std::optional<double> pcc_v(const std::vector<double>& a, const std::vector<double>& b) {
  return pcc(std::span<const double>(a), std::span<const double>(b));
}

double ari_v(const std::vector<long long>& a, const std::vector<long long>& b) {
  return ari(std::span<const long long>(a), std::span<const long long>(b));
}

Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  Matrix m(rows.size(), rows.begin()->size());
  int i = 0;
  for (const auto& r : rows) {
    int j = 0;
    for (double v : r) m(i, j++) = v;
    ++i;
  }
  return m;
}

oracle::Grid grid_of(const Matrix& m) {
  oracle::Grid g(m.rows(), std::vector<double>(m.cols()));
  for (int i = 0; i < m.rows(); ++i)
    for (int j = 0; j < m.cols(); ++j) g[i][j] = m(i, j);
  return g;
}

}  // namespace

TEST(Pcc, Examples) {
  EXPECT_DOUBLE_EQ(*pcc_v({1, 2, 3}, {1, 2, 3}), 1.0);
  EXPECT_DOUBLE_EQ(*pcc_v({1, 2, 3}, {3, 2, 1}), -1.0);
  EXPECT_NEAR(*pcc_v({1, 2, 3, 4}, {1, 3, 2, 4}), 0.8, 1e-15);
}

TEST(Pcc, ZeroVarianceIsUndefined) {
  EXPECT_FALSE(pcc_v({2, 2, 2}, {1, 2, 3}).has_value());
  EXPECT_FALSE(pcc_v({1, 2, 3}, {0, 0, 0}).has_value());
}

TEST(Pcc, ContractViolations) {
  EXPECT_THROW(pcc_v({1}, {1}), ContractError);
  EXPECT_THROW(pcc_v({1, 2}, {1, 2, 3}), ContractError);
}

TEST(Pcc, AffineInvarianceAndSymmetry) {
  Rng rng(1);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> x(12), y(12);
    for (auto& v : x) v = rng.normal();
    for (auto& v : y) v = rng.normal();
    const double a = rng.uniform_real(0.1, 10.0), b = rng.normal(0, 5);
    std::vector<double> ax(12), nx(12);
    for (int i = 0; i < 12; ++i) {
      ax[i] = a * x[i] + b;
      nx[i] = -a * x[i] + b;
    }
    const double r = *pcc_v(x, y);
    EXPECT_NEAR(*pcc_v(ax, y), r, 1e-9);
    EXPECT_NEAR(*pcc_v(nx, y), -r, 1e-9);
    EXPECT_EQ(*pcc_v(y, x), r);
    EXPECT_LE(std::abs(r), 1.0);
  }
}

TEST(Pcc, BoundedForNearlyCollinearInputs) {
  std::vector<double> x(50), y(50);
  for (int i = 0; i < 50; ++i) {
    x[i] = 1e8 + i * 1e-3;
    y[i] = 3 * x[i];
  }
  const double r = *pcc_v(x, y);
  EXPECT_LE(r, 1.0);
  // The inputs themselves are rounded at 1e8, which costs ~1e-12 of correlation.
  EXPECT_NEAR(r, 1.0, 1e-10);
}

TEST(MseMae, Examples) {
  const Matrix a = from_rows({{1, 2}, {3, 4}});
  EXPECT_EQ(mse(a, a), 0.0);
  EXPECT_EQ(mae(a, a), 0.0);
  EXPECT_EQ(mse(from_rows({{0}}), from_rows({{2}})), 4.0);
  EXPECT_EQ(mae(from_rows({{0}}), from_rows({{-2}})), 2.0);
  EXPECT_THROW(mse(a, Matrix::Zero(2, 3)), ContractError);
  EXPECT_THROW(mae(a, Matrix::Zero(3, 2)), ContractError);
}

TEST(MseMae, LoopOracleAndJensen) {
  Rng rng(2);
  for (int trial = 0; trial < 100; ++trial) {
    Matrix a(3, 3), b(3, 3);
    for (Eigen::Index i = 0; i < 9; ++i) {
      a.data()[i] = rng.normal();
      b.data()[i] = rng.normal();
    }
    EXPECT_NEAR(mse(a, b), oracle::mse(grid_of(a), grid_of(b)), 1e-12);
    EXPECT_NEAR(mae(a, b), oracle::mae(grid_of(a), grid_of(b)), 1e-12);
    EXPECT_EQ(mse(a, b), mse(b, a));
    EXPECT_EQ(mae(a, b), mae(b, a));
    EXPECT_LE(mae(a, b), std::sqrt(mse(a, b)) + 1e-15);
  }
}

TEST(Evaluate, PerfectPrediction) {
  Rng rng(3);
  Matrix x(6, 4);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = rng.uniform_real();
  const auto r = evaluate(x, x);
  EXPECT_DOUBLE_EQ(r.mean_pcc, 1.0);
  EXPECT_EQ(r.mse, 0.0);
  EXPECT_EQ(r.mae, 0.0);
  EXPECT_EQ(r.n_spots, 6u);
  EXPECT_EQ(r.n_genes, 4u);
}

TEST(Evaluate, ConstantGeneExcludedButCounted) {
  Matrix obs = from_rows({{1, 5, 0}, {2, 5, 1}, {3, 5, 0}});
  Matrix pred = from_rows({{1, 1, 0}, {2, 2, 1}, {3, 3, 0}});
  const auto r = evaluate(obs, pred);
  EXPECT_FALSE(r.per_gene_pcc[1].has_value());
  EXPECT_EQ(r.n_undefined, 1u);
  EXPECT_DOUBLE_EQ(r.mean_pcc, 1.0);
}

TEST(Evaluate, HandComputedToy) {
  const Matrix obs = from_rows({{1, 0}, {2, 1}, {3, 0}, {4, 1}});
  const Matrix pred = from_rows({{1, 0}, {3, 1}, {2, 1}, {4, 0}});
  const auto r = evaluate(obs, pred);
  EXPECT_NEAR(*r.per_gene_pcc[0], 0.8, 1e-15);
  EXPECT_NEAR(*r.per_gene_pcc[1], 0.0, 1e-15);
  EXPECT_NEAR(r.mean_pcc, 0.4, 1e-15);
  EXPECT_DOUBLE_EQ(r.mse, 0.5);
  EXPECT_DOUBLE_EQ(r.mae, 0.5);
}

TEST(Evaluate, AllUndefinedIsEvaluationError) {
  EXPECT_THROW(evaluate(Matrix::Ones(4, 3), Matrix::Ones(4, 3)), EvaluationError);
}

TEST(Evaluate, SpotAxis) {
  const Matrix obs = from_rows({{1, 2, 3}, {3, 2, 1}});
  const Matrix pred = from_rows({{1, 2, 3}, {1, 2, 3}});
  const auto r = evaluate(obs, pred, PccAxis::spot);
  ASSERT_EQ(r.per_gene_pcc.size(), 2u);
  EXPECT_DOUBLE_EQ(*r.per_gene_pcc[0], 1.0);
  EXPECT_DOUBLE_EQ(*r.per_gene_pcc[1], -1.0);
  EXPECT_DOUBLE_EQ(r.mean_pcc, 0.0);
}

TEST(Evaluate, ReportFormats) {
  const Matrix obs = from_rows({{1, 5, 0}, {2, 5, 1}, {3, 5, 3}});
  const Matrix pred = from_rows({{1, 1, 0}, {2, 2, 2}, {3, 3, 1}});
  const auto r = evaluate(obs, pred);
  const std::vector<std::string> names{"PCP4", "FABP4", "MBP"};
  const auto csv = format_report_csv(r, names);
  EXPECT_NE(csv.find("FABP4,NA\n"), std::string::npos);
  EXPECT_NE(csv.find("PCP4,1\n"), std::string::npos);
  EXPECT_NE(csv.find("# n_undefined=1\n"), std::string::npos);
  const auto j = nlohmann::json::parse(format_report_json(r, names));
  EXPECT_TRUE(j["per_gene_pcc"]["FABP4"].is_null());
  EXPECT_DOUBLE_EQ(j["mse"].get<double>(), r.mse);
  const auto table = format_report_table(r, names, 2);
  EXPECT_LT(table.find("PCP4"), table.find("MBP"));
}

TEST(Ari, Examples) {
  EXPECT_EQ(ari_v({0, 0, 1, 1}, {5, 5, 9, 9}), 1.0);
  EXPECT_NEAR(ari_v({0, 0, 1, 1}, {0, 1, 0, 1}), -0.5, 1e-15);
  EXPECT_EQ(ari_v({3, 3, 3}, {1, 1, 1}), 1.0);
  EXPECT_THROW(ari_v({0, 1}, {0, 1, 2}), ContractError);
}

TEST(Ari, PermutationInvarianceAndUpperBound) {
  Rng rng(4);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 5 + static_cast<int>(rng.uniform_index(40));
    std::vector<long long> a(n), b(n);
    for (auto& v : a) v = static_cast<long long>(rng.uniform_index(4));
    for (auto& v : b) v = static_cast<long long>(rng.uniform_index(5));
    std::vector<long long> relabel{7, -3, 100, 42, 9};
    std::vector<long long> b2(n);
    for (int i = 0; i < n; ++i) b2[i] = relabel[b[i]];
    EXPECT_NEAR(ari_v(a, b), ari_v(a, b2), 1e-14);
    EXPECT_NEAR(ari_v(a, b), ari_v(b, a), 1e-14);
    EXPECT_LE(ari_v(a, b), 1.0 + 1e-15);
    EXPECT_NEAR(ari_v(a, a), 1.0, 1e-15);
  }
}

TEST(Ari, RandomLabellingHasZeroExpectation) {
  Rng rng(5);
  std::vector<long long> truth(60);
  for (auto& v : truth) v = static_cast<long long>(rng.uniform_index(4));
  double sum = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<long long> other(60);
    for (auto& v : other) v = static_cast<long long>(rng.uniform_index(4));
    sum += ari_v(truth, other);
    // Permuting the label values gives the same partition.
    std::vector<long long> names{0, 1, 2, 3};
    rng.shuffle(std::span<long long>(names));
    std::vector<long long> relabelled(60);
    for (int i = 0; i < 60; ++i) relabelled[i] = names[truth[i]];
    ASSERT_DOUBLE_EQ(ari_v(truth, relabelled), 1.0);
  }
  EXPECT_NEAR(sum / 1000, 0.0, 0.05);
}

TEST(Metrics, MatchOraclesOnRandomInstances) {
  Rng rng(6);
  for (int trial = 0; trial < 200; ++trial) {
    Matrix a(10, 10), b(10, 10);
    for (Eigen::Index i = 0; i < 100; ++i) {
      a.data()[i] = rng.normal(0, 3);
      b.data()[i] = rng.normal(0, 3);
    }
    EXPECT_NEAR(mse(a, b), oracle::mse(grid_of(a), grid_of(b)), 1e-10);
    EXPECT_NEAR(mae(a, b), oracle::mae(grid_of(a), grid_of(b)), 1e-10);
    const auto ga = grid_of(a), gb = grid_of(b);
    for (int j = 0; j < 10; ++j) {
      std::vector<double> x(10), y(10);
      for (int i = 0; i < 10; ++i) {
        x[i] = ga[i][j];
        y[i] = gb[i][j];
      }
      EXPECT_NEAR(*pcc_v(x, y), oracle::pearson(x, y), 1e-10);
    }
    std::vector<long long> la(10), lb(10);
    for (auto& v : la) v = static_cast<long long>(rng.uniform_index(3));
    for (auto& v : lb) v = static_cast<long long>(rng.uniform_index(4));
    EXPECT_NEAR(ari_v(la, lb), oracle::ari_pairs(la, lb), 1e-10);
  }
}

TEST(KMeans, SeparatedCloudsRecovered) {
  Rng rng(7);
  Matrix x(40, 3);
  std::vector<long long> truth(40);
  for (int i = 0; i < 40; ++i) {
    truth[i] = i % 2;
    for (int j = 0; j < 3; ++j) x(i, j) = (i % 2 ? 10.0 : -10.0) + rng.normal(0, 0.5);
  }
  EXPECT_EQ(ari(kmeans_domains(x, 2, 1), truth), 1.0);
}

TEST(KMeans, OneClusterPerSpotWhenKEqualsN) {
  Rng rng(8);
  Matrix x(6, 2);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = rng.normal();
  auto labels = kmeans_domains(x, 6, 3);
  std::sort(labels.begin(), labels.end());
  EXPECT_EQ(labels, (std::vector<long long>{0, 1, 2, 3, 4, 5}));
}

TEST(KMeans, DeterministicPerSeedAndValidated) {
  Rng rng(9);
  Matrix x(30, 80);  // wider than the PCA cut-off
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = rng.normal();
  EXPECT_EQ(kmeans_domains(x, 4, 11), kmeans_domains(x, 4, 11));
  EXPECT_THROW(kmeans_domains(x, 31, 1), ParameterError);
  EXPECT_THROW(kmeans_domains(x, 1, 1), ParameterError);
}

TEST(Pca, ProjectionPreservesLeadingVariance) {
  Rng rng(10);
  Matrix x(50, 4);
  for (int i = 0; i < 50; ++i) {
    const double t = rng.normal(0, 5);
    x.row(i) << t, 2 * t, rng.normal(0, 0.1), rng.normal(0, 0.1);
  }
  const Matrix p = pca_project(x, 1);
  ASSERT_EQ(p.cols(), 1);
  const Matrix centred = x.rowwise() - x.colwise().mean();
  EXPECT_NEAR(p.squaredNorm() / centred.squaredNorm(), 1.0, 1e-3);
}
