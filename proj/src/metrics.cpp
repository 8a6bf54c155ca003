#include "histosge/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "histosge/errors.hpp"
#include "histosge/rng.hpp"
#include "text_util.hpp"

namespace histosge {

namespace {

void require_same_shape(const Matrix& a, const Matrix& b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ContractError(std::string(what) + ": shapes " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                        " and " + std::to_string(b.rows()) + "x" + std::to_string(b.cols()) + " differ");
  }
}

double comb2(double n) { return n * (n - 1.0) / 2.0; }

std::vector<std::size_t> relabel(std::span<const long long> labels, std::size_t& n_classes) {
  std::map<long long, std::size_t> ids;
  std::vector<std::size_t> out;
  out.reserve(labels.size());
  for (auto l : labels) out.push_back(ids.emplace(l, ids.size()).first->second);
  n_classes = ids.size();
  return out;
}

}  // namespace

std::optional<double> pcc(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw ContractError("pcc: vectors differ in length");
  if (x.size() < 2) throw ContractError("pcc needs at least two samples");
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx, dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx <= 0.0 || syy <= 0.0) return std::nullopt;
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

double mse(const Matrix& observed, const Matrix& predicted) {
  require_same_shape(observed, predicted, "mse");
  if (observed.size() == 0) throw ContractError("mse of empty matrices");
  return (observed - predicted).squaredNorm() / static_cast<double>(observed.size());
}

double mae(const Matrix& observed, const Matrix& predicted) {
  require_same_shape(observed, predicted, "mae");
  if (observed.size() == 0) throw ContractError("mae of empty matrices");
  return (observed - predicted).cwiseAbs().sum() / static_cast<double>(observed.size());
}

MetricsReport evaluate(const Matrix& observed, const Matrix& predicted, PccAxis axis) {
  require_same_shape(observed, predicted, "evaluate");
  MetricsReport r;
  r.axis = axis;
  r.n_spots = static_cast<std::size_t>(observed.rows());
  r.n_genes = static_cast<std::size_t>(observed.cols());
  r.mse = mse(observed, predicted);
  r.mae = mae(observed, predicted);
  const Eigen::Index count = axis == PccAxis::gene ? observed.cols() : observed.rows();
  double sum = 0.0;
  std::size_t defined = 0;
  for (Eigen::Index j = 0; j < count; ++j) {
    Vector a = axis == PccAxis::gene ? Vector(observed.col(j)) : Vector(observed.row(j).transpose());
    Vector b = axis == PccAxis::gene ? Vector(predicted.col(j)) : Vector(predicted.row(j).transpose());
    std::optional<double> v;
    if (a.size() >= 2) v = pcc(std::span<const double>(a.data(), a.size()), std::span<const double>(b.data(), b.size()));
    r.per_gene_pcc.push_back(v);
    if (v) {
      sum += *v;
      ++defined;
    } else {
      ++r.n_undefined;
    }
  }
  if (defined == 0) throw EvaluationError("no correlation is defined: every vector has zero variance");
  r.mean_pcc = sum / static_cast<double>(defined);
  return r;
}

std::string format_report_table(const MetricsReport& r, const std::vector<std::string>& gene_names,
                                std::size_t top_genes) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(6);
  out << "spots        " << r.n_spots << '\n'
      << "genes        " << r.n_genes << '\n'
      << "pcc axis     " << (r.axis == PccAxis::gene ? "gene" : "spot") << '\n'
      << "mean PCC     " << r.mean_pcc << '\n'
      << "undefined    " << r.n_undefined << '\n'
      << "MSE          " << r.mse << '\n'
      << "MAE          " << r.mae << '\n';
  if (top_genes > 0 && r.axis == PccAxis::gene) {
    std::vector<std::size_t> idx;
    for (std::size_t j = 0; j < r.per_gene_pcc.size(); ++j) {
      if (r.per_gene_pcc[j]) idx.push_back(j);
    }
    std::stable_sort(idx.begin(), idx.end(),
                     [&](std::size_t a, std::size_t b) { return *r.per_gene_pcc[a] > *r.per_gene_pcc[b]; });
    idx.resize(std::min(idx.size(), top_genes));
    out << "top genes by PCC\n";
    for (auto j : idx) out << "  " << std::left << std::setw(16) << gene_names.at(j) << *r.per_gene_pcc[j] << '\n';
  }
  return out.str();
}

std::string format_report_csv(const MetricsReport& r, const std::vector<std::string>& gene_names) {
  std::ostringstream out;
  out << "# mean_pcc=" << detail::format_double(r.mean_pcc) << '\n'
      << "# mse=" << detail::format_double(r.mse) << '\n'
      << "# mae=" << detail::format_double(r.mae) << '\n'
      << "# n_spots=" << r.n_spots << '\n'
      << "# n_genes=" << r.n_genes << '\n'
      << "# n_undefined=" << r.n_undefined << '\n';
  out << (r.axis == PccAxis::gene ? "gene,pcc\n" : "spot_index,pcc\n");
  for (std::size_t j = 0; j < r.per_gene_pcc.size(); ++j) {
    out << (r.axis == PccAxis::gene ? gene_names.at(j) : std::to_string(j)) << ','
        << (r.per_gene_pcc[j] ? detail::format_double(*r.per_gene_pcc[j]) : std::string("NA")) << '\n';
  }
  return out.str();
}

std::string format_report_json(const MetricsReport& r, const std::vector<std::string>& gene_names) {
  nlohmann::ordered_json j;
  j["mean_pcc"] = r.mean_pcc;
  j["mse"] = r.mse;
  j["mae"] = r.mae;
  j["n_spots"] = r.n_spots;
  j["n_genes"] = r.n_genes;
  j["n_undefined"] = r.n_undefined;
  j["pcc_axis"] = r.axis == PccAxis::gene ? "gene" : "spot";
  if (r.axis == PccAxis::gene) {
    nlohmann::ordered_json per = nlohmann::ordered_json::object();
    for (std::size_t g = 0; g < r.per_gene_pcc.size(); ++g) {
      per[gene_names.at(g)] = r.per_gene_pcc[g] ? nlohmann::ordered_json(*r.per_gene_pcc[g]) : nlohmann::ordered_json();
    }
    j["per_gene_pcc"] = per;
  }
  return j.dump(2) + "\n";
}

double ari(std::span<const long long> labels_a, std::span<const long long> labels_b) {
  if (labels_a.size() != labels_b.size()) throw ContractError("ari: label vectors differ in length");
  if (labels_a.size() < 2) throw ContractError("ari needs at least two samples");
  std::size_t ka = 0, kb = 0;
  const auto a = relabel(labels_a, ka);
  const auto b = relabel(labels_b, kb);
  std::vector<double> table(ka * kb, 0.0), rows(ka, 0.0), cols(kb, 0.0);
  for (std::size_t i = 0; i < a.size(); ++i) {
    table[a[i] * kb + b[i]] += 1.0;
    rows[a[i]] += 1.0;
    cols[b[i]] += 1.0;
  }
  double index = 0.0, sum_a = 0.0, sum_b = 0.0;
  for (double c : table) index += comb2(c);
  for (double c : rows) sum_a += comb2(c);
  for (double c : cols) sum_b += comb2(c);
  const double expected = sum_a * sum_b / comb2(static_cast<double>(a.size()));
  const double max_index = 0.5 * (sum_a + sum_b);
  const double denom = max_index - expected;
  if (denom == 0.0) return 1.0;
  return (index - expected) / denom;
}

Matrix pca_project(const Matrix& x, int n_components) {
  const Eigen::RowVectorXd mean = x.colwise().mean();
  const Matrix centred = x.rowwise() - mean;
  const Eigen::MatrixXd cov = (centred.transpose() * centred) / std::max<double>(1.0, static_cast<double>(x.rows() - 1));
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
  const int p = std::min<int>(n_components, static_cast<int>(x.cols()));
  Eigen::MatrixXd basis(x.cols(), p);
  for (int c = 0; c < p; ++c) {
    Eigen::VectorXd v = solver.eigenvectors().col(x.cols() - 1 - c);  // ascending eigenvalue order
    Eigen::Index arg;
    v.cwiseAbs().maxCoeff(&arg);
    if (v[arg] < 0.0) v = -v;
    basis.col(c) = v;
  }
  return centred * basis;
}

std::vector<long long> kmeans_domains(const Matrix& expression, int k, std::uint64_t seed,
                                      const KMeansOptions& options) {
  const auto n = expression.rows();
  if (k < 2) throw ParameterError("k must be at least 2");
  if (k > n) throw ParameterError("k (" + std::to_string(k) + ") exceeds the number of spots (" + std::to_string(n) + ")");
  const Matrix x = expression.cols() > options.pca_components ? pca_project(expression, options.pca_components)
                                                               : expression;

  Rng rng(seed);
  Matrix centres(k, x.cols());
  std::vector<double> d2(static_cast<std::size_t>(n), std::numeric_limits<double>::infinity());
  std::size_t first = rng.uniform_index(static_cast<std::uint64_t>(n));
  centres.row(0) = x.row(static_cast<Eigen::Index>(first));
  for (int c = 1; c < k; ++c) {
    double total = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      d2[i] = std::min(d2[i], (x.row(i) - centres.row(c - 1)).squaredNorm());
      total += d2[i];
    }
    Eigen::Index pick = 0;
    if (total > 0.0) {
      double target = rng.uniform_real() * total;
      pick = n - 1;
      for (Eigen::Index i = 0; i < n; ++i) {
        target -= d2[i];
        if (target < 0.0 && d2[i] > 0.0) {
          pick = i;
          break;
        }
      }
    } else {
      pick = static_cast<Eigen::Index>(rng.uniform_index(static_cast<std::uint64_t>(n)));
    }
    centres.row(c) = x.row(pick);
  }

  std::vector<long long> labels(static_cast<std::size_t>(n), 0);
  for (int iter = 0; iter < options.max_iterations; ++iter) {
    for (Eigen::Index i = 0; i < n; ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (int c = 0; c < k; ++c) {
        const double d = (x.row(i) - centres.row(c)).squaredNorm();
        if (d < best) {
          best = d;
          labels[i] = c;
        }
      }
    }
    Matrix next = Matrix::Zero(k, x.cols());
    std::vector<double> counts(static_cast<std::size_t>(k), 0.0);
    for (Eigen::Index i = 0; i < n; ++i) {
      next.row(labels[i]) += x.row(i);
      counts[labels[i]] += 1.0;
    }
    for (int c = 0; c < k; ++c) {
      if (counts[c] > 0.0) {
        next.row(c) /= counts[c];
        continue;
      }
      // Empty cluster: re-seed at the point farthest from its centre.
      Eigen::Index far = 0;
      double far_d = -1.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        const double d = (x.row(i) - centres.row(labels[i])).squaredNorm();
        if (d > far_d) {
          far_d = d;
          far = i;
        }
      }
      next.row(c) = x.row(far);
      labels[far] = c;
    }
    const double shift = (next - centres).rowwise().norm().maxCoeff();
    centres = std::move(next);
    if (shift <= options.tolerance) break;
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (int c = 0; c < k; ++c) {
      const double d = (x.row(i) - centres.row(c)).squaredNorm();
      if (d < best) {
        best = d;
        labels[i] = c;
      }
    }
  }
  return labels;
}

}  // namespace histosge
