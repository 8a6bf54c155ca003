#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "histosge/types.hpp"

namespace histosge {

/// Pearson correlation, Cov(x,y) / (sd(x) sd(y)). nullopt when either
/// vector has zero variance. Throws ContractError on length < 2 or mismatch.
std::optional<double> pcc(std::span<const double> x, std::span<const double> y);

double mse(const Matrix& observed, const Matrix& predicted);
double mae(const Matrix& observed, const Matrix& predicted);

enum class PccAxis { gene, spot };

struct MetricsReport {
  std::vector<std::optional<double>> per_gene_pcc;  // per column (gene axis) or per row (spot axis)
  double mean_pcc = 0.0;                            // over defined entries only
  std::size_t n_undefined = 0;
  double mse = 0.0;
  double mae = 0.0;
  std::size_t n_spots = 0;
  std::size_t n_genes = 0;
  PccAxis axis = PccAxis::gene;
};

/// Throws EvaluationError when no correlation is defined.
MetricsReport evaluate(const Matrix& observed, const Matrix& predicted, PccAxis axis = PccAxis::gene);

/// Human-readable summary, optionally followed by the best-correlated genes.
std::string format_report_table(const MetricsReport& report, const std::vector<std::string>& gene_names,
                                std::size_t top_genes = 0);
/// gene,pcc rows ("NA" for undefined) preceded by the aggregate lines as
/// "# key=value" comments.
std::string format_report_csv(const MetricsReport& report, const std::vector<std::string>& gene_names);
std::string format_report_json(const MetricsReport& report, const std::vector<std::string>& gene_names);

/// Adjusted Rand index from the pair-counting contingency table. Labels are
/// arbitrary integers. 1.0 when the denominator vanishes (both partitions
/// trivial in the same way).
double ari(std::span<const long long> labels_a, std::span<const long long> labels_b);

/// Projection onto the leading principal components (columns centred).
/// Component signs are fixed so the largest-magnitude loading is positive.
Matrix pca_project(const Matrix& x, int n_components);

struct KMeansOptions {
  int max_iterations = 300;
  double tolerance = 1e-4;  // on the largest centre movement
  int pca_components = 50;  // applied when the feature count exceeds it
};

/// Lloyd iterations from k-means++ seeding. Labels are 0..k-1.
std::vector<long long> kmeans_domains(const Matrix& expression, int k, std::uint64_t seed,
                                      const KMeansOptions& options = {});

}  // namespace histosge
