#pragma once

// Independent reference implementations used only by the tests. These are
// written as plain scalar loops over std::vector and share no code with the
// library paths they check.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <set>
#include <tuple>
#include <vector>

namespace oracle {

using Grid = std::vector<std::vector<double>>;

inline double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

/// Two-pass Pearson correlation via sample covariance and sample standard
/// deviations (the n-1 factors cancel).
inline double pearson(const std::vector<double>& x, const std::vector<double>& y) {
  const double mx = mean(x), my = mean(y);
  double cov = 0.0, vx = 0.0, vy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    cov += (x[i] - mx) * (y[i] - my);
    vx += (x[i] - mx) * (x[i] - mx);
    vy += (y[i] - my) * (y[i] - my);
  }
  const double n1 = static_cast<double>(x.size() - 1);
  return (cov / n1) / (std::sqrt(vx / n1) * std::sqrt(vy / n1));
}

inline double mse(const Grid& a, const Grid& b) {
  double s = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t j = 0; j < a[i].size(); ++j) {
      s += (a[i][j] - b[i][j]) * (a[i][j] - b[i][j]);
      ++n;
    }
  }
  return s / static_cast<double>(n);
}

inline double mae(const Grid& a, const Grid& b) {
  double s = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t j = 0; j < a[i].size(); ++j) {
      s += std::fabs(a[i][j] - b[i][j]);
      ++n;
    }
  }
  return s / static_cast<double>(n);
}

/// ARI by enumerating every unordered pair of samples: counts of pairs
/// together in both partitions, in a only, in b only. Uses the pair-count
/// form ARI = (index - expected) / (max - expected).
inline double ari_pairs(const std::vector<long long>& a, const std::vector<long long>& b) {
  const std::size_t n = a.size();
  double both = 0.0, in_a = 0.0, in_b = 0.0, pairs = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const bool sa = a[i] == a[j], sb = b[i] == b[j];
      both += (sa && sb) ? 1.0 : 0.0;
      in_a += sa ? 1.0 : 0.0;
      in_b += sb ? 1.0 : 0.0;
      pairs += 1.0;
    }
  }
  const double expected = in_a * in_b / pairs;
  const double max_index = 0.5 * (in_a + in_b);
  if (max_index - expected == 0.0) return 1.0;
  return (both - expected) / (max_index - expected);
}

/// Scaled dot-product attention with explicit loops.
inline Grid attention(const Grid& q, const Grid& k, const Grid& v) {
  const std::size_t n = q.size(), m = k.size(), d = q[0].size(), dv = v[0].size();
  Grid out(n, std::vector<double>(dv, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> score(m);
    for (std::size_t j = 0; j < m; ++j) {
      double s = 0.0;
      for (std::size_t t = 0; t < d; ++t) s += q[i][t] * k[j][t];
      score[j] = s / std::sqrt(static_cast<double>(d));
    }
    double mx = score[0];
    for (double s : score) mx = std::max(mx, s);
    double z = 0.0;
    for (double& s : score) {
      s = std::exp(s - mx);
      z += s;
    }
    for (std::size_t j = 0; j < m; ++j) {
      for (std::size_t t = 0; t < dv; ++t) out[i][t] += score[j] / z * v[j][t];
    }
  }
  return out;
}

/// Every candidate from every measured spot and translation, rounded, then
/// deduplicated by scanning all previously kept points (O(n^2)).
struct Candidate {
  long long x, y;
};

inline std::vector<Candidate> brute_force_upsample(const std::vector<Candidate>& measured,
                                                   const std::vector<std::pair<double, double>>& polar, long long width,
                                                   long long height) {
  std::vector<Candidate> kept = measured;
  std::vector<Candidate> out;
  for (const auto& m : measured) {
    for (const auto& [r, theta] : polar) {
      const long long x = std::llround(static_cast<double>(m.x) + r * std::cos(theta));
      const long long y = std::llround(static_cast<double>(m.y) + r * std::sin(theta));
      if (x < 0 || y < 0 || x >= width || y >= height) continue;
      bool clash = false;
      for (const auto& k : kept) {
        if (std::max(std::llabs(k.x - x), std::llabs(k.y - y)) <= 1) {
          clash = true;
          break;
        }
      }
      if (clash) continue;
      kept.push_back({x, y});
      out.push_back({x, y});
    }
  }
  return out;
}

}  // namespace oracle
