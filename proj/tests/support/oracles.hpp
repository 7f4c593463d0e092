#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <utility>
#include <vector>

#include "mre/random.hpp"
#include "mre/ratings.hpp"
#include "mre/types.hpp"

namespace mre::testing {

// Central finite differences of f at x, one entry at a time.
inline Matrix numeric_gradient(const std::function<double(const Matrix&)>& f, Matrix x, double h = 1e-5) {
  Matrix g(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double saved = x.data()[i];
    x.data()[i] = saved + h;
    const double up = f(x);
    x.data()[i] = saved - h;
    const double down = f(x);
    x.data()[i] = saved;
    g.data()[i] = (up - down) / (2.0 * h);
  }
  return g;
}

// Largest entrywise |a - b| / max(|a|, |b|, floor). The floor keeps entries
// that are zero in both (excluded diagonals) from dividing by zero.
inline double max_relative_error(const Matrix& a, const Matrix& b, double floor = 1e-6) {
  double worst = 0.0;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    const double x = a.data()[i], y = b.data()[i];
    worst = std::max(worst, std::abs(x - y) / std::max({std::abs(x), std::abs(y), floor}));
  }
  return worst;
}

// Every |A| x |B| pair distance tabulated, then row and column minima.
inline double brute_force_set_distance(const std::vector<RatingVector>& a, const std::vector<RatingVector>& b) {
  std::vector<std::vector<double>> table(a.size(), std::vector<double>(b.size()));
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t j = 0; j < b.size(); ++j) {
      double s = 0.0;
      for (std::size_t c = 0; c < a[i].size(); ++c) s += (a[i][c] - b[j][c]) * (a[i][c] - b[j][c]);
      table[i][j] = std::sqrt(s);
    }
  }
  double ab = 0.0, ba = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) ab += *std::min_element(table[i].begin(), table[i].end());
  for (std::size_t j = 0; j < b.size(); ++j) {
    double m = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < a.size(); ++i) m = std::min(m, table[i][j]);
    ba += m;
  }
  return ab / (2.0 * static_cast<double>(a.size())) + ba / (2.0 * static_cast<double>(b.size()));
}

// k nearest other rows by a full stable sort of (distance, position).
inline std::vector<std::size_t> brute_force_knn(const Matrix& points, std::size_t item, std::size_t k) {
  std::vector<std::pair<double, std::size_t>> all;
  for (Eigen::Index j = 0; j < points.rows(); ++j) {
    if (static_cast<std::size_t>(j) == item) continue;
    all.emplace_back((points.row(static_cast<Eigen::Index>(item)) - points.row(j)).norm(), static_cast<std::size_t>(j));
  }
  std::sort(all.begin(), all.end());
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < k; ++i) out.push_back(all[i].second);
  return out;
}

inline std::vector<std::size_t> brute_force_k_occurrences(const Matrix& points, std::size_t k) {
  std::vector<std::size_t> counts(static_cast<std::size_t>(points.rows()), 0);
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    for (auto j : brute_force_knn(points, static_cast<std::size_t>(i), k)) ++counts[j];
  }
  return counts;
}

// Population skewness written out from the moment definitions.
inline double direct_skewness(const std::vector<double>& x) {
  const double n = static_cast<double>(x.size());
  const double mean = std::accumulate(x.begin(), x.end(), 0.0) / n;
  double m2 = 0.0, m3 = 0.0;
  for (double v : x) {
    m2 += (v - mean) * (v - mean);
    m3 += (v - mean) * (v - mean) * (v - mean);
  }
  m2 /= n;
  m3 /= n;
  return m2 == 0.0 ? 0.0 : m3 / std::pow(m2, 1.5);
}

inline Matrix random_matrix(Rng& rng, Eigen::Index rows, Eigen::Index cols, double lo = -1.0, double hi = 1.0) {
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(lo, hi);
  return m;
}

// Symmetric zero-diagonal distances between random points.
inline Matrix random_distance_matrix(Rng& rng, Eigen::Index b, Eigen::Index dim = 4, double scale = 1.0) {
  return pairwise_l2(random_matrix(rng, b, dim, -scale, scale));
}

inline Matrix unit_rows(Matrix m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) m.row(i).normalize();
  return m;
}

inline RatingSet random_rating_set(Rng& rng, std::size_t size, std::size_t dim = 9) {
  std::vector<RatingVector> rows(size, RatingVector(dim));
  for (auto& r : rows) {
    for (auto& v : r) v = rng.uniform(1.0, 6.0);
  }
  return RatingSet(std::move(rows));
}

}  // namespace mre::testing
