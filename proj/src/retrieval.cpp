#include "mre/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_set>

#include "mre/error.hpp"
#include "mre/ratings.hpp"

namespace mre {

namespace {

template <typename Index>
std::vector<Neighbor> take_k(const std::vector<Index>& order, const std::vector<double>& dist,
                             const std::vector<std::string>& ids, std::size_t k) {
  std::vector<Neighbor> out;
  out.reserve(k);
  for (std::size_t r = 0; r < k; ++r) out.push_back({order[r], ids[order[r]], dist[order[r]]});
  return out;
}

template <typename Index>
void sort_by_distance(std::vector<Index>& order, const std::vector<double>& dist) {
  std::sort(order.begin(), order.end(), [&](Index a, Index b) {
    return dist[a] < dist[b] || (dist[a] == dist[b] && a < b);
  });
}

}  // namespace

EmbeddingIndex::EmbeddingIndex(std::vector<std::string> ids, Matrix vectors, bool require_unit_norm)
    : ids_(std::move(ids)), vectors_(std::move(vectors)), unit_norm_(require_unit_norm) {
  if (static_cast<Eigen::Index>(ids_.size()) != vectors_.rows())
    throw FormatError("index needs one id per vector");
  if (ids_.empty()) throw DomainError("index must not be empty");
  std::unordered_set<std::string> seen;
  for (const auto& id : ids_) {
    if (!seen.insert(id).second) throw FormatError("duplicate id '" + id + "' in index");
  }
  if (unit_norm_) {
    for (Eigen::Index i = 0; i < vectors_.rows(); ++i) {
      if (std::abs(vectors_.row(i).norm() - 1.0) > 1e-6)
        throw DomainError("index vector '" + ids_[i] + "' is not unit norm");
    }
  }
  distances_ = pairwise_l2(vectors_);

  const std::size_t n = size();
  order_.resize(n);
  std::vector<double> dist(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto& o = order_[i];
    o.reserve(n - 1);
    for (std::size_t j = 0; j < n; ++j) {
      dist[j] = distances_(i, j);
      if (j != i) o.push_back(static_cast<std::uint32_t>(j));
    }
    sort_by_distance(o, dist);
  }
}

std::size_t EmbeddingIndex::position(const std::string& id) const {
  auto it = std::find(ids_.begin(), ids_.end(), id);
  if (it == ids_.end()) throw DomainError("unknown id '" + id + "'");
  return static_cast<std::size_t>(it - ids_.begin());
}

std::vector<Neighbor> EmbeddingIndex::knn_query(std::span<const double> query, std::size_t k) const {
  if (query.size() != dim()) throw DomainError("query dimension does not match the index");
  if (k < 1 || k >= size()) throw DomainError("k must satisfy 1 <= k < N");
  Eigen::Map<const Vector> q(query.data(), static_cast<Eigen::Index>(query.size()));
  if (unit_norm_ && std::abs(q.norm() - 1.0) > 1e-6) throw DomainError("query is not unit norm");
  std::vector<double> dist(size());
  for (std::size_t i = 0; i < size(); ++i) dist[i] = (vectors_.row(i).transpose() - q).norm();
  std::vector<std::size_t> order(size());
  std::iota(order.begin(), order.end(), 0);
  sort_by_distance(order, dist);
  return take_k(order, dist, ids_, k);
}

std::vector<Neighbor> EmbeddingIndex::knn_of_item(std::size_t item, std::size_t k) const {
  if (item >= size()) throw DomainError("item position out of range");
  if (k < 1 || k >= size()) throw DomainError("k must satisfy 1 <= k < N");
  std::vector<double> dist(size());
  for (std::size_t j = 0; j < size(); ++j) dist[j] = distances_(item, j);
  return take_k(neighbor_order()[item], dist, ids_, k);
}

KOccurrenceProfile k_occurrences(const EmbeddingIndex& index, std::size_t k) {
  if (k < 1 || k >= index.size()) throw DomainError("k must satisfy 1 <= k < N");
  KOccurrenceProfile p{k, std::vector<std::size_t>(index.size(), 0)};
  const auto& order = index.neighbor_order();
  for (std::size_t i = 0; i < index.size(); ++i) {
    for (std::size_t r = 0; r < k; ++r) ++p.counts[order[i][r]];
  }
  return p;
}

double hubness_skewness(std::span<const double> values) {
  if (values.size() < 3) throw DomainError("skewness needs at least 3 values");
  const double n = static_cast<double>(values.size());
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  double m2 = 0.0, m3 = 0.0;
  for (double v : values) {
    const double d = v - mean;
    m2 += d * d;
    m3 += d * d * d;
  }
  m2 /= n;
  m3 /= n;
  if (m2 <= 0.0) return 0.0;
  return m3 / std::pow(m2, 1.5);
}

double hubness_skewness(const KOccurrenceProfile& profile) {
  std::vector<double> v(profile.counts.begin(), profile.counts.end());
  return hubness_skewness(v);
}

double hubness_index(const EmbeddingIndex& index, std::span<const std::size_t> ks) {
  if (ks.empty()) throw DomainError("hubness index needs at least one k");
  double sum = 0.0;
  for (std::size_t k : ks) sum += std::exp(-std::abs(hubness_skewness(k_occurrences(index, k))));
  return sum / static_cast<double>(ks.size());
}

double pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw DomainError("pearson: samples differ in length");
  if (x.size() < 2) throw DomainError("pearson: need at least 2 samples");
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx, dy = y[i] - my;
    sxx += dx * dx;
    syy += dy * dy;
    sxy += dx * dy;
  }
  if (sxx <= 0.0 || syy <= 0.0) throw DegenerateError("pearson: zero-variance sample");
  return sxy / std::sqrt(sxx * syy);
}

double rating_correlation(const Matrix& embedding_dm, const Matrix& rating_dm) {
  if (embedding_dm.rows() != embedding_dm.cols() || rating_dm.rows() != rating_dm.cols() ||
      embedding_dm.rows() != rating_dm.rows())
    throw DomainError("rating_correlation: matrices must be square and equally sized");
  const Eigen::Index n = embedding_dm.rows();
  if (n < 3) throw DomainError("rating_correlation: need at least 3 items");
  std::vector<double> a, b;
  a.reserve(static_cast<std::size_t>(n * (n - 1) / 2));
  b.reserve(a.capacity());
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      a.push_back(embedding_dm(i, j));
      b.push_back(rating_dm(i, j));
    }
  }
  try {
    return pearson(a, b);
  } catch (const DegenerateError&) {
    throw DegenerateError("rating_correlation: a distance triangle is constant");
  }
}

HubReport hub_report(const EmbeddingIndex& index, std::size_t k) {
  const KOccurrenceProfile p = k_occurrences(index, k);
  HubReport r;
  r.k = k;
  const auto hub = static_cast<std::size_t>(std::max_element(p.counts.begin(), p.counts.end()) -
                                            p.counts.begin());  // first max = lowest position
  r.hub_id = index.ids()[hub];
  r.hub_count = p.counts[hub];
  const auto& order = index.neighbor_order();
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (std::find(order[i].begin(), order[i].begin() + static_cast<std::ptrdiff_t>(k), hub) !=
        order[i].begin() + static_cast<std::ptrdiff_t>(k))
      r.reverse_queries.push_back(index.ids()[i]);
    if (p.counts[i] == 0) r.orphan_ids.push_back(index.ids()[i]);
  }
  r.skewness = index.size() >= 3 ? hubness_skewness(p) : 0.0;
  r.hubness_index = std::exp(-std::abs(r.skewness));
  return r;
}

}  // namespace mre
