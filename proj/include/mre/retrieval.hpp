#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mre/types.hpp"

namespace mre {

inline const std::vector<std::size_t> kDefaultHubnessKs = {3, 5, 7, 11, 17};

struct Neighbor {
  std::size_t index;  // position in the index
  std::string id;
  double distance;
};

// Exact brute-force index over embeddings. Neighbour ties are broken by the
// lower insertion position, which is the item's id order within the index.
class EmbeddingIndex {
 public:
  // With `require_unit_norm` every row must have norm 1 +- 1e-6; tests may
  // disable this to use raw coordinates.
  EmbeddingIndex(std::vector<std::string> ids, Matrix vectors, bool require_unit_norm = true);

  std::size_t size() const { return ids_.size(); }
  std::size_t dim() const { return static_cast<std::size_t>(vectors_.cols()); }
  const std::vector<std::string>& ids() const { return ids_; }
  const Matrix& vectors() const { return vectors_; }
  std::size_t position(const std::string& id) const;

  // k nearest indexed items to an external query, ascending by distance.
  std::vector<Neighbor> knn_query(std::span<const double> query, std::size_t k) const;

  // k nearest neighbours of an indexed item, excluding the item itself.
  std::vector<Neighbor> knn_of_item(std::size_t item, std::size_t k) const;

  // For every item, all other items ordered by (distance, position).
  const std::vector<std::vector<std::uint32_t>>& neighbor_order() const { return order_; }

  Matrix distance_matrix() const { return distances_; }

 private:
  std::vector<std::string> ids_;
  Matrix vectors_;
  Matrix distances_;
  std::vector<std::vector<std::uint32_t>> order_;
  bool unit_norm_;
};

struct KOccurrenceProfile {
  std::size_t k = 0;
  std::vector<std::size_t> counts;  // N_k per item, in index order
};

struct HubReport {
  std::size_t k = 0;
  std::string hub_id;
  std::size_t hub_count = 0;
  std::vector<std::string> reverse_queries;
  std::vector<std::string> orphan_ids;
  double skewness = 0.0;
  double hubness_index = 1.0;
};

KOccurrenceProfile k_occurrences(const EmbeddingIndex& index, std::size_t k);

// Population skewness m3 / m2^1.5 of the counts; 0 when the counts are constant.
double hubness_skewness(const KOccurrenceProfile& profile);
double hubness_skewness(std::span<const double> values);

// Mean over ks of exp(-|skewness|); 1 means no hubness.
double hubness_index(const EmbeddingIndex& index,
                     std::span<const std::size_t> ks = kDefaultHubnessKs);

// Pearson correlation of the strict upper triangles of two distance matrices.
double rating_correlation(const Matrix& embedding_dm, const Matrix& rating_dm);

// Pearson correlation of two equally sized samples; throws DegenerateError on
// zero variance.
double pearson(std::span<const double> x, std::span<const double> y);

HubReport hub_report(const EmbeddingIndex& index, std::size_t k);

}  // namespace mre
