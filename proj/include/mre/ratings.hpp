#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "mre/types.hpp"

namespace mre {

// Ordered list of rated characteristics with a value range for each.
class CharacteristicSchema {
 public:
  struct Range {
    double min;
    double max;
  };

  CharacteristicSchema(std::vector<std::string> names, std::vector<Range> ranges);

  // The nine LIDC characteristics, each ranged [1, 6] so that calcification
  // scores of 6 are accepted.
  static const CharacteristicSchema& lidc();

  std::size_t size() const { return names_.size(); }
  const std::vector<std::string>& names() const { return names_; }
  const Range& range(std::size_t i) const { return ranges_.at(i); }
  const std::vector<Range>& ranges() const { return ranges_; }
  std::size_t index_of(std::string_view name) const;

 private:
  std::vector<std::string> names_;
  std::vector<Range> ranges_;
};

inline constexpr std::size_t kMalignancyIndex = 8;

using RatingVector = std::vector<double>;

// The ratings attached to a single patch, one per annotation.
class RatingSet {
 public:
  RatingSet() = default;
  explicit RatingSet(std::vector<RatingVector> ratings,
                     std::optional<std::vector<double>> weights = std::nullopt);

  std::size_t size() const { return ratings_.size(); }
  std::size_t dim() const { return ratings_.empty() ? 0 : ratings_.front().size(); }
  bool empty() const { return ratings_.empty(); }
  const RatingVector& operator[](std::size_t i) const { return ratings_[i]; }
  const std::vector<RatingVector>& ratings() const { return ratings_; }
  const std::optional<std::vector<double>>& weights() const { return weights_; }

 private:
  std::vector<RatingVector> ratings_;
  std::optional<std::vector<double>> weights_;
};

enum class MalignancyClass { benign, unknown, malignant };

std::string_view to_string(MalignancyClass c);
MalignancyClass malignancy_class_from_string(std::string_view s);

// Throws SchemaError if the vector does not fit the schema (dimension or range).
void validate_rating(const RatingVector& v, const CharacteristicSchema& schema);

double rating_l2(std::span<const double> a, std::span<const double> b);

// Mean over each set of the distance to its nearest neighbour in the other set,
// halved and summed over both directions. Symmetric but not a metric.
double set_distance(const RatingSet& a, const RatingSet& b);

// Pairwise set_distance over a collection. With `parallel` the rows are
// split across threads; the result is bit-identical to the sequential one.
Matrix set_distance_matrix(std::span<const RatingSet> sets, bool parallel = false);

// Unweighted per-characteristic mean; weights are intentionally ignored.
RatingVector mean_rating(const RatingSet& set);

MalignancyClass malignancy_class(double mean_malignancy,
                                 CharacteristicSchema::Range range = {1.0, 6.0});

// Throws DomainError unless `m` is square, symmetric, zero-diagonal and nonnegative.
void validate_distance_matrix(const Matrix& m);

// Euclidean distances between the rows of `points`.
Matrix pairwise_l2(const Matrix& points);

}  // namespace mre
