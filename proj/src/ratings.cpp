#include "mre/ratings.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <thread>

#include "mre/error.hpp"

namespace mre {

CharacteristicSchema::CharacteristicSchema(std::vector<std::string> names,
                                           std::vector<Range> ranges)
    : names_(std::move(names)), ranges_(std::move(ranges)) {
  if (names_.empty()) throw SchemaError("schema needs at least one characteristic");
  if (names_.size() != ranges_.size())
    throw SchemaError("schema names and ranges differ in length");
  for (std::size_t i = 0; i < ranges_.size(); ++i) {
    if (!(ranges_[i].min < ranges_[i].max))
      throw SchemaError("empty value range for characteristic '" + names_[i] + "'");
  }
}

const CharacteristicSchema& CharacteristicSchema::lidc() {
  static const CharacteristicSchema schema(
      {"Subtlety", "Internal Structure", "Calcification", "Sphericity", "Margin",
       "Lobulation", "Spiculation", "Texture", "Malignancy"},
      std::vector<Range>(9, Range{1.0, 6.0}));
  return schema;
}

std::size_t CharacteristicSchema::index_of(std::string_view name) const {
  auto it = std::find(names_.begin(), names_.end(), name);
  if (it == names_.end()) throw SchemaError("unknown characteristic '" + std::string(name) + "'");
  return static_cast<std::size_t>(it - names_.begin());
}

RatingSet::RatingSet(std::vector<RatingVector> ratings,
                     std::optional<std::vector<double>> weights)
    : ratings_(std::move(ratings)), weights_(std::move(weights)) {
  if (ratings_.empty()) throw DomainError("rating set must not be empty");
  const std::size_t d = ratings_.front().size();
  if (d == 0) throw SchemaError("rating vectors must not be empty");
  for (const auto& r : ratings_) {
    if (r.size() != d) throw SchemaError("rating vectors in a set differ in dimension");
  }
  if (weights_) {
    if (weights_->size() != ratings_.size())
      throw DomainError("rating weights must match the number of ratings");
    for (double w : *weights_) {
      if (!(w >= 0.0)) throw DomainError("rating weights must be nonnegative");
    }
  }
}

std::string_view to_string(MalignancyClass c) {
  switch (c) {
    case MalignancyClass::benign: return "benign";
    case MalignancyClass::unknown: return "unknown";
    case MalignancyClass::malignant: return "malignant";
  }
  return "unknown";
}

MalignancyClass malignancy_class_from_string(std::string_view s) {
  if (s == "benign") return MalignancyClass::benign;
  if (s == "unknown") return MalignancyClass::unknown;
  if (s == "malignant") return MalignancyClass::malignant;
  throw FormatError("invalid malignancy class '" + std::string(s) + "'");
}

void validate_rating(const RatingVector& v, const CharacteristicSchema& schema) {
  if (v.size() != schema.size())
    throw SchemaError("rating has " + std::to_string(v.size()) + " values, schema expects " +
                      std::to_string(schema.size()));
  for (std::size_t i = 0; i < v.size(); ++i) {
    const auto& r = schema.range(i);
    if (!(v[i] >= r.min && v[i] <= r.max))
      throw SchemaError("rating value " + std::to_string(v[i]) + " for '" + schema.names()[i] +
                        "' is outside [" + std::to_string(r.min) + ", " + std::to_string(r.max) + "]");
  }
}

double rating_l2(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size())
    throw SchemaError("rating dimension mismatch: " + std::to_string(a.size()) + " vs " +
                      std::to_string(b.size()));
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return std::sqrt(s);
}

namespace {

// (1 / 2|from|) * sum over `from` of the distance to the nearest member of `to`.
double directed_half(const RatingSet& from, const RatingSet& to) {
  double sum = 0.0;
  for (const auto& x : from.ratings()) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& y : to.ratings()) best = std::min(best, rating_l2(x, y));
    sum += best;
  }
  return sum / (2.0 * static_cast<double>(from.size()));
}

}  // namespace

double set_distance(const RatingSet& a, const RatingSet& b) {
  if (a.empty() || b.empty()) throw DomainError("set_distance requires nonempty rating sets");
  if (a.dim() != b.dim()) throw SchemaError("rating sets have different dimensions");
  return directed_half(a, b) + directed_half(b, a);
}

Matrix set_distance_matrix(std::span<const RatingSet> sets, bool parallel) {
  const std::size_t n = sets.size();
  if (n < 2) throw DomainError("distance matrix needs at least 2 rating sets");
  const std::size_t dim = sets.front().dim();
  for (const auto& s : sets) {
    if (s.empty()) throw DomainError("set_distance requires nonempty rating sets");
    if (s.dim() != dim) throw SchemaError("rating sets have different dimensions");
  }

  Matrix m = Matrix::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  auto fill_rows = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        if (i != j) m(i, j) = set_distance(sets[i], sets[j]);
      }
    }
  };

  const std::size_t workers =
      parallel ? std::min<std::size_t>(n, std::max(1u, std::thread::hardware_concurrency())) : 1;
  if (workers <= 1) {
    fill_rows(0, n);
  } else {
    std::vector<std::thread> pool;
    const std::size_t chunk = (n + workers - 1) / workers;
    for (std::size_t b = 0; b < n; b += chunk) pool.emplace_back(fill_rows, b, std::min(n, b + chunk));
    for (auto& t : pool) t.join();
  }
  return m;
}

RatingVector mean_rating(const RatingSet& set) {
  if (set.empty()) throw DomainError("mean_rating of an empty rating set");
  RatingVector mean(set.dim(), 0.0);
  for (const auto& r : set.ratings()) {
    for (std::size_t i = 0; i < mean.size(); ++i) mean[i] += r[i];
  }
  for (double& v : mean) v /= static_cast<double>(set.size());
  return mean;
}

MalignancyClass malignancy_class(double mean_malignancy, CharacteristicSchema::Range range) {
  if (!(mean_malignancy >= range.min && mean_malignancy <= range.max))
    throw DomainError("malignancy score " + std::to_string(mean_malignancy) + " out of range");
  if (mean_malignancy <= 2.5) return MalignancyClass::benign;
  if (mean_malignancy >= 3.5) return MalignancyClass::malignant;
  return MalignancyClass::unknown;
}

void validate_distance_matrix(const Matrix& m) {
  if (m.rows() != m.cols()) throw DomainError("distance matrix must be square");
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    if (m(i, i) != 0.0) throw DomainError("distance matrix diagonal must be zero");
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (!(m(i, j) >= 0.0)) throw DomainError("distance matrix entries must be nonnegative");
      if (m(i, j) != m(j, i)) throw DomainError("distance matrix must be symmetric");
    }
  }
}

Matrix pairwise_l2(const Matrix& points) {
  const Eigen::Index n = points.rows();
  Matrix d = Matrix::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double v = (points.row(i) - points.row(j)).norm();
      d(i, j) = v;
      d(j, i) = v;
    }
  }
  return d;
}

}  // namespace mre
