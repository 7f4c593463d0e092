#pragma once

#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "mre/ratings.hpp"

namespace mre {

inline constexpr double kDefaultMahalanobisRidge = 1e-3;
inline constexpr std::size_t kMinRatersForSpread = 4;

struct RegressionRow {
  std::string characteristic;
  double rmse = 0.0;
  std::optional<double> correlation;
  double entropy = 0.0;
  std::optional<double> inter_observer_rmse;
};

struct RegressionReport {
  std::vector<RegressionRow> rows;  // one per schema characteristic
  std::optional<double> mahalanobis;  // mean over items with enough raters
  std::size_t mahalanobis_items = 0;
  double ridge = kDefaultMahalanobisRidge;

  // Columns: parameter, rmse, inter_observer_rmse, correlation, entropy, then
  // a final "Overall" row carrying the Mahalanobis mean, item count and ridge.
  void write_csv(std::ostream& os) const;
};

// RMSE per characteristic against each set's mean rating.
std::vector<double> per_param_rmse(std::span<const RatingVector> pred,
                                   std::span<const RatingSet> truth);

// Pearson per characteristic; empty where either side has zero variance.
std::vector<std::optional<double>> per_param_correlation(std::span<const RatingVector> pred,
                                                         std::span<const RatingSet> truth);

// sqrt((p - mu)^T (Sigma + ridge I)^-1 (p - mu)) with the raters' mean and
// population covariance. Empty when fewer than 4 raters (item is skipped).
std::optional<double> mahalanobis_to_raters(const RatingVector& pred, const RatingSet& raters,
                                            double ridge = kDefaultMahalanobisRidge);

// Shannon entropy of the rounded score histogram of one characteristic over
// every rating in the dataset, normalized by log(#levels).
double param_entropy(std::span<const RatingSet> dataset, std::size_t characteristic,
                     const CharacteristicSchema& schema = CharacteristicSchema::lidc());

// Per characteristic: sqrt of the mean within-item population variance over
// items with at least 4 ratings.
std::vector<double> inter_observer_rmse(std::span<const RatingSet> truth);

RegressionReport regression_report(std::span<const RatingVector> pred,
                                   std::span<const RatingSet> truth,
                                   const CharacteristicSchema& schema = CharacteristicSchema::lidc(),
                                   double ridge = kDefaultMahalanobisRidge);

}  // namespace mre
