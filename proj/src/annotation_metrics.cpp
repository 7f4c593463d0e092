#include "mre/annotation_metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <ostream>

#include "mre/error.hpp"
#include "mre/retrieval.hpp"

namespace mre {

namespace {

void require_aligned(std::span<const RatingVector> pred, std::span<const RatingSet> truth) {
  if (pred.size() != truth.size())
    throw DomainError("predictions and ground truth differ in length (" + std::to_string(pred.size()) +
                      " vs " + std::to_string(truth.size()) + ")");
  if (pred.empty()) throw DomainError("no items to evaluate");
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred[i].size() != truth[i].dim()) throw SchemaError("prediction dimension mismatch");
  }
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

}  // namespace

std::vector<double> per_param_rmse(std::span<const RatingVector> pred,
                                   std::span<const RatingSet> truth) {
  require_aligned(pred, truth);
  const std::size_t d = pred.front().size();
  std::vector<double> sse(d, 0.0);
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const RatingVector m = mean_rating(truth[i]);
    for (std::size_t c = 0; c < d; ++c) sse[c] += (pred[i][c] - m[c]) * (pred[i][c] - m[c]);
  }
  for (double& v : sse) v = std::sqrt(v / static_cast<double>(pred.size()));
  return sse;
}

std::vector<std::optional<double>> per_param_correlation(std::span<const RatingVector> pred,
                                                         std::span<const RatingSet> truth) {
  require_aligned(pred, truth);
  const std::size_t d = pred.front().size();
  std::vector<std::optional<double>> out(d);
  if (pred.size() < 2) return out;
  std::vector<RatingVector> means;
  for (const auto& s : truth) means.push_back(mean_rating(s));
  for (std::size_t c = 0; c < d; ++c) {
    std::vector<double> x, y;
    for (std::size_t i = 0; i < pred.size(); ++i) {
      x.push_back(pred[i][c]);
      y.push_back(means[i][c]);
    }
    try {
      out[c] = pearson(x, y);
    } catch (const DegenerateError&) {
    }
  }
  return out;
}

std::optional<double> mahalanobis_to_raters(const RatingVector& pred, const RatingSet& raters,
                                            double ridge) {
  if (raters.size() < kMinRatersForSpread) return std::nullopt;
  if (pred.size() != raters.dim()) throw SchemaError("prediction dimension mismatch");
  if (!(ridge >= 0.0)) throw ConfigError("ridge must be nonnegative");
  const auto d = static_cast<Eigen::Index>(pred.size());
  const auto n = static_cast<double>(raters.size());
  Vector mu = Vector::Zero(d);
  for (const auto& r : raters.ratings()) mu += Eigen::Map<const Vector>(r.data(), d);
  mu /= n;
  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(d, d);
  for (const auto& r : raters.ratings()) {
    const Vector c = Eigen::Map<const Vector>(r.data(), d) - mu;
    cov += c * c.transpose();
  }
  cov /= n;
  cov.diagonal().array() += ridge;
  const Vector diff = Eigen::Map<const Vector>(pred.data(), d) - mu;
  Eigen::FullPivLU<Eigen::MatrixXd> lu(cov);
  if (!lu.isInvertible()) {
    if (diff.norm() == 0.0) return 0.0;
    throw DegenerateError("rater covariance is singular; use a positive ridge");
  }
  const double q = diff.dot(lu.solve(diff));
  return std::sqrt(std::max(0.0, q));
}

double param_entropy(std::span<const RatingSet> dataset, std::size_t characteristic,
                     const CharacteristicSchema& schema) {
  if (dataset.empty()) throw DomainError("entropy of an empty dataset");
  const auto& range = schema.range(characteristic);
  const long lo = std::lround(std::ceil(range.min));
  const long hi = std::lround(std::floor(range.max));
  const long levels = hi - lo + 1;
  if (levels < 2) return 0.0;
  std::map<long, double> hist;
  double total = 0.0;
  for (const auto& set : dataset) {
    for (const auto& r : set.ratings()) {
      const long v = std::clamp(std::lround(r.at(characteristic)), lo, hi);
      hist[v] += 1.0;
      total += 1.0;
    }
  }
  double h = 0.0;
  for (const auto& [level, count] : hist) {
    const double p = count / total;
    h -= p * std::log(p);
  }
  return h / std::log(static_cast<double>(levels));
}

std::vector<double> inter_observer_rmse(std::span<const RatingSet> truth) {
  std::vector<double> acc;
  std::size_t qualifying = 0;
  for (const auto& set : truth) {
    if (set.size() < kMinRatersForSpread) continue;
    if (acc.empty()) acc.assign(set.dim(), 0.0);
    const RatingVector m = mean_rating(set);
    for (std::size_t c = 0; c < m.size(); ++c) {
      double var = 0.0;
      for (const auto& r : set.ratings()) var += (r[c] - m[c]) * (r[c] - m[c]);
      acc[c] += var / static_cast<double>(set.size());
    }
    ++qualifying;
  }
  if (qualifying == 0) throw DomainError("no item has at least 4 ratings");
  for (double& v : acc) v = std::sqrt(v / static_cast<double>(qualifying));
  return acc;
}

RegressionReport regression_report(std::span<const RatingVector> pred,
                                   std::span<const RatingSet> truth,
                                   const CharacteristicSchema& schema, double ridge) {
  const auto rmse = per_param_rmse(pred, truth);
  const auto corr = per_param_correlation(pred, truth);
  std::optional<std::vector<double>> inter;
  try {
    inter = inter_observer_rmse(truth);
  } catch (const DomainError&) {
  }
  RegressionReport report;
  report.ridge = ridge;
  for (std::size_t c = 0; c < schema.size(); ++c) {
    RegressionRow row;
    row.characteristic = schema.names()[c];
    row.rmse = rmse.at(c);
    row.correlation = corr.at(c);
    row.entropy = param_entropy(truth, c, schema);
    if (inter) row.inter_observer_rmse = (*inter)[c];
    report.rows.push_back(row);
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (auto m = mahalanobis_to_raters(pred[i], truth[i], ridge)) {
      sum += *m;
      ++report.mahalanobis_items;
    }
  }
  if (report.mahalanobis_items) report.mahalanobis = sum / static_cast<double>(report.mahalanobis_items);
  return report;
}

void RegressionReport::write_csv(std::ostream& os) const {
  os << "parameter,rmse,inter_observer_rmse,correlation,entropy,mahalanobis,mahalanobis_items,ridge\n";
  for (const auto& r : rows) {
    os << r.characteristic << ',' << fmt(r.rmse) << ','
       << (r.inter_observer_rmse ? fmt(*r.inter_observer_rmse) : "NA") << ','
       << (r.correlation ? fmt(*r.correlation) : "NA") << ',' << fmt(r.entropy) << ",,,\n";
  }
  os << "Overall,,,,," << (mahalanobis ? fmt(*mahalanobis) : "NA") << ',' << mahalanobis_items << ','
     << ridge << '\n';
}

}  // namespace mre
