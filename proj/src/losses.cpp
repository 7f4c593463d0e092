#include "mre/losses.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "mre/error.hpp"

namespace mre {

namespace {

void require_same_shape(const Matrix& a, const Matrix& b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw DomainError(std::string(what) + ": shape mismatch (" + std::to_string(a.rows()) + "x" +
                      std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                      std::to_string(b.cols()) + ")");
}

void require_square_pair(const Matrix& p, const Matrix& t, const char* what) {
  if (p.rows() != p.cols() || t.rows() != t.cols())
    throw DomainError(std::string(what) + ": distance matrices must be square");
  require_same_shape(p, t, what);
}

// Off-diagonal entries of row b, in column order.
Vector off_diagonal_row(const Matrix& m, Eigen::Index b) {
  const Eigen::Index n = m.cols();
  Vector v(n - 1);
  for (Eigen::Index i = 0, k = 0; i < n; ++i) {
    if (i != b) v(k++) = m(b, i);
  }
  return v;
}

constexpr double kDegenerateVariance = 1e-24;

}  // namespace

double log_cosh(double x) {
  const double a = std::abs(x);
  return a + std::log1p(std::exp(-2.0 * a)) - std::numbers::ln2;
}

LossResult logcosh_regression(const Matrix& pred, const Matrix& target) {
  require_same_shape(pred, target, "logcosh_regression");
  const double count = static_cast<double>(pred.size());
  if (count == 0) throw DomainError("logcosh_regression: empty input");
  LossResult out;
  out.gradient.resize(pred.rows(), pred.cols());
  double sum = 0.0;
  for (Eigen::Index i = 0; i < pred.rows(); ++i) {
    for (Eigen::Index j = 0; j < pred.cols(); ++j) {
      const double r = pred(i, j) - target(i, j);
      sum += log_cosh(r);
      out.gradient(i, j) = std::tanh(r) / count;
    }
  }
  out.value = sum / count;
  return out;
}

LossResult dm_logcosh(const Matrix& p, const Matrix& t) {
  require_square_pair(p, t, "dm_logcosh");
  const Eigen::Index n = p.rows();
  if (n < 2) throw DomainError("dm_logcosh: batch needs at least 2 items");
  const double count = static_cast<double>(n * (n - 1));
  LossResult out;
  out.gradient = Matrix::Zero(n, n);
  double sum = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      if (i == j) continue;
      const double r = p(i, j) - t(i, j);
      sum += log_cosh(r);
      out.gradient(i, j) = std::tanh(r) / count;
    }
  }
  out.value = sum / count;
  return out;
}

LossResult dm_pearson(const Matrix& p, const Matrix& t) {
  require_square_pair(p, t, "dm_pearson");
  const Eigen::Index n = p.rows();
  if (n < 3) throw DomainError("dm_pearson: batch needs at least 3 items");

  LossResult out;
  out.gradient = Matrix::Zero(n, n);
  double corr_sum = 0.0;
  const double inv_b = 1.0 / static_cast<double>(n);
  for (Eigen::Index b = 0; b < n; ++b) {
    Vector x = off_diagonal_row(t, b);
    Vector y = off_diagonal_row(p, b);
    x.array() -= x.mean();
    y.array() -= y.mean();
    const double sxx = x.squaredNorm();
    const double syy = y.squaredNorm();
    if (sxx <= kDegenerateVariance)
      throw DegenerateError("dm_pearson: target row " + std::to_string(b) + " is constant", b);
    if (syy <= kDegenerateVariance)
      throw DegenerateError("dm_pearson: predicted row " + std::to_string(b) + " is constant", b);
    const double sxy = x.dot(y);
    const double denom = std::sqrt(sxx * syy);
    const double r = sxy / denom;
    corr_sum += r;
    // d r / d y_i = x_i / sqrt(sxx syy) - r y_i / syy   (centering terms cancel)
    for (Eigen::Index i = 0, k = 0; i < n; ++i) {
      if (i == b) continue;
      out.gradient(b, i) = -inv_b * (x(k) / denom - r * y(k) / syy);
      ++k;
    }
  }
  out.value = -corr_sum * inv_b;
  return out;
}

Matrix row_softmax(const Matrix& m, SoftmaxSign sign) {
  const double s = sign == SoftmaxSign::positive ? 1.0 : -1.0;
  Matrix out(m.rows(), m.cols());
  for (Eigen::Index b = 0; b < m.rows(); ++b) {
    const double mx = (s * m.row(b)).maxCoeff();
    double z = 0.0;
    for (Eigen::Index i = 0; i < m.cols(); ++i) {
      out(b, i) = std::exp(s * m(b, i) - mx);
      z += out(b, i);
    }
    out.row(b) /= z;
  }
  return out;
}

namespace {

// Back-propagate a gradient on softmax outputs to the softmax inputs, row-wise.
Matrix softmax_backward(const Matrix& soft, const Matrix& grad_soft, SoftmaxSign sign) {
  const double s = sign == SoftmaxSign::positive ? 1.0 : -1.0;
  Matrix g(soft.rows(), soft.cols());
  for (Eigen::Index b = 0; b < soft.rows(); ++b) {
    const double dot = soft.row(b).dot(grad_soft.row(b));
    for (Eigen::Index i = 0; i < soft.cols(); ++i)
      g(b, i) = s * soft(b, i) * (grad_soft(b, i) - dot);
  }
  return g;
}

}  // namespace

LossResult dm_ranked_pearson(const Matrix& p, const Matrix& t, SoftmaxSign sign) {
  require_square_pair(p, t, "dm_ranked_pearson");
  const Matrix sp = row_softmax(p, sign);
  const Matrix st = row_softmax(t, sign);
  LossResult inner = dm_pearson(sp, st);
  return {inner.value, softmax_backward(sp, inner.gradient, sign)};
}

LossResult dm_kl(const Matrix& p, const Matrix& t, SoftmaxSign sign) {
  require_square_pair(p, t, "dm_kl");
  if (p.rows() < 2) throw DomainError("dm_kl: batch needs at least 2 items");
  const double s = sign == SoftmaxSign::positive ? 1.0 : -1.0;
  const Matrix sp = row_softmax(p, sign);
  const Matrix st = row_softmax(t, sign);
  double value = 0.0;
  for (Eigen::Index b = 0; b < p.rows(); ++b) {
    // Log-softmax computed directly to stay finite when probabilities underflow.
    const double mp = (s * p.row(b)).maxCoeff();
    const double mt = (s * t.row(b)).maxCoeff();
    const double lse_p = mp + std::log((s * p.row(b).array() - mp).exp().sum());
    const double lse_t = mt + std::log((s * t.row(b).array() - mt).exp().sum());
    for (Eigen::Index i = 0; i < p.cols(); ++i) {
      const double log_t = s * t(b, i) - lse_t;
      const double log_p = s * p(b, i) - lse_p;
      value += st(b, i) * (log_t - log_p);
    }
  }
  // d/dP of -sum_i T~ log P~ is P~ - T~ per row (rows of T~ sum to one).
  return {value, s * (sp - st)};
}

PairLossResult siamese_distance_loss(const Matrix& a, const Matrix& b, const Vector& d_true) {
  require_same_shape(a, b, "siamese_distance_loss");
  const Eigen::Index n = a.rows();
  if (n == 0 || d_true.size() != n)
    throw DomainError("siamese_distance_loss: need one target distance per pair");
  PairLossResult out;
  out.grad_a = Matrix::Zero(n, a.cols());
  out.grad_b = Matrix::Zero(n, a.cols());
  double sum = 0.0;
  const double inv_n = 1.0 / static_cast<double>(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (a.row(i).norm() < 1e-12 || b.row(i).norm() < 1e-12)
      throw DomainError("siamese_distance_loss: zero embedding at pair " + std::to_string(i) +
                        " violates unit normalization");
    if (!(d_true(i) >= 0.0)) throw DomainError("siamese_distance_loss: negative target distance");
    const auto diff = (a.row(i) - b.row(i)).eval();
    const double dist = diff.norm();
    const double r = dist - d_true(i);
    sum += log_cosh(r);
    if (dist > 0.0) {
      const auto g = (inv_n * std::tanh(r) / dist * diff).eval();
      out.grad_a.row(i) = g;
      out.grad_b.row(i) = -g;
    }
  }
  out.value = sum * inv_n;
  return out;
}

CombinedLoss multi_task_combine(const LossResult& reg, const LossResult& sim, double w_reg,
                                double w_sim) {
  if (!(w_reg >= 0.0) || !(w_sim >= 0.0))
    throw ConfigError("multi-task weights must be nonnegative");
  return {w_reg * reg.value + w_sim * sim.value, w_reg * reg.gradient, w_sim * sim.gradient};
}

}  // namespace mre
