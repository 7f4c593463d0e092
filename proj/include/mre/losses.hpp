#pragma once

#include "mre/types.hpp"

namespace mre {

// A loss value together with its gradient with respect to the differentiated
// input; the gradient always has the input's shape.
struct LossResult {
  double value = 0.0;
  Matrix gradient;
};

// Gradients for the two sides of a pairwise (Siamese) loss.
struct PairLossResult {
  double value = 0.0;
  Matrix grad_a;
  Matrix grad_b;
};

// Weighted blend of the per-item regression loss and the batch similarity
// loss. The two gradients refer to different inputs (rating predictions and
// the embedding distance matrix); they meet at the shared parameters.
struct CombinedLoss {
  double value = 0.0;
  Matrix reg_gradient;
  Matrix sim_gradient;
};

// Sign applied to distances before the row softmax. `positive` exponentiates
// +distance and is the default.
enum class SoftmaxSign { positive, negative };

// log(cosh(x)) without overflow for large |x|.
double log_cosh(double x);

// Mean log-cosh over all entries of pred - target.
LossResult logcosh_regression(const Matrix& pred, const Matrix& target);

// Mean log-cosh of P - T over the off-diagonal entries. For symmetric inputs
// this is the strict upper triangle mean and the gradient is symmetric.
LossResult dm_logcosh(const Matrix& p, const Matrix& t);

// Negated mean row-wise Pearson correlation between T and P. The diagonal
// (self-distance) is excluded from each row. Throws DegenerateError naming the
// row when a row of either matrix has zero variance.
LossResult dm_pearson(const Matrix& p, const Matrix& t);

Matrix row_softmax(const Matrix& m, SoftmaxSign sign = SoftmaxSign::positive);

// dm_pearson on the row softmax of both matrices; gradient goes through the softmax.
LossResult dm_ranked_pearson(const Matrix& p, const Matrix& t,
                             SoftmaxSign sign = SoftmaxSign::positive);

// Sum over rows of KL(softmax(T_b) || softmax(P_b)); diagonal included.
LossResult dm_kl(const Matrix& p, const Matrix& t, SoftmaxSign sign = SoftmaxSign::positive);

// Mean log-cosh of ||a_i - b_i|| - d_i over row pairs. The gradient at
// coincident rows is defined as zero.
PairLossResult siamese_distance_loss(const Matrix& a, const Matrix& b, const Vector& d_true);

CombinedLoss multi_task_combine(const LossResult& reg, const LossResult& sim, double w_reg,
                                double w_sim);

}  // namespace mre
