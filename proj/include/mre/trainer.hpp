#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mre/losses.hpp"
#include "mre/model.hpp"
#include "mre/ratings.hpp"

namespace mre {

enum class TrainMode { regression_only, similarity_only, two_step_finetune, multi_task };
enum class SimilarityLoss { dm_logcosh, dm_pearson, dm_ranked_pearson, dm_kl, siamese };
enum class OptimizerKind { sgd, momentum, adam };

std::string_view to_string(TrainMode m);
std::string_view to_string(SimilarityLoss l);
std::string_view to_string(OptimizerKind o);
TrainMode train_mode_from_string(std::string_view s);
SimilarityLoss similarity_loss_from_string(std::string_view s);
OptimizerKind optimizer_from_string(std::string_view s);

struct ScheduleStep {
  double w_reg = 1.0;
  double w_sim = 0.0;
  std::size_t epochs = 0;
};

struct TrainSchedule {
  TrainMode mode = TrainMode::multi_task;
  std::vector<ScheduleStep> steps;
  SimilarityLoss similarity_loss = SimilarityLoss::dm_kl;
  OptimizerKind optimizer = OptimizerKind::sgd;
  double learning_rate = 0.01;
  double momentum = 0.9;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
  SoftmaxSign softmax_sign = SoftmaxSign::positive;

  // Steps for a mode with the same epoch count per step. multi_task uses the
  // three-step weighting (0.9, 0.1), (0.5, 0.5), (0.0, 0.1);
  // the last step's weights deliberately do not sum to one.
  static TrainSchedule make(TrainMode mode, std::size_t epochs_per_step);

  std::size_t total_epochs() const;
  void validate() const;

  std::string to_json() const;
  static TrainSchedule from_json(const std::string& text);
};

struct TrainingData {
  std::vector<std::string> ids;
  Matrix inputs;
  std::vector<RatingSet> rating_sets;

  std::size_t size() const { return rating_sets.size(); }
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  std::size_t step = 0;   // 0-based schedule step
  double w_reg = 0.0;
  double w_sim = 0.0;
  double train_loss = std::numeric_limits<double>::quiet_NaN();
  double val_correlation = std::numeric_limits<double>::quiet_NaN();
  double val_regression_loss = std::numeric_limits<double>::quiet_NaN();
  std::size_t skipped_batches = 0;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  std::size_t skipped_batches = 0;
};

struct BatchLoss {
  double value = 0.0;
  Gradients gradients;
};

// Loss and parameter gradients for one batch: P is the embedding distance
// matrix, T the rating-set distance matrix of the batch, and the regression
// target each item's mean rating.
BatchLoss batch_loss(const EmbeddingModel& model, const Matrix& inputs,
                     std::span<const RatingSet> sets, const ScheduleStep& weights,
                     SimilarityLoss loss, SoftmaxSign sign = SoftmaxSign::positive);

// Validation diagnostics used by the training history.
double validation_correlation(const EmbeddingModel& model, const TrainingData& data);
double validation_regression_loss(const EmbeddingModel& model, const TrainingData& data);

using EpochCallback = std::function<void(const EpochRecord&, const EmbeddingModel&)>;

// Seeded mini-batch training. Batches whose similarity loss is degenerate
// (constant rows) are skipped and counted.
TrainHistory train(EmbeddingModel& model, const TrainingData& data, const TrainSchedule& schedule,
                   const TrainingData* validation = nullptr, const EpochCallback& on_epoch = {});

// Rating head output clamped to the schema ranges.
std::vector<RatingVector> predict_ratings(const EmbeddingModel& model, const Matrix& inputs,
                                          const CharacteristicSchema& schema);

}  // namespace mre
