#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mre/dataset.hpp"
#include "mre/retrieval.hpp"
#include "mre/trainer.hpp"

namespace mre {

enum class CVRole { validation, test };

// One row of the ten-way cross-validation layout over groups 0..4.
struct CVConfig {
  int id;
  std::array<int, 2> prediction_train;
  std::array<int, 2> prediction_valid;
  int prediction_test;
  std::array<int, 2> supervised_train;
  int supervised_eval;
  std::array<int, 2> semi_train;
  int semi_eval;
  CVRole role;
};

const std::array<CVConfig, 10>& cv_configs();
const CVConfig& cv_config(int id);

// Throws ConfigError unless each row's prediction groups partition {0..4},
// retrieval training groups equal the prediction validation groups and the
// retrieval evaluation group is the prediction test group.
void validate_cv_table(std::span<const CVConfig> table);

enum class Regime { supervised, semi_supervised, imported_baseline };

std::string_view to_string(Regime r);
Regime regime_from_string(std::string_view s);

struct ExperimentSpec {
  std::vector<Regime> regimes = {Regime::semi_supervised};
  std::vector<int> configs = {2, 5, 6, 8, 9};
  std::uint64_t seed = 0;
  ModelConfig model;  // input fields are taken from the dataset
  TrainSchedule retrieval = TrainSchedule::make(TrainMode::multi_task, 10);
  // Regression-only schedule; its epoch count is the maximum for epoch selection.
  TrainSchedule prediction = TrainSchedule::make(TrainMode::regression_only, 70);
  std::string embeddings_path;  // for imported_baseline
  std::size_t jobs = 1;

  std::string to_json() const;
  static ExperimentSpec from_json(const std::string& text);
};

struct PredictionResult {
  std::map<std::string, RatingVector> predictions;  // validation and test group items
  std::size_t selected_epoch = 0;                   // 0 = untrained
  double initial_val_loss = 0.0;
  double selected_val_loss = 0.0;
  TrainHistory history;
};

// Step 1: regression-only training on the prediction training groups, with
// the epoch chosen by minimum regression loss on the validation groups.
PredictionResult run_prediction_step(const CVConfig& cv, const ExperimentSpec& spec,
                                     const Dataset& dataset);

// Copy of `dataset` with the predictions attached as singleton sets.
Dataset with_predictions(const Dataset& dataset, const PredictionResult& prediction);

struct RetrievalResult {
  double correlation = 0.0;  // against true rating-set distances
  double hubness = 0.0;
  std::size_t epochs = 0;
  std::vector<std::string> train_ids;
  std::vector<std::string> test_ids;
  Matrix test_embeddings;
  TrainHistory history;
};

// Steps 2 and 3: multi-task retrieval training on the configuration's
// retrieval training groups using the chosen labels, evaluated on the held
// out group.
RetrievalResult run_retrieval_step(const CVConfig& cv, const ExperimentSpec& spec,
                                   const Dataset& dataset, LabelSource labels);

// Correlation and hubness of an untrained model with the retrieval seed.
RetrievalResult evaluate_untrained(const CVConfig& cv, const ExperimentSpec& spec,
                                   const Dataset& dataset);

struct ImportResult {
  EmbeddingIndex index;
  double correlation;
  double hubness;
};

// L2-normalizes imported vectors and evaluates them against the dataset's
// true ratings. With `groups`, only imported items in those groups are used.
ImportResult import_embeddings(const EmbeddingTable& table, const Dataset& dataset,
                               std::optional<std::span<const int>> groups = std::nullopt);
ImportResult import_embeddings(const std::string& path, const Dataset& dataset);

// Row label used in reports: Supervised, Semi-supervised, Unsupervised.
std::string_view method_label(Regime r);

struct ConfigResult {
  int config_id = 0;
  Regime regime = Regime::supervised;
  double correlation = 0.0;
  double hubness = 0.0;
  // Selected rating-prediction epoch for semi-supervised rows, trained
  // retrieval epochs for supervised rows, 0 for imported embeddings.
  std::size_t epoch = 0;
};

struct SummaryRow {
  Regime regime = Regime::supervised;
  double correlation = 0.0;
  double hubness = 0.0;
  std::size_t configs = 0;
};

struct Summary {
  std::vector<ConfigResult> per_config;  // filtered, ordered by (config, regime)
  std::vector<SummaryRow> means;         // one per regime present
};

// Means per method over the configurations whose role matches `role` (all
// when empty). Throws DomainError when nothing matches.
Summary aggregate_results(std::span<const ConfigResult> results,
                          std::optional<CVRole> role = std::nullopt);

// Runs every configuration of the spec (in parallel up to spec.jobs) and
// returns results ordered by (config, regime).
std::vector<ConfigResult> run_pipeline(const Dataset& dataset, const ExperimentSpec& spec);

// Columns: config_id, regime, correlation, hubness, epoch.
void write_config_csv(std::ostream& os, std::span<const ConfigResult> rows);
// Per-config rows, then per-method means, then relative cost rows against
// the supervised mean.
void write_summary_csv(std::ostream& os, const Summary& summary);

}  // namespace mre
