#pragma once

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "mre/dataset.hpp"
#include "mre/retrieval.hpp"
#include "mre/trainer.hpp"

namespace mre {

struct KSummary {
  std::size_t k = 0;
  double skewness = 0.0;
  double hubness_index = 1.0;
  std::size_t orphans = 0;
};

struct EvaluationReport {
  std::size_t items = 0;
  double rating_correlation = 0.0;
  double hubness_index = 0.0;  // mean over the k set
  std::vector<KSummary> per_k;
  std::vector<KOccurrenceProfile> profiles;
  HubReport hub;
};

// Rating correlation against true set distances, per-k hubness and the
// largest hub for `hub_k`. `sets` align with the index rows.
EvaluationReport evaluate_index(const EmbeddingIndex& index, std::span<const RatingSet> sets,
                                std::span<const std::size_t> ks = kDefaultHubnessKs,
                                std::size_t hub_k = 2);

// One row: items, rating_correlation, hubness_index, then skewness_k<k>,
// hubness_index_k<k>, orphans_k<k> for each k, then hub_k, hub_id,
// hub_reverse_queries.
void write_metrics_csv(std::ostream& os, const EvaluationReport& report);

// Long format, one row per item per k: item_id, k, n_k.
void write_k_occurrence_csv(std::ostream& os, const EmbeddingIndex& index,
                            const EvaluationReport& report);

// "key = value" records for the largest hub and its reverse queries.
void write_hub_report(std::ostream& os, const HubReport& hub);

// Columns: epoch, train_loss, val_correlation.
void write_history_csv(std::ostream& os, const TrainHistory& history);

// One row per neighbour (the query itself is not listed): rank, id,
// distance, malignancy class and the true mean ratings.
void write_neighbor_table(std::ostream& os, const Dataset& dataset, const std::string& query_id,
                          std::span<const Neighbor> neighbors);

}  // namespace mre
