#include "mre/reports.hpp"

#include <cmath>
#include <cstdio>
#include <ostream>

#include "mre/ratings.hpp"

namespace mre {

namespace {

std::string fmt(double v) {
  if (std::isnan(v)) return "NA";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

}  // namespace

EvaluationReport evaluate_index(const EmbeddingIndex& index, std::span<const RatingSet> sets,
                                std::span<const std::size_t> ks, std::size_t hub_k) {
  EvaluationReport r;
  r.items = index.size();
  r.rating_correlation = rating_correlation(index.distance_matrix(), set_distance_matrix(sets));
  double sum = 0.0;
  for (std::size_t k : ks) {
    KOccurrenceProfile p = k_occurrences(index, k);
    KSummary s;
    s.k = k;
    s.skewness = hubness_skewness(p);
    s.hubness_index = std::exp(-std::abs(s.skewness));
    for (auto c : p.counts) s.orphans += c == 0;
    sum += s.hubness_index;
    r.per_k.push_back(s);
    r.profiles.push_back(std::move(p));
  }
  r.hubness_index = ks.empty() ? 1.0 : sum / static_cast<double>(ks.size());
  r.hub = hub_report(index, hub_k);
  return r;
}

void write_metrics_csv(std::ostream& os, const EvaluationReport& r) {
  os << "items,rating_correlation,hubness_index";
  for (const auto& s : r.per_k) os << ",skewness_k" << s.k << ",hubness_index_k" << s.k << ",orphans_k" << s.k;
  os << ",hub_k,hub_id,hub_reverse_queries\n";
  os << r.items << ',' << fmt(r.rating_correlation) << ',' << fmt(r.hubness_index);
  for (const auto& s : r.per_k) os << ',' << fmt(s.skewness) << ',' << fmt(s.hubness_index) << ',' << s.orphans;
  os << ',' << r.hub.k << ',' << r.hub.hub_id << ',' << r.hub.reverse_queries.size() << '\n';
}

void write_k_occurrence_csv(std::ostream& os, const EmbeddingIndex& index, const EvaluationReport& r) {
  os << "item_id,k,n_k\n";
  for (std::size_t i = 0; i < index.size(); ++i) {
    for (const auto& p : r.profiles) os << index.ids()[i] << ',' << p.k << ',' << p.counts[i] << '\n';
  }
}

void write_hub_report(std::ostream& os, const HubReport& hub) {
  auto join = [](const std::vector<std::string>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + v[i];
    return s;
  };
  os << "[largest_hub]\n"
     << "k = " << hub.k << '\n'
     << "hub_id = " << hub.hub_id << '\n'
     << "reverse_query_count = " << hub.reverse_queries.size() << '\n'
     << "reverse_queries = " << join(hub.reverse_queries) << '\n'
     << "skewness = " << fmt(hub.skewness) << '\n'
     << "hubness_index = " << fmt(hub.hubness_index) << '\n'
     << "\n[orphans]\n"
     << "k = " << hub.k << '\n'
     << "orphan_count = " << hub.orphan_ids.size() << '\n'
     << "orphan_ids = " << join(hub.orphan_ids) << '\n';
}

void write_history_csv(std::ostream& os, const TrainHistory& history) {
  os << "epoch,train_loss,val_correlation\n";
  for (const auto& e : history.epochs) os << e.epoch << ',' << fmt(e.train_loss) << ',' << fmt(e.val_correlation) << '\n';
}

void write_neighbor_table(std::ostream& os, const Dataset& dataset, const std::string& query_id,
                          std::span<const Neighbor> neighbors) {
  const auto& names = CharacteristicSchema::lidc().names();
  auto row = [&](const std::string& rank, const PatchRecord& rec, double dist) {
    os << rank << ',' << rec.id << ',' << fmt(dist) << ',' << to_string(rec.malignancy);
    const RatingVector m = mean_rating(rec.rating_set);
    for (double v : m) os << ',' << fmt(v);
    os << '\n';
  };
  os << "rank,id,distance,malignancy_class";
  for (const auto& n : names) {
    std::string col = n;
    for (auto& ch : col) ch = ch == ' ' ? '_' : static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    os << ',' << col;
  }
  os << '\n';
  (void)dataset.find(query_id);
  for (std::size_t i = 0; i < neighbors.size(); ++i) row(std::to_string(i + 1), dataset.find(neighbors[i].id), neighbors[i].distance);
}

}  // namespace mre
