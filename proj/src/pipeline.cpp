#include "mre/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <ostream>
#include <set>
#include <thread>

#include <nlohmann/json.hpp>

#include "mre/error.hpp"
#include "mre/random.hpp"

namespace mre {

using json = nlohmann::json;
using Eigen::Index;

namespace {

constexpr CVRole V = CVRole::validation;
constexpr CVRole T = CVRole::test;

// id, prediction train / valid / test, supervised train / eval, semi train / eval, role
constexpr std::array<CVConfig, 10> kConfigs = {{
    {0, {0, 1}, {2, 3}, 4, {2, 3}, 4, {2, 3}, 4, V},
    {1, {0, 2}, {1, 4}, 3, {1, 4}, 3, {1, 4}, 3, V},
    {2, {0, 3}, {1, 2}, 4, {1, 2}, 4, {1, 2}, 4, T},
    {3, {0, 4}, {1, 3}, 2, {1, 3}, 2, {1, 3}, 2, V},
    {4, {1, 2}, {3, 4}, 0, {3, 4}, 0, {3, 4}, 0, V},
    {5, {1, 3}, {2, 4}, 0, {2, 4}, 0, {2, 4}, 0, T},
    {6, {1, 4}, {0, 3}, 2, {0, 3}, 2, {0, 3}, 2, T},
    {7, {2, 3}, {0, 4}, 1, {0, 4}, 1, {0, 4}, 1, V},
    {8, {2, 4}, {0, 1}, 3, {0, 1}, 3, {0, 1}, 3, T},
    {9, {3, 4}, {0, 2}, 1, {0, 2}, 1, {0, 2}, 1, T},
}};

const bool kTableChecked = (validate_cv_table(kConfigs), true);

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

std::string fmt_percent(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%+.1f%%", v);
  return buf;
}

std::uint64_t prediction_seed(const ExperimentSpec& s, int cv) { return derive_seed(s.seed, 100 + static_cast<std::uint64_t>(cv)); }
std::uint64_t retrieval_seed(const ExperimentSpec& s, int cv) { return derive_seed(s.seed, 200 + static_cast<std::uint64_t>(cv)); }

ModelConfig model_for(const ExperimentSpec& spec, const Dataset& ds, std::uint64_t seed) {
  ModelConfig c = spec.model;
  c.input_kind = ds.input_kind;
  c.input_dim = ds.input_dim;
  c.patch_height = ds.patch_height;
  c.patch_width = ds.patch_width;
  c.rating_dim = ds.records.front().rating_set.dim();
  c.seed = seed;
  return c;
}

RetrievalResult evaluate_on(const EmbeddingModel& model, const Dataset& dataset, int test_group) {
  const std::array<int, 1> g = {test_group};
  const TrainingData test = dataset.training_data(g, LabelSource::true_ratings);
  if (test.size() <= kDefaultHubnessKs.back())
    throw DomainError("held-out group has " + std::to_string(test.size()) +
                      " items; hubness needs more than " + std::to_string(kDefaultHubnessKs.back()));
  RetrievalResult r;
  r.test_ids = test.ids;
  r.test_embeddings = model.forward(test.inputs);
  const EmbeddingIndex index(test.ids, r.test_embeddings);
  r.correlation = rating_correlation(index.distance_matrix(), set_distance_matrix(test.rating_sets));
  r.hubness = hubness_index(index);
  return r;
}

}  // namespace

const std::array<CVConfig, 10>& cv_configs() {
  (void)kTableChecked;
  return kConfigs;
}

const CVConfig& cv_config(int id) {
  if (id < 0 || id >= static_cast<int>(kConfigs.size()))
    throw UsageError("invalid configuration id " + std::to_string(id) + " (expected 0..9)");
  return kConfigs[static_cast<std::size_t>(id)];
}

void validate_cv_table(std::span<const CVConfig> table) {
  for (std::size_t i = 0; i < table.size(); ++i) {
    const CVConfig& c = table[i];
    const std::string row = "configuration " + std::to_string(c.id);
    if (c.id != static_cast<int>(i)) throw ConfigError(row + " is out of order");
    std::set<int> groups = {c.prediction_train[0], c.prediction_train[1], c.prediction_valid[0],
                            c.prediction_valid[1], c.prediction_test};
    if (groups != std::set<int>{0, 1, 2, 3, 4}) throw ConfigError(row + " does not partition groups 0..4");
    if (c.supervised_train != c.prediction_valid || c.semi_train != c.prediction_valid)
      throw ConfigError(row + ": retrieval training groups must equal the prediction validation groups");
    if (c.supervised_eval != c.prediction_test || c.semi_eval != c.prediction_test)
      throw ConfigError(row + ": retrieval evaluation group must equal the prediction test group");
  }
}

std::string_view to_string(Regime r) {
  switch (r) {
    case Regime::supervised: return "supervised";
    case Regime::semi_supervised: return "semi_supervised";
    case Regime::imported_baseline: return "imported_baseline";
  }
  return "";
}

Regime regime_from_string(std::string_view s) {
  for (auto r : {Regime::supervised, Regime::semi_supervised, Regime::imported_baseline})
    if (to_string(r) == s) return r;
  throw UsageError("unknown regime '" + std::string(s) +
                   "' (expected supervised, semi_supervised, imported_baseline)");
}

std::string_view method_label(Regime r) {
  switch (r) {
    case Regime::supervised: return "Supervised";
    case Regime::semi_supervised: return "Semi-supervised";
    case Regime::imported_baseline: return "Unsupervised";
  }
  return "";
}

std::string ExperimentSpec::to_json() const {
  json j;
  j["regimes"] = json::array();
  for (auto r : regimes) j["regimes"].push_back(to_string(r));
  j["configs"] = configs;
  j["seed"] = seed;
  j["model"] = json::parse(model.to_json());
  j["retrieval"] = json::parse(retrieval.to_json());
  j["prediction"] = json::parse(prediction.to_json());
  j["embeddings"] = embeddings_path;
  j["jobs"] = jobs;
  return j.dump();
}

ExperimentSpec ExperimentSpec::from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw FormatError(std::string("experiment spec is not valid JSON: ") + e.what());
  }
  ExperimentSpec s;
  try {
    if (j.contains("regimes")) {
      s.regimes.clear();
      for (const auto& r : j["regimes"]) s.regimes.push_back(regime_from_string(r.get<std::string>()));
    }
    s.configs = j.value("configs", s.configs);
    s.seed = j.value("seed", s.seed);
    if (j.contains("model")) s.model = ModelConfig::from_json(j["model"].dump());
    if (j.contains("retrieval")) s.retrieval = TrainSchedule::from_json(j["retrieval"].dump());
    if (j.contains("prediction")) s.prediction = TrainSchedule::from_json(j["prediction"].dump());
    s.embeddings_path = j.value("embeddings", s.embeddings_path);
    s.jobs = j.value("jobs", s.jobs);
  } catch (const json::exception& e) {
    throw FormatError(std::string("experiment spec has a malformed field: ") + e.what());
  }
  if (s.regimes.empty()) throw UsageError("experiment needs at least one regime");
  if (s.configs.empty()) throw UsageError("experiment needs at least one configuration");
  for (int c : s.configs) cv_config(c);
  return s;
}

PredictionResult run_prediction_step(const CVConfig& cv, const ExperimentSpec& spec,
                                     const Dataset& dataset) {
  const TrainingData train_set = dataset.training_data(cv.prediction_train, LabelSource::true_ratings);
  const TrainingData valid_set = dataset.training_data(cv.prediction_valid, LabelSource::true_ratings);
  if (train_set.size() < 3) throw DomainError("prediction training groups are empty");
  if (valid_set.size() == 0) throw DomainError("prediction validation groups are empty");

  EmbeddingModel model(model_for(spec, dataset, prediction_seed(spec, cv.id)));
  TrainSchedule schedule = spec.prediction;
  schedule.mode = TrainMode::regression_only;
  for (auto& st : schedule.steps) {
    st.w_reg = 1.0;
    st.w_sim = 0.0;
  }
  schedule.seed = prediction_seed(spec, cv.id);

  PredictionResult out;
  out.initial_val_loss = validation_regression_loss(model, valid_set);
  out.selected_val_loss = out.initial_val_loss;
  EmbeddingModel best = model;
  out.history = train(model, train_set, schedule, &valid_set,
                      [&](const EpochRecord& rec, const EmbeddingModel& m) {
                        if (rec.val_regression_loss < out.selected_val_loss) {
                          out.selected_val_loss = rec.val_regression_loss;
                          out.selected_epoch = rec.epoch;
                          best = m;
                        }
                      });

  std::vector<int> groups(cv.prediction_valid.begin(), cv.prediction_valid.end());
  groups.push_back(cv.prediction_test);
  const auto recs = dataset.in_groups(groups);
  Matrix inputs(static_cast<Index>(recs.size()), static_cast<Index>(dataset.input_size()));
  for (std::size_t i = 0; i < recs.size(); ++i)
    for (std::size_t c = 0; c < recs[i]->input.size(); ++c) inputs(static_cast<Index>(i), static_cast<Index>(c)) = recs[i]->input[c];
  const auto pred = predict_ratings(best, inputs, CharacteristicSchema::lidc());
  for (std::size_t i = 0; i < recs.size(); ++i) out.predictions[recs[i]->id] = pred[i];
  return out;
}

Dataset with_predictions(const Dataset& dataset, const PredictionResult& prediction) {
  Dataset out = dataset;
  for (auto& r : out.records) {
    auto it = prediction.predictions.find(r.id);
    if (it != prediction.predictions.end()) r.predicted_rating_set = RatingSet({it->second});
  }
  return out;
}

RetrievalResult run_retrieval_step(const CVConfig& cv, const ExperimentSpec& spec,
                                   const Dataset& dataset, LabelSource labels) {
  const auto& groups = labels == LabelSource::true_ratings ? cv.supervised_train : cv.semi_train;
  const int test_group = labels == LabelSource::true_ratings ? cv.supervised_eval : cv.semi_eval;
  const TrainingData train_set = dataset.training_data(groups, labels);
  if (train_set.size() < 3) throw DomainError("retrieval training groups are empty");

  EmbeddingModel model(model_for(spec, dataset, retrieval_seed(spec, cv.id)));
  TrainSchedule schedule = spec.retrieval;
  schedule.seed = retrieval_seed(spec, cv.id);
  TrainHistory history = train(model, train_set, schedule);

  RetrievalResult r = evaluate_on(model, dataset, test_group);
  const std::set<std::string> train_ids(train_set.ids.begin(), train_set.ids.end());
  for (const auto& id : r.test_ids) {
    if (train_ids.count(id)) throw Error(1, "held-out item '" + id + "' appeared in a training batch");
  }
  r.train_ids = train_set.ids;
  r.epochs = schedule.total_epochs();
  r.history = std::move(history);
  return r;
}

RetrievalResult evaluate_untrained(const CVConfig& cv, const ExperimentSpec& spec,
                                   const Dataset& dataset) {
  const EmbeddingModel model(model_for(spec, dataset, retrieval_seed(spec, cv.id)));
  return evaluate_on(model, dataset, cv.supervised_eval);
}

ImportResult import_embeddings(const EmbeddingTable& table, const Dataset& dataset,
                               std::optional<std::span<const int>> groups) {
  std::vector<std::string> ids;
  std::vector<RatingSet> sets;
  std::vector<Index> rows;
  for (std::size_t i = 0; i < table.ids.size(); ++i) {
    const PatchRecord* rec = nullptr;
    try {
      rec = &dataset.find(table.ids[i]);
    } catch (const DomainError&) {
      throw FormatError("imported embedding id '" + table.ids[i] + "' is not in the dataset");
    }
    if (groups && std::find(groups->begin(), groups->end(), rec->group) == groups->end()) continue;
    ids.push_back(rec->id);
    sets.push_back(rec->rating_set);
    rows.push_back(static_cast<Index>(i));
  }
  if (ids.size() < 3) throw DomainError("need at least 3 imported embeddings to evaluate");
  Matrix v(static_cast<Index>(rows.size()), table.vectors.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const double n = table.vectors.row(rows[i]).norm();
    if (!(n >= 1e-12)) throw DegenerateError("imported embedding '" + ids[i] + "' has zero norm");
    v.row(static_cast<Index>(i)) = table.vectors.row(rows[i]) / n;
  }
  EmbeddingIndex index(std::move(ids), std::move(v));
  const double corr = rating_correlation(index.distance_matrix(), set_distance_matrix(sets));
  const double hub = hubness_index(index);
  return {std::move(index), corr, hub};
}

ImportResult import_embeddings(const std::string& path, const Dataset& dataset) {
  return import_embeddings(read_embeddings(path), dataset);
}

Summary aggregate_results(std::span<const ConfigResult> results, std::optional<CVRole> role) {
  Summary s;
  for (const auto& r : results) {
    if (!role || cv_config(r.config_id).role == *role) s.per_config.push_back(r);
  }
  if (s.per_config.empty()) throw DomainError("no configuration results match the role filter");
  std::sort(s.per_config.begin(), s.per_config.end(), [](const ConfigResult& a, const ConfigResult& b) {
    return a.config_id < b.config_id || (a.config_id == b.config_id && a.regime < b.regime);
  });
  for (auto regime : {Regime::supervised, Regime::semi_supervised, Regime::imported_baseline}) {
    SummaryRow row;
    row.regime = regime;
    for (const auto& r : s.per_config) {
      if (r.regime != regime) continue;
      row.correlation += r.correlation;
      row.hubness += r.hubness;
      ++row.configs;
    }
    if (!row.configs) continue;
    row.correlation /= static_cast<double>(row.configs);
    row.hubness /= static_cast<double>(row.configs);
    s.means.push_back(row);
  }
  return s;
}

std::vector<ConfigResult> run_pipeline(const Dataset& dataset, const ExperimentSpec& spec) {
  auto has = [&](Regime r) { return std::find(spec.regimes.begin(), spec.regimes.end(), r) != spec.regimes.end(); };
  std::optional<EmbeddingTable> imported;
  if (has(Regime::imported_baseline)) {
    if (spec.embeddings_path.empty()) throw UsageError("imported_baseline needs an embeddings file");
    imported = read_embeddings(spec.embeddings_path);
  }

  std::vector<std::vector<ConfigResult>> slots(spec.configs.size());
  auto run_one = [&](std::size_t slot) {
    const CVConfig& cv = cv_config(spec.configs[slot]);
    auto& out = slots[slot];
    if (has(Regime::supervised) || has(Regime::semi_supervised)) {
      const RetrievalResult sup = run_retrieval_step(cv, spec, dataset, LabelSource::true_ratings);
      out.push_back({cv.id, Regime::supervised, sup.correlation, sup.hubness, sup.epochs});
    }
    if (has(Regime::semi_supervised)) {
      const PredictionResult pred = run_prediction_step(cv, spec, dataset);
      const Dataset labelled = with_predictions(dataset, pred);
      const RetrievalResult semi = run_retrieval_step(cv, spec, labelled, LabelSource::predicted_ratings);
      out.push_back({cv.id, Regime::semi_supervised, semi.correlation, semi.hubness, pred.selected_epoch});
    }
    if (imported) {
      const std::array<int, 1> g = {cv.prediction_test};
      const ImportResult ir = import_embeddings(*imported, dataset, std::span<const int>(g));
      out.push_back({cv.id, Regime::imported_baseline, ir.correlation, ir.hubness, 0});
    }
  };

  const std::size_t workers = std::max<std::size_t>(1, std::min(spec.jobs, spec.configs.size()));
  if (workers == 1) {
    for (std::size_t i = 0; i < slots.size(); ++i) run_one(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(workers);
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        try {
          for (std::size_t i; (i = next.fetch_add(1)) < slots.size();) run_one(i);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }

  std::vector<ConfigResult> results;
  for (auto& s : slots) results.insert(results.end(), s.begin(), s.end());
  std::sort(results.begin(), results.end(), [](const ConfigResult& a, const ConfigResult& b) {
    return a.config_id < b.config_id || (a.config_id == b.config_id && a.regime < b.regime);
  });
  return results;
}

void write_config_csv(std::ostream& os, std::span<const ConfigResult> rows) {
  os << "config_id,regime,correlation,hubness,epoch\n";
  for (const auto& r : rows)
    os << r.config_id << ',' << to_string(r.regime) << ',' << fmt(r.correlation) << ',' << fmt(r.hubness)
       << ',' << r.epoch << '\n';
}

void write_summary_csv(std::ostream& os, const Summary& summary) {
  os << "row,method,config_id,correlation,hubness,epoch\n";
  for (const auto& r : summary.per_config)
    os << "config," << method_label(r.regime) << ',' << r.config_id << ',' << fmt(r.correlation) << ','
       << fmt(r.hubness) << ',' << r.epoch << '\n';
  const SummaryRow* sup = nullptr;
  for (const auto& m : summary.means) {
    os << "mean," << method_label(m.regime) << ",," << fmt(m.correlation) << ',' << fmt(m.hubness) << ",\n";
    if (m.regime == Regime::supervised) sup = &m;
  }
  if (!sup) return;
  for (const auto& m : summary.means) {
    if (m.regime == Regime::supervised) continue;
    os << "cost," << method_label(m.regime) << " cost,,"
       << fmt_percent(100.0 * (m.correlation - sup->correlation) / sup->correlation) << ','
       << fmt_percent(100.0 * (m.hubness - sup->hubness) / sup->hubness) << ",\n";
  }
}

}  // namespace mre
