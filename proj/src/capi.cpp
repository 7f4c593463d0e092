#include "mre/mre.h"

#include <cstring>
#include <filesystem>
#include <fstream>
#include <memory>
#include <new>
#include <sstream>
#include <string>

#include "mre/annotation_metrics.hpp"
#include "mre/dataset.hpp"
#include "mre/error.hpp"
#include "mre/pipeline.hpp"
#include "mre/reports.hpp"
#include "mre/trainer.hpp"

struct mre_dataset {
  mre::Dataset rep;
};

struct mre_model {
  mre::EmbeddingModel rep;
};

struct mre_index {
  mre::EmbeddingIndex rep;
};

namespace {

thread_local std::string g_last_error;

template <typename F>
mre_status guarded(F&& f) {
  try {
    f();
    return MRE_OK;
  } catch (const mre::Error& e) {
    g_last_error = e.what();
    return static_cast<mre_status>(e.code());
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
  } catch (const std::exception& e) {
    g_last_error = e.what();
  } catch (...) {
    g_last_error = "unknown error";
  }
  return MRE_ERR_INTERNAL;
}

void require(bool ok, const char* what) {
  if (!ok) throw mre::UsageError(what);
}

std::ofstream open_out(const std::filesystem::path& p) {
  std::ofstream os(p);
  if (!os) throw mre::IoError("cannot write '" + p.string() + "'");
  return os;
}

std::filesystem::path make_dir(const char* dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw mre::IoError(std::string("cannot create output directory '") + dir + "': " + ec.message());
  return dir;
}

mre::Matrix inputs_of(const std::vector<const mre::PatchRecord*>& recs, std::size_t width) {
  mre::Matrix x(static_cast<Eigen::Index>(recs.size()), static_cast<Eigen::Index>(width));
  for (std::size_t i = 0; i < recs.size(); ++i)
    for (std::size_t c = 0; c < width; ++c) x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = recs[i]->input[c];
  return x;
}

std::vector<int> group_list(const int* groups, std::size_t n) {
  if (!n) return {0, 1, 2, 3, 4};
  require(groups != nullptr, "group list is null");
  return std::vector<int>(groups, groups + n);
}

void check_model_fits(const mre::EmbeddingModel& m, const mre::Dataset& ds) {
  if (m.config().input_size() != ds.input_size())
    throw mre::DomainError("model expects inputs of size " + std::to_string(m.config().input_size()) +
                           ", dataset provides " + std::to_string(ds.input_size()));
}

char* copy_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

}  // namespace

extern "C" {

const char* mre_last_error(void) { return g_last_error.c_str(); }

const char* mre_version(void) { return "1.0.0"; }

void mre_string_free(char* s) { std::free(s); }

mre_status mre_set_distance(const double* a, size_t a_count, const double* b, size_t b_count,
                            size_t dim, double* out) {
  return guarded([&] {
    require(a && b && out, "null argument");
    require(dim > 0, "dimension must be positive");
    auto rows = [dim](const double* p, size_t n) {
      std::vector<mre::RatingVector> v;
      for (size_t i = 0; i < n; ++i) v.emplace_back(p + i * dim, p + (i + 1) * dim);
      return v;
    };
    *out = mre::set_distance(mre::RatingSet(rows(a, a_count)), mre::RatingSet(rows(b, b_count)));
  });
}

mre_status mre_normalize_hu(const double* hu, size_t n, double* out) {
  return guarded([&] {
    require((hu && out) || n == 0, "null argument");
    const auto v = mre::normalize_patch(std::span<const double>(hu, n));
    std::copy(v.begin(), v.end(), out);
  });
}

void mre_synth_options_default(mre_synth_options* o) {
  if (!o) return;
  const mre::SyntheticOptions d;
  *o = {d.n_items, d.seed, d.rater_noise, d.min_raters, d.max_raters, d.feature_dim,
        d.feature_noise, d.nuisance_dim, d.nuisance_scale, d.mixing_gain};
}

mre_status mre_dataset_synthesize(const mre_synth_options* o, mre_dataset** out) {
  return guarded([&] {
    require(o && out, "null argument");
    mre::SyntheticOptions s;
    s.n_items = o->n_items;
    s.seed = o->seed;
    s.rater_noise = o->rater_noise;
    s.min_raters = o->min_raters;
    s.max_raters = o->max_raters;
    s.feature_dim = o->feature_dim;
    s.feature_noise = o->feature_noise;
    s.nuisance_dim = o->nuisance_dim;
    s.nuisance_scale = o->nuisance_scale;
    s.mixing_gain = o->mixing_gain;
    *out = new mre_dataset{mre::generate_synthetic(s)};
  });
}

mre_status mre_dataset_load(const char* manifest, mre_dataset** out) {
  return guarded([&] {
    require(manifest && out, "null argument");
    *out = new mre_dataset{mre::load_dataset(manifest)};
  });
}

mre_status mre_dataset_save(const mre_dataset* ds, const char* dir) {
  return guarded([&] {
    require(ds && dir, "null argument");
    mre::save_dataset(ds->rep, dir);
  });
}

size_t mre_dataset_size(const mre_dataset* ds) { return ds ? ds->rep.size() : 0; }

uint64_t mre_dataset_checksum(const mre_dataset* ds) { return ds ? ds->rep.checksum() : 0; }

void mre_dataset_free(mre_dataset* ds) { delete ds; }

mre_status mre_model_create(const mre_dataset* ds, const char* config_json, mre_model** out) {
  return guarded([&] {
    require(out != nullptr, "null argument");
    mre::ModelConfig c = mre::ModelConfig::from_json(config_json && *config_json ? config_json : "{}");
    if (ds) {
      c.input_kind = ds->rep.input_kind;
      c.input_dim = ds->rep.input_dim;
      c.patch_height = ds->rep.patch_height;
      c.patch_width = ds->rep.patch_width;
    }
    *out = new mre_model{mre::EmbeddingModel(c)};
  });
}

mre_status mre_model_train(mre_model* model, const mre_dataset* ds, const char* schedule_json,
                           const int* train_groups, size_t n_train, const int* val_groups,
                           size_t n_val, const char* history_csv_path) {
  return guarded([&] {
    require(model && ds, "null argument");
    check_model_fits(model->rep, ds->rep);
    const auto schedule = mre::TrainSchedule::from_json(schedule_json && *schedule_json ? schedule_json : "{}");
    const auto train_set = ds->rep.training_data(group_list(train_groups, n_train), mre::LabelSource::true_ratings);
    std::optional<mre::TrainingData> val;
    if (n_val) val = ds->rep.training_data(group_list(val_groups, n_val), mre::LabelSource::true_ratings);
    const auto history = mre::train(model->rep, train_set, schedule, val ? &*val : nullptr);
    if (history_csv_path) {
      auto os = open_out(history_csv_path);
      mre::write_history_csv(os, history);
    }
  });
}

mre_status mre_model_save(const mre_model* model, const char* path) {
  return guarded([&] {
    require(model && path, "null argument");
    model->rep.save(std::string(path));
  });
}

mre_status mre_model_load(const char* path, mre_model** out) {
  return guarded([&] {
    require(path && out, "null argument");
    *out = new mre_model{mre::EmbeddingModel::load(std::string(path))};
  });
}

size_t mre_model_input_size(const mre_model* m) { return m ? m->rep.config().input_size() : 0; }

size_t mre_model_embedding_dim(const mre_model* m) { return m ? m->rep.config().embedding_dim : 0; }

uint64_t mre_model_checksum(const mre_model* m) { return m ? m->rep.checksum() : 0; }

mre_status mre_model_embed(const mre_model* m, const double* inputs, size_t n, double* out) {
  return guarded([&] {
    require(m && inputs && out, "null argument");
    const auto width = static_cast<Eigen::Index>(m->rep.config().input_size());
    const mre::Matrix x = Eigen::Map<const mre::Matrix>(inputs, static_cast<Eigen::Index>(n), width);
    const mre::Matrix e = m->rep.forward(x);
    std::copy(e.data(), e.data() + e.size(), out);
  });
}

void mre_model_free(mre_model* m) { delete m; }

mre_status mre_index_create(const char* const* ids, const double* vectors, size_t n, size_t dim,
                            int require_unit_norm, mre_index** out) {
  return guarded([&] {
    require(ids && vectors && out, "null argument");
    std::vector<std::string> names;
    for (size_t i = 0; i < n; ++i) {
      require(ids[i] != nullptr, "null id");
      names.emplace_back(ids[i]);
    }
    mre::Matrix v = Eigen::Map<const mre::Matrix>(vectors, static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(dim));
    *out = new mre_index{mre::EmbeddingIndex(std::move(names), std::move(v), require_unit_norm != 0)};
  });
}

mre_status mre_index_knn(const mre_index* index, const double* query, size_t k,
                         size_t* out_positions, double* out_distances) {
  return guarded([&] {
    require(index && query && out_positions && out_distances, "null argument");
    const auto nn = index->rep.knn_query(std::span<const double>(query, index->rep.dim()), k);
    for (size_t i = 0; i < nn.size(); ++i) {
      out_positions[i] = nn[i].index;
      out_distances[i] = nn[i].distance;
    }
  });
}

mre_status mre_index_k_occurrences(const mre_index* index, size_t k, size_t* out_counts) {
  return guarded([&] {
    require(index && out_counts, "null argument");
    const auto p = mre::k_occurrences(index->rep, k);
    std::copy(p.counts.begin(), p.counts.end(), out_counts);
  });
}

mre_status mre_index_hubness(const mre_index* index, const size_t* ks, size_t n_ks, double* out) {
  return guarded([&] {
    require(index && out, "null argument");
    *out = n_ks ? mre::hubness_index(index->rep, std::span<const size_t>(ks, n_ks))
                : mre::hubness_index(index->rep);
  });
}

void mre_index_free(mre_index* index) { delete index; }

mre_status mre_evaluate(const mre_dataset* ds, const mre_model* model, const char* embeddings_path,
                        const int* groups, size_t n_groups, size_t hub_k, const char* out_dir) {
  return guarded([&] {
    require(ds && out_dir, "null argument");
    require((model != nullptr) != (embeddings_path != nullptr && *embeddings_path),
            "exactly one of a checkpoint or an embeddings file is required");
    const auto dir = make_dir(out_dir);
    const auto g = group_list(groups, n_groups);

    std::vector<std::string> ids;
    std::vector<mre::RatingSet> sets;
    std::unique_ptr<mre::EmbeddingIndex> index;
    if (model) {
      check_model_fits(model->rep, ds->rep);
      const auto recs = ds->rep.in_groups(g);
      const mre::Matrix x = inputs_of(recs, ds->rep.input_size());
      const mre::Matrix emb = model->rep.forward(x);
      std::vector<mre::RatingVector> pred;
      for (const auto* r : recs) {
        ids.push_back(r->id);
        sets.push_back(r->rating_set);
      }
      index = std::make_unique<mre::EmbeddingIndex>(ids, emb);
      mre::write_embeddings((dir / "embeddings.jsonl").string(), {ids, emb});
      if (model->rep.config().rating_dim == mre::CharacteristicSchema::lidc().size()) {
        const auto preds = mre::predict_ratings(model->rep, x, mre::CharacteristicSchema::lidc());
        auto os = open_out(dir / "regression.csv");
        mre::regression_report(preds, sets).write_csv(os);
      }
    } else {
      auto imported = mre::import_embeddings(mre::read_embeddings(embeddings_path), ds->rep, std::span<const int>(g));
      index = std::make_unique<mre::EmbeddingIndex>(std::move(imported.index));
      for (const auto& id : index->ids()) sets.push_back(ds->rep.find(id).rating_set);
    }

    const auto report = mre::evaluate_index(*index, sets, mre::kDefaultHubnessKs, hub_k);
    {
      auto os = open_out(dir / "metrics.csv");
      mre::write_metrics_csv(os, report);
    }
    {
      auto os = open_out(dir / "k_occurrences.csv");
      mre::write_k_occurrence_csv(os, *index, report);
    }
    auto os = open_out(dir / "hub_report.txt");
    mre::write_hub_report(os, report.hub);
  });
}

mre_status mre_retrieve(const mre_dataset* ds, const mre_model* model, const char* query_id,
                        size_t k, char** table_out) {
  return guarded([&] {
    require(ds && model && query_id && table_out, "null argument");
    check_model_fits(model->rep, ds->rep);
    std::vector<const mre::PatchRecord*> recs;
    std::vector<std::string> ids;
    for (const auto& r : ds->rep.records) {
      recs.push_back(&r);
      ids.push_back(r.id);
    }
    const mre::EmbeddingIndex index(ids, model->rep.forward(inputs_of(recs, ds->rep.input_size())));
    const auto nn = index.knn_of_item(index.position(query_id), k);
    std::ostringstream os;
    mre::write_neighbor_table(os, ds->rep, query_id, nn);
    *table_out = copy_string(os.str());
  });
}

mre_status mre_pipeline_run(const mre_dataset* ds, const char* spec_json, const char* out_dir) {
  return guarded([&] {
    require(ds && out_dir, "null argument");
    const auto spec = mre::ExperimentSpec::from_json(spec_json && *spec_json ? spec_json : "{}");
    const auto dir = make_dir(out_dir);
    const auto results = mre::run_pipeline(ds->rep, spec);
    for (int id : spec.configs) {
      std::vector<mre::ConfigResult> rows;
      for (const auto& r : results) {
        if (r.config_id == id) rows.push_back(r);
      }
      auto os = open_out(dir / ("config_" + std::to_string(id) + ".csv"));
      mre::write_config_csv(os, rows);
    }
    auto os = open_out(dir / "summary.csv");
    mre::write_summary_csv(os, mre::aggregate_results(results));
  });
}

}  // extern "C"
