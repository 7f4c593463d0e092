/*
 * C interface to the metric-retrieval engine.
 *
 * Objects are opaque handles created by mre_*_create/load/synthesize and
 * released with the matching mre_*_free. Every fallible call returns an
 * mre_status; on failure mre_last_error() describes the problem for the
 * calling thread until the next failing call on that thread.
 */
#ifndef MRE_MRE_H
#define MRE_MRE_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define MRE_API __declspec(dllexport)
#else
#define MRE_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum mre_status {
  MRE_OK = 0,
  MRE_ERR_INTERNAL = 1,
  MRE_ERR_USAGE = 2,    /* bad arguments or configuration */
  MRE_ERR_DATA = 3,     /* malformed input, I/O, out-of-domain values */
  MRE_ERR_NUMERIC = 4   /* numerical degeneracy (zero variance, zero norm) */
} mre_status;

typedef struct mre_dataset mre_dataset;
typedef struct mre_model mre_model;
typedef struct mre_index mre_index;

MRE_API const char* mre_last_error(void);
MRE_API const char* mre_version(void);
MRE_API void mre_string_free(char* s);

/* ---- ratings ----------------------------------------------------------- */

/* Rating-set distance between two sets of `dim`-length rating rows. */
MRE_API mre_status mre_set_distance(const double* a, size_t a_count, const double* b,
                                    size_t b_count, size_t dim, double* out);

/* Clamp Hounsfield units to [-300, 700] and scale to [0, 1]. */
MRE_API mre_status mre_normalize_hu(const double* hu, size_t n, double* out);

/* ---- datasets ---------------------------------------------------------- */

typedef struct mre_synth_options {
  size_t n_items;
  uint64_t seed;
  double rater_noise;
  size_t min_raters;
  size_t max_raters;
  size_t feature_dim;
  double feature_noise;
  size_t nuisance_dim;
  double nuisance_scale;
  double mixing_gain;
} mre_synth_options;

MRE_API void mre_synth_options_default(mre_synth_options* options);
MRE_API mre_status mre_dataset_synthesize(const mre_synth_options* options, mre_dataset** out);
/* `manifest` may be the manifest.jsonl file or its directory. */
MRE_API mre_status mre_dataset_load(const char* manifest, mre_dataset** out);
MRE_API mre_status mre_dataset_save(const mre_dataset* dataset, const char* dir);
MRE_API size_t mre_dataset_size(const mre_dataset* dataset);
MRE_API uint64_t mre_dataset_checksum(const mre_dataset* dataset);
MRE_API void mre_dataset_free(mre_dataset* dataset);

/* ---- models ------------------------------------------------------------ */

/* `config_json` holds model fields (embedding_dim, hidden, seed, ...); when a
 * dataset is given its input kind and size override the config. */
MRE_API mre_status mre_model_create(const mre_dataset* dataset, const char* config_json,
                                    mre_model** out);
/* Trains on items of `train_groups`; `val_groups` (may be empty) feed the
 * per-epoch validation correlation. Writes the history CSV when
 * `history_csv_path` is non-null. */
MRE_API mre_status mre_model_train(mre_model* model, const mre_dataset* dataset,
                                   const char* schedule_json, const int* train_groups,
                                   size_t n_train_groups, const int* val_groups,
                                   size_t n_val_groups, const char* history_csv_path);
MRE_API mre_status mre_model_save(const mre_model* model, const char* path);
MRE_API mre_status mre_model_load(const char* path, mre_model** out);
MRE_API size_t mre_model_input_size(const mre_model* model);
MRE_API size_t mre_model_embedding_dim(const mre_model* model);
MRE_API uint64_t mre_model_checksum(const mre_model* model);
/* Embeds `n` row-major inputs into `out` (n * embedding_dim doubles). */
MRE_API mre_status mre_model_embed(const mre_model* model, const double* inputs, size_t n,
                                   double* out);
MRE_API void mre_model_free(mre_model* model);

/* ---- index and diagnostics --------------------------------------------- */

MRE_API mre_status mre_index_create(const char* const* ids, const double* vectors, size_t n,
                                    size_t dim, int require_unit_norm, mre_index** out);
/* k nearest items to `query`; positions index the creation order. */
MRE_API mre_status mre_index_knn(const mre_index* index, const double* query, size_t k,
                                 size_t* out_positions, double* out_distances);
MRE_API mre_status mre_index_k_occurrences(const mre_index* index, size_t k, size_t* out_counts);
MRE_API mre_status mre_index_hubness(const mre_index* index, const size_t* ks, size_t n_ks,
                                     double* out);
MRE_API void mre_index_free(mre_index* index);

/* ---- commands ---------------------------------------------------------- */

/* Exactly one of `model` / `embeddings_path` must be given. Writes
 * metrics.csv, k_occurrences.csv and hub_report.txt to `out_dir`; with a
 * model also embeddings.jsonl and regression.csv. `groups` may be empty to
 * use every item. */
MRE_API mre_status mre_evaluate(const mre_dataset* dataset, const mre_model* model,
                                const char* embeddings_path, const int* groups, size_t n_groups,
                                size_t hub_k, const char* out_dir);

/* CSV table of the k nearest neighbours of a dataset item (itself excluded).
 * Free the returned string with mre_string_free. */
MRE_API mre_status mre_retrieve(const mre_dataset* dataset, const mre_model* model,
                                const char* query_id, size_t k, char** table_out);

/* Runs the cross-validation experiment described by `spec_json` and writes
 * config_<id>.csv per configuration and summary.csv to `out_dir`. */
MRE_API mre_status mre_pipeline_run(const mre_dataset* dataset, const char* spec_json,
                                    const char* out_dir);

#ifdef __cplusplus
}
#endif

#endif /* MRE_MRE_H */
