#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mre/model.hpp"
#include "mre/ratings.hpp"
#include "mre/trainer.hpp"

namespace mre {

// ---- annotation preparation ------------------------------------------------

struct SliceArea {
  int slice_index = 0;
  double area = 0.0;  // mm^2
};

// One rater's outline of a nodule across slices, with that rater's ratings.
struct AnnotationRecord {
  std::string nodule_id;
  std::string annotation_id;
  std::vector<SliceArea> slices;
  RatingVector rating;
};

// Weights each slice of each annotation by its area relative to that
// annotation's largest slice, sums the weights per slice index over all
// annotations and returns the heaviest slice (lowest index on ties).
int select_representative_slice(std::span<const AnnotationRecord> annotations);

inline constexpr double kHuWindowLow = -300.0;
inline constexpr double kHuWindowHigh = 700.0;

// Clamp Hounsfield units to [-300, 700] and map linearly onto [0, 1].
std::vector<double> normalize_patch(std::span<const double> hu);

// ---- dataset ---------------------------------------------------------------

inline constexpr int kGroupCount = 5;

struct PatchRecord {
  std::string id;
  int group = 0;
  std::vector<double> input;  // normalized patch (row-major) or feature vector
  RatingSet rating_set;
  std::optional<RatingSet> predicted_rating_set;
  MalignancyClass malignancy = MalignancyClass::unknown;
};

enum class LabelSource { true_ratings, predicted_ratings };

struct Dataset {
  InputKind input_kind = InputKind::feature_vector;
  std::size_t input_dim = 0;     // feature length
  std::size_t patch_height = 0;  // image_patch geometry
  std::size_t patch_width = 0;
  std::vector<PatchRecord> records;

  std::size_t size() const { return records.size(); }
  std::size_t input_size() const;
  const PatchRecord& find(const std::string& id) const;

  // Records whose group is in `groups`, in dataset order.
  std::vector<const PatchRecord*> in_groups(std::span<const int> groups) const;

  // Training view over the given groups. Predicted labels become singleton
  // sets; a record without a prediction raises DomainError.
  TrainingData training_data(std::span<const int> groups, LabelSource labels) const;

  // Model config matching this dataset's input kind and size.
  ModelConfig model_config(std::uint64_t seed) const;

  std::uint64_t checksum() const;
};

// Stratified by malignancy class: within every class the items are shuffled
// and dealt round-robin, continuing the dealer position across classes, so
// each group holds within one item of N_class / n_groups of every class.
std::vector<int> split_groups(const Dataset& dataset, int n_groups, std::uint64_t seed);

struct SyntheticOptions {
  std::size_t n_items = 600;
  std::uint64_t seed = 0;
  double rater_noise = 0.3;  // std of per-rater perturbation of the latent ratings
  std::size_t min_raters = 1;
  std::size_t max_raters = 4;
  std::size_t feature_dim = 32;
  double feature_noise = 0.05;  // std of additive i.i.d. feature noise
  std::size_t nuisance_dim = 2;  // unrated latent factors mixed into the features
  double nuisance_scale = 1.5;
  double mixing_gain = 0.5;  // scale of the random linear map before tanh
};

// Latent ratings uniform over the schema ranges; each item gets between
// min_raters and max_raters noisy rater copies as its rating set, and an
// input feature vector tanh(A z + B u) + noise, where z is the latent rating
// scaled to [-1, 1], u are nuisance factors and A, B are seeded random maps.
// Groups are assigned by split_groups. `latents`, when given, receives the
// noise-free ratings.
Dataset generate_synthetic(const SyntheticOptions& options,
                           const CharacteristicSchema& schema = CharacteristicSchema::lidc(),
                           std::vector<RatingVector>* latents = nullptr);

// Manifest: JSON Lines, one record per patch, blobs as little-endian float32
// files referenced relative to the manifest directory.
void save_dataset(const Dataset& dataset, const std::string& dir);
Dataset load_dataset(const std::string& manifest_path,
                     const CharacteristicSchema& schema = CharacteristicSchema::lidc());

// ---- embeddings ------------------------------------------------------------

struct EmbeddingTable {
  std::vector<std::string> ids;
  Matrix vectors;
};

// JSON Lines {"id", "vector"}. Throws FormatError on duplicate ids or
// inconsistent dimensions.
EmbeddingTable read_embeddings(const std::string& path);
void write_embeddings(const std::string& path, const EmbeddingTable& table);

}  // namespace mre
