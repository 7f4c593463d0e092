#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <variant>
#include <vector>

#include "mre/types.hpp"

namespace mre {

enum class InputKind { feature_vector, image_patch };

struct ModelConfig {
  InputKind input_kind = InputKind::feature_vector;
  // Feature length for feature_vector inputs.
  std::size_t input_dim = 32;
  // Single-channel patch geometry for image_patch inputs (64mm at 0.5mm/px).
  std::size_t patch_height = 128;
  std::size_t patch_width = 128;
  std::size_t embedding_dim = 128;
  // Layer widths (feature_vector) or conv channel counts (image_patch).
  // Empty selects the default for the input kind.
  std::vector<std::size_t> hidden;
  std::size_t rating_dim = 9;
  // Initial rating head bias; the midpoint of the 1..6 rating scale.
  double rating_offset = 3.5;
  std::uint64_t seed = 0;

  std::size_t input_size() const;
  std::vector<std::size_t> resolved_hidden() const;
  void validate() const;

  std::string to_json() const;
  static ModelConfig from_json(const std::string& text);
};

namespace layers {

struct Dense {
  Eigen::Index in = 0, out = 0;
  std::size_t weight = 0, bias = 0;  // parameter slots
};

struct Relu {};

// 3x3 convolution, stride 2, zero padding 1, over C x H x W row-major items.
struct Conv {
  Eigen::Index in_channels = 0, out_channels = 0;
  Eigen::Index height = 0, width = 0, out_height = 0, out_width = 0;
  std::size_t weight = 0, bias = 0;
};

struct GlobalMaxPool {
  Eigen::Index channels = 0, height = 0, width = 0;
};

}  // namespace layers

using Layer = std::variant<layers::Dense, layers::Relu, layers::Conv, layers::GlobalMaxPool>;

// Intermediate activations recorded by a training forward pass.
struct ForwardTrace {
  std::vector<Matrix> activations;  // input of each core layer, then the raw core output
  Vector norms;                     // pre-normalization norms per row
  Matrix embeddings;                // unit-norm rows
};

using Gradients = std::vector<Matrix>;

// Embedding core followed by L2 normalization, plus a linear rating head.
// Parameters are held in declaration order: each core layer's weight then
// bias, then the head's weight and bias.
class EmbeddingModel {
 public:
  explicit EmbeddingModel(const ModelConfig& config);

  const ModelConfig& config() const { return config_; }

  // Rows of `inputs` are items; returns unit-norm embedding rows. Throws
  // DegenerateError when a pre-normalization vector has norm below 1e-12.
  Matrix forward(const Matrix& inputs) const;
  Matrix forward(const Matrix& inputs, ForwardTrace& trace) const;

  // Linear head, unbounded output.
  Matrix rating_head(const Matrix& embeddings) const;

  // Gradients of a loss given its gradient w.r.t. the embeddings and w.r.t.
  // the rating head output (either may be empty to mean zero).
  Gradients backward(const ForwardTrace& trace, const Matrix& grad_embeddings,
                     const Matrix& grad_ratings) const;

  std::vector<Matrix>& parameters() { return params_; }
  const std::vector<Matrix>& parameters() const { return params_; }
  std::size_t parameter_count() const;
  std::uint64_t checksum() const;
  Gradients zero_gradients() const;

  const std::vector<Layer>& layers() const { return layers_; }

  // Checkpoint: "MREv1", u32 LE config length, config JSON, then every
  // parameter as little-endian float32 in declaration order.
  void save(std::ostream& os) const;
  void save(const std::string& path) const;
  static EmbeddingModel load(std::istream& is);
  static EmbeddingModel load(const std::string& path);

 private:
  Matrix core_forward(const Matrix& inputs, ForwardTrace* trace) const;

  ModelConfig config_;
  std::vector<Layer> layers_;
  layers::Dense head_;
  std::vector<Matrix> params_;
};

}  // namespace mre
