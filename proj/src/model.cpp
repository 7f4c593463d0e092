#include "mre/model.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include <nlohmann/json.hpp>

#include "mre/error.hpp"
#include "mre/random.hpp"

namespace mre {

using Eigen::Index;
using json = nlohmann::json;

namespace {

constexpr char kMagic[5] = {'M', 'R', 'E', 'v', '1'};

Index conv_out(Index n) { return (n + 2 - 3) / 2 + 1; }

using ConstRowMap = Eigen::Map<const Matrix>;
using RowMap = Eigen::Map<Matrix>;

// Column matrix (C*9) x (OH*OW) for one C x H x W item.
Matrix im2col(const double* item, const layers::Conv& c) {
  Matrix col = Matrix::Zero(c.in_channels * 9, c.out_height * c.out_width);
  for (Index ch = 0; ch < c.in_channels; ++ch) {
    const double* plane = item + ch * c.height * c.width;
    for (Index ky = 0; ky < 3; ++ky) {
      for (Index kx = 0; kx < 3; ++kx) {
        const Index r = ch * 9 + ky * 3 + kx;
        for (Index oy = 0; oy < c.out_height; ++oy) {
          const Index y = oy * 2 + ky - 1;
          if (y < 0 || y >= c.height) continue;
          for (Index ox = 0; ox < c.out_width; ++ox) {
            const Index x = ox * 2 + kx - 1;
            if (x < 0 || x >= c.width) continue;
            col(r, oy * c.out_width + ox) = plane[y * c.width + x];
          }
        }
      }
    }
  }
  return col;
}

void col2im_add(const Matrix& col, const layers::Conv& c, double* item_grad) {
  for (Index ch = 0; ch < c.in_channels; ++ch) {
    double* plane = item_grad + ch * c.height * c.width;
    for (Index ky = 0; ky < 3; ++ky) {
      for (Index kx = 0; kx < 3; ++kx) {
        const Index r = ch * 9 + ky * 3 + kx;
        for (Index oy = 0; oy < c.out_height; ++oy) {
          const Index y = oy * 2 + ky - 1;
          if (y < 0 || y >= c.height) continue;
          for (Index ox = 0; ox < c.out_width; ++ox) {
            const Index x = ox * 2 + kx - 1;
            if (x < 0 || x >= c.width) continue;
            plane[y * c.width + x] += col(r, oy * c.out_width + ox);
          }
        }
      }
    }
  }
}

Matrix dense_forward(const Matrix& x, const Matrix& w, const Matrix& b) {
  Matrix y = x * w.transpose();
  y.rowwise() += b.row(0);
  return y;
}

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

}  // namespace

std::size_t ModelConfig::input_size() const {
  return input_kind == InputKind::feature_vector ? input_dim : patch_height * patch_width;
}

std::vector<std::size_t> ModelConfig::resolved_hidden() const {
  if (!hidden.empty()) return hidden;
  if (input_kind == InputKind::feature_vector) return {128};
  return {16, 32, 64};
}

void ModelConfig::validate() const {
  if (embedding_dim < 2) throw ConfigError("embedding_dim must be at least 2");
  if (rating_dim < 1) throw ConfigError("rating_dim must be positive");
  if (input_kind == InputKind::feature_vector && input_dim < 1)
    throw ConfigError("input_dim must be positive");
  if (input_kind == InputKind::image_patch && (patch_height < 1 || patch_width < 1))
    throw ConfigError("patch size must be positive");
  for (auto w : resolved_hidden()) {
    if (w < 1) throw ConfigError("hidden widths must be positive");
  }
}

std::string ModelConfig::to_json() const {
  json j;
  j["input_kind"] = input_kind == InputKind::feature_vector ? "feature_vector" : "image_patch";
  j["input_dim"] = input_dim;
  j["patch_height"] = patch_height;
  j["patch_width"] = patch_width;
  j["embedding_dim"] = embedding_dim;
  j["hidden"] = resolved_hidden();
  j["rating_dim"] = rating_dim;
  j["rating_offset"] = rating_offset;
  j["seed"] = seed;
  return j.dump();
}

ModelConfig ModelConfig::from_json(const std::string& text) {
  ModelConfig c;
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw FormatError(std::string("model config is not valid JSON: ") + e.what());
  }
  try {
    if (j.contains("input_kind")) {
      const auto kind = j["input_kind"].get<std::string>();
      if (kind == "feature_vector" || kind == "features") {
        c.input_kind = InputKind::feature_vector;
      } else if (kind == "image_patch" || kind == "patch") {
        c.input_kind = InputKind::image_patch;
      } else {
        throw ConfigError("unknown input_kind '" + kind + "'");
      }
    }
    c.input_dim = j.value("input_dim", c.input_dim);
    c.patch_height = j.value("patch_height", c.patch_height);
    c.patch_width = j.value("patch_width", c.patch_width);
    c.embedding_dim = j.value("embedding_dim", c.embedding_dim);
    c.hidden = j.value("hidden", c.hidden);
    c.rating_dim = j.value("rating_dim", c.rating_dim);
    c.rating_offset = j.value("rating_offset", c.rating_offset);
    c.seed = j.value("seed", c.seed);
  } catch (const json::exception& e) {
    throw FormatError(std::string("model config has a malformed field: ") + e.what());
  }
  c.validate();
  return c;
}

EmbeddingModel::EmbeddingModel(const ModelConfig& config) : config_(config) {
  config_.validate();
  config_.hidden = config_.resolved_hidden();
  Rng rng(config_.seed);

  auto add_param = [&](Index rows, Index cols, Index fan_in, bool is_bias) {
    const double bound = is_bias ? 1.0 / std::sqrt(static_cast<double>(fan_in))
                                 : std::sqrt(6.0 / static_cast<double>(fan_in));
    Matrix p(rows, cols);
    // Rounded to float so a checkpoint reproduces the initialization exactly.
    for (Index i = 0; i < p.size(); ++i) p.data()[i] = static_cast<float>(rng.uniform(-bound, bound));
    params_.push_back(std::move(p));
    return params_.size() - 1;
  };
  auto add_dense = [&](Index in, Index out) {
    layers::Dense d;
    d.in = in;
    d.out = out;
    d.weight = add_param(out, in, in, false);
    d.bias = add_param(1, out, in, true);
    return d;
  };

  const auto emb = static_cast<Index>(config_.embedding_dim);
  if (config_.input_kind == InputKind::feature_vector) {
    Index width = static_cast<Index>(config_.input_dim);
    for (auto h : config_.hidden) {
      layers_.emplace_back(add_dense(width, static_cast<Index>(h)));
      layers_.emplace_back(layers::Relu{});
      width = static_cast<Index>(h);
    }
    layers_.emplace_back(add_dense(width, emb));
  } else {
    Index ch = 1, h = static_cast<Index>(config_.patch_height), w = static_cast<Index>(config_.patch_width);
    for (auto out_ch : config_.hidden) {
      layers::Conv c;
      c.in_channels = ch;
      c.out_channels = static_cast<Index>(out_ch);
      c.height = h;
      c.width = w;
      c.out_height = conv_out(h);
      c.out_width = conv_out(w);
      c.weight = add_param(c.out_channels, ch * 9, ch * 9, false);
      c.bias = add_param(1, c.out_channels, ch * 9, true);
      layers_.emplace_back(c);
      layers_.emplace_back(layers::Relu{});
      ch = c.out_channels;
      h = c.out_height;
      w = c.out_width;
    }
    layers_.emplace_back(layers::GlobalMaxPool{ch, h, w});
    layers_.emplace_back(add_dense(ch, emb));
  }
  head_ = add_dense(emb, static_cast<Index>(config_.rating_dim));
  for (Index i = 0; i < params_[head_.bias].size(); ++i) {
    double& b = params_[head_.bias].data()[i];
    b = static_cast<float>(b + config_.rating_offset);
  }
}

Matrix EmbeddingModel::core_forward(const Matrix& inputs, ForwardTrace* trace) const {
  if (inputs.cols() != static_cast<Index>(config_.input_size()))
    throw DomainError("model input has " + std::to_string(inputs.cols()) + " values, expected " +
                      std::to_string(config_.input_size()));
  Matrix x = inputs;
  if (trace) trace->activations.clear();
  for (const auto& layer : layers_) {
    if (trace) trace->activations.push_back(x);
    x = std::visit(
        overloaded{
            [&](const layers::Dense& d) { return dense_forward(x, params_[d.weight], params_[d.bias]); },
            [&](const layers::Relu&) { return Matrix(x.cwiseMax(0.0)); },
            [&](const layers::Conv& c) {
              Matrix y(x.rows(), c.out_channels * c.out_height * c.out_width);
              const Matrix& w = params_[c.weight];
              const Matrix& b = params_[c.bias];
              for (Index i = 0; i < x.rows(); ++i) {
                Matrix out = w * im2col(x.row(i).data(), c);
                out.colwise() += b.row(0).transpose();
                y.row(i) = RowMap(out.data(), 1, out.size());
              }
              return y;
            },
            [&](const layers::GlobalMaxPool& p) {
              Matrix y(x.rows(), p.channels);
              const Index plane = p.height * p.width;
              for (Index i = 0; i < x.rows(); ++i)
                for (Index ch = 0; ch < p.channels; ++ch) y(i, ch) = x.row(i).segment(ch * plane, plane).maxCoeff();
              return y;
            }},
        layer);
  }
  if (trace) trace->activations.push_back(x);
  return x;
}

Matrix EmbeddingModel::forward(const Matrix& inputs) const {
  ForwardTrace trace;
  return forward(inputs, trace);
}

Matrix EmbeddingModel::forward(const Matrix& inputs, ForwardTrace& trace) const {
  const Matrix raw = core_forward(inputs, &trace);
  trace.norms.resize(raw.rows());
  trace.embeddings.resize(raw.rows(), raw.cols());
  for (Index i = 0; i < raw.rows(); ++i) {
    const double n = raw.row(i).norm();
    if (!(n >= 1e-12))
      throw DegenerateError("embedding of item " + std::to_string(i) +
                            " has (near) zero norm before normalization");
    trace.norms(i) = n;
    trace.embeddings.row(i) = raw.row(i) / n;
  }
  return trace.embeddings;
}

Matrix EmbeddingModel::rating_head(const Matrix& embeddings) const {
  return dense_forward(embeddings, params_[head_.weight], params_[head_.bias]);
}

Gradients EmbeddingModel::zero_gradients() const {
  Gradients g;
  g.reserve(params_.size());
  for (const auto& p : params_) g.push_back(Matrix::Zero(p.rows(), p.cols()));
  return g;
}

Gradients EmbeddingModel::backward(const ForwardTrace& trace, const Matrix& grad_embeddings,
                                   const Matrix& grad_ratings) const {
  Gradients grads = zero_gradients();
  const Matrix& emb = trace.embeddings;
  Matrix g_emb = grad_embeddings.size() ? grad_embeddings : Matrix::Zero(emb.rows(), emb.cols());

  if (grad_ratings.size()) {
    grads[head_.weight] += grad_ratings.transpose() * emb;
    grads[head_.bias] += grad_ratings.colwise().sum();
    g_emb += grad_ratings * params_[head_.weight];
  }

  // Through y = x / |x|:  dx = (g - y (y.g)) / |x|
  Matrix g(emb.rows(), emb.cols());
  for (Index i = 0; i < emb.rows(); ++i) {
    const double proj = emb.row(i).dot(g_emb.row(i));
    g.row(i) = (g_emb.row(i) - proj * emb.row(i)) / trace.norms(i);
  }

  for (std::size_t li = layers_.size(); li-- > 0;) {
    const Matrix& x = trace.activations[li];
    g = std::visit(
        overloaded{
            [&](const layers::Dense& d) {
              grads[d.weight] += g.transpose() * x;
              grads[d.bias] += g.colwise().sum();
              return Matrix(g * params_[d.weight]);
            },
            [&](const layers::Relu&) { return Matrix((x.array() > 0.0).select(g, 0.0)); },
            [&](const layers::Conv& c) {
              Matrix gx = Matrix::Zero(x.rows(), x.cols());
              const Matrix& w = params_[c.weight];
              const Index spatial = c.out_height * c.out_width;
              for (Index i = 0; i < x.rows(); ++i) {
                const Matrix col = im2col(x.row(i).data(), c);
                const ConstRowMap gout(g.row(i).data(), c.out_channels, spatial);
                grads[c.weight] += gout * col.transpose();
                grads[c.bias] += gout.rowwise().sum().transpose();
                const Matrix gcol = w.transpose() * gout;
                col2im_add(gcol, c, gx.row(i).data());
              }
              return gx;
            },
            [&](const layers::GlobalMaxPool& p) {
              Matrix gx = Matrix::Zero(x.rows(), x.cols());
              const Index plane = p.height * p.width;
              for (Index i = 0; i < x.rows(); ++i) {
                for (Index ch = 0; ch < p.channels; ++ch) {
                  Index arg = 0;
                  x.row(i).segment(ch * plane, plane).maxCoeff(&arg);
                  gx(i, ch * plane + arg) += g(i, ch);
                }
              }
              return gx;
            }},
        layers_[li]);
  }
  return grads;
}

std::size_t EmbeddingModel::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += static_cast<std::size_t>(p.size());
  return n;
}

std::uint64_t EmbeddingModel::checksum() const {
  std::uint64_t h = fnv1a(nullptr, 0);
  // Over the float32 values a checkpoint stores.
  for (const auto& p : params_) {
    for (Index i = 0; i < p.size(); ++i) {
      const float f = static_cast<float>(p.data()[i]);
      h = fnv1a(&f, sizeof f, h);
    }
  }
  return h;
}

namespace {

void write_u32_le(std::ostream& os, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t read_u32_le(std::istream& is) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) throw FormatError("checkpoint truncated");
  return static_cast<std::uint32_t>(b[0]) | static_cast<std::uint32_t>(b[1]) << 8 |
         static_cast<std::uint32_t>(b[2]) << 16 | static_cast<std::uint32_t>(b[3]) << 24;
}

}  // namespace

void EmbeddingModel::save(std::ostream& os) const {
  const std::string cfg = config_.to_json();
  os.write(kMagic, sizeof(kMagic));
  write_u32_le(os, static_cast<std::uint32_t>(cfg.size()));
  os.write(cfg.data(), static_cast<std::streamsize>(cfg.size()));
  for (const auto& p : params_) {
    for (Index i = 0; i < p.size(); ++i) write_u32_le(os, std::bit_cast<std::uint32_t>(static_cast<float>(p.data()[i])));
  }
  if (!os) throw IoError("failed writing checkpoint");
}

void EmbeddingModel::save(const std::string& path) const {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open '" + path + "' for writing");
  save(os);
}

EmbeddingModel EmbeddingModel::load(std::istream& is) {
  char magic[5];
  if (!is.read(magic, 5) || std::memcmp(magic, kMagic, 5) != 0)
    throw FormatError("not a checkpoint (bad magic)");
  const std::uint32_t len = read_u32_le(is);
  std::string cfg(len, '\0');
  if (!is.read(cfg.data(), len)) throw FormatError("checkpoint truncated in config");
  EmbeddingModel model(ModelConfig::from_json(cfg));
  for (auto& p : model.params_) {
    for (Index i = 0; i < p.size(); ++i) p.data()[i] = std::bit_cast<float>(read_u32_le(is));
  }
  if (is.peek() != std::char_traits<char>::eof()) throw FormatError("checkpoint has trailing bytes");
  return model;
}

EmbeddingModel EmbeddingModel::load(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open checkpoint '" + path + "'");
  return load(is);
}

}  // namespace mre
