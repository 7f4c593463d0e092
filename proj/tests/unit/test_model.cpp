#include "mre/model.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <sstream>

#include "mre/error.hpp"
#include "oracles.hpp"

namespace mre {
namespace {

ModelConfig feature_config(std::uint64_t seed = 1) {
  ModelConfig c;
  c.input_dim = 6;
  c.hidden = {5, 4};
  c.embedding_dim = 3;
  c.rating_dim = 2;
  c.seed = seed;
  return c;
}

ModelConfig patch_config() {
  ModelConfig c;
  c.input_kind = InputKind::image_patch;
  c.patch_height = 7;
  c.patch_width = 6;
  c.hidden = {3};
  c.embedding_dim = 4;
  c.rating_dim = 2;
  c.seed = 2;
  return c;
}

// Scalar test objective <A, embeddings> + <B, ratings> and its parameter gradients.
void check_parameter_gradients(EmbeddingModel& model, const Matrix& x) {
  Rng rng(77);
  const Matrix probe = model.forward(x);
  const Matrix a = testing::random_matrix(rng, probe.rows(), probe.cols());
  const Matrix b = testing::random_matrix(rng, probe.rows(), static_cast<Eigen::Index>(model.config().rating_dim));
  auto objective = [&] {
    const Matrix e = model.forward(x);
    return (a.array() * e.array()).sum() + (b.array() * model.rating_head(e).array()).sum();
  };
  ForwardTrace trace;
  model.forward(x, trace);
  const Gradients g = model.backward(trace, a, b);
  ASSERT_EQ(g.size(), model.parameters().size());
  for (std::size_t p = 0; p < g.size(); ++p) {
    Matrix& param = model.parameters()[p];
    const Matrix numeric = testing::numeric_gradient(
        [&](const Matrix& v) {
          const Matrix saved = param;
          param = v;
          const double f = objective();
          param = saved;
          return f;
        },
        param);
    EXPECT_LT(testing::max_relative_error(g[p], numeric), 1e-5) << "parameter " << p;
  }
}

TEST(Config, ValidationAndJson) {
  ModelConfig c = feature_config();
  EXPECT_NO_THROW(c.validate());
  const ModelConfig back = ModelConfig::from_json(c.to_json());
  EXPECT_EQ(back.to_json(), c.to_json());
  c.embedding_dim = 1;
  EXPECT_THROW(c.validate(), ConfigError);
  EXPECT_THROW(ModelConfig::from_json("{\"input_kind\": \"audio\"}"), ConfigError);
  EXPECT_THROW(ModelConfig::from_json("not json"), FormatError);
}

TEST(Forward, UnitNormRows) {
  const EmbeddingModel m(feature_config());
  Rng rng(3);
  const Matrix e = m.forward(testing::random_matrix(rng, 7, 6));
  ASSERT_EQ(e.cols(), 3);
  for (Eigen::Index i = 0; i < e.rows(); ++i) EXPECT_NEAR(e.row(i).norm(), 1.0, 1e-12);
}

TEST(Forward, SeedDeterminesInitialization) {
  EXPECT_EQ(EmbeddingModel(feature_config(5)).checksum(), EmbeddingModel(feature_config(5)).checksum());
  EXPECT_NE(EmbeddingModel(feature_config(5)).checksum(), EmbeddingModel(feature_config(6)).checksum());
}

TEST(Forward, RatingHeadStartsAtOffset) {
  ModelConfig c = feature_config();
  c.rating_offset = 3.5;
  EmbeddingModel m(c);
  for (std::size_t p = 0; p + 1 < m.parameters().size(); ++p) m.parameters()[p].setConstant(0.1);
  m.parameters().back().setConstant(3.5);
  m.parameters()[m.parameters().size() - 2].setZero();
  Rng rng(1);
  const Matrix r = m.rating_head(m.forward(testing::random_matrix(rng, 2, 6)));
  EXPECT_NEAR(r(1, 1), 3.5, 1e-12);
  EXPECT_NEAR(EmbeddingModel(c).parameters().back().mean(), 3.5, 1.0);
}

TEST(Forward, ZeroNormIsDegenerate) {
  EmbeddingModel m(feature_config());
  for (auto& p : m.parameters()) p.setZero();
  EXPECT_THROW(m.forward(Matrix::Ones(2, 6)), DegenerateError);
}

TEST(Forward, WrongInputWidth) {
  const EmbeddingModel m(feature_config());
  EXPECT_THROW(m.forward(Matrix::Ones(2, 5)), DomainError);
}

TEST(Forward, ConvolutionMatchesDirectSum) {
  const EmbeddingModel m(patch_config());
  Rng rng(8);
  const Matrix x = testing::random_matrix(rng, 2, 42, 0, 1);
  const auto& p = m.parameters();
  const Matrix& w = p[0];
  const Matrix& bias = p[1];
  // 7x6 -> 4x3 at stride 2 with one pixel of zero padding.
  Matrix expect(2, 4);
  for (Eigen::Index i = 0; i < 2; ++i) {
    Vector pooled = Vector::Constant(3, -1e300);
    for (Eigen::Index oc = 0; oc < 3; ++oc) {
      for (int oy = 0; oy < 4; ++oy) {
        for (int ox = 0; ox < 3; ++ox) {
          double s = bias(0, oc);
          for (int ky = 0; ky < 3; ++ky) {
            for (int kx = 0; kx < 3; ++kx) {
              const int y = 2 * oy + ky - 1, xx = 2 * ox + kx - 1;
              if (y < 0 || y >= 7 || xx < 0 || xx >= 6) continue;
              s += w(oc, ky * 3 + kx) * x(i, y * 6 + xx);
            }
          }
          pooled(oc) = std::max(pooled(oc), std::max(0.0, s));
        }
      }
    }
    Vector e = p[2] * pooled + p[3].row(0).transpose();
    expect.row(i) = e.normalized().transpose();
  }
  EXPECT_LT((m.forward(x) - expect).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Backward, FeatureModelMatchesFiniteDifferences) {
  EmbeddingModel m(feature_config());
  Rng rng(4);
  check_parameter_gradients(m, testing::random_matrix(rng, 5, 6));
}

TEST(Backward, PatchModelMatchesFiniteDifferences) {
  EmbeddingModel m(patch_config());
  Rng rng(5);
  check_parameter_gradients(m, testing::random_matrix(rng, 3, 42, 0, 1));
}

TEST(Checkpoint, RoundTripPreservesOutputs) {
  const EmbeddingModel m(feature_config());
  std::stringstream ss;
  m.save(ss);
  const EmbeddingModel back = EmbeddingModel::load(ss);
  // Parameters are stored as float32 and initialization already rounds to float.
  EXPECT_EQ(back.checksum(), m.checksum());
  EXPECT_EQ(back.config().to_json(), m.config().to_json());
  Rng rng(6);
  const Matrix x = testing::random_matrix(rng, 4, 6);
  EXPECT_TRUE(back.forward(x) == m.forward(x));
}

TEST(Checkpoint, RejectsCorruptFiles) {
  const EmbeddingModel m(feature_config());
  std::stringstream ss;
  m.save(ss);
  const std::string bytes = ss.str();

  std::stringstream magic("XREv1" + bytes.substr(5));
  EXPECT_THROW(EmbeddingModel::load(magic), FormatError);
  std::stringstream truncated(bytes.substr(0, bytes.size() - 3));
  EXPECT_THROW(EmbeddingModel::load(truncated), FormatError);
  std::stringstream trailing(bytes + "x");
  EXPECT_THROW(EmbeddingModel::load(trailing), FormatError);
  EXPECT_THROW(EmbeddingModel::load(std::string("/nonexistent/model.ckpt")), IoError);
}

}  // namespace
}  // namespace mre
