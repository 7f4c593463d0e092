#include "mre/trainer.hpp"

#include <gtest/gtest.h>

#include "mre/dataset.hpp"
#include "mre/error.hpp"
#include "oracles.hpp"

namespace mre {
namespace {

ModelConfig small_model(std::uint64_t seed = 1) {
  ModelConfig c;
  c.input_dim = 32;
  c.hidden = {16};
  c.embedding_dim = 8;
  c.seed = seed;
  return c;
}

TrainingData small_data(std::size_t n, std::uint64_t seed = 2) {
  SyntheticOptions o;
  o.n_items = n;
  o.seed = seed;
  const Dataset ds = generate_synthetic(o);
  const std::vector<int> all = {0, 1, 2, 3, 4};
  return ds.training_data(all, LabelSource::true_ratings);
}

TEST(Schedule, MultiTaskDefaults) {
  const auto s = TrainSchedule::make(TrainMode::multi_task, 4);
  ASSERT_EQ(s.steps.size(), 3u);
  EXPECT_EQ(s.steps[0].w_reg, 0.9);
  EXPECT_EQ(s.steps[0].w_sim, 0.1);
  EXPECT_EQ(s.steps[1].w_reg, 0.5);
  EXPECT_EQ(s.steps[1].w_sim, 0.5);
  EXPECT_EQ(s.steps[2].w_reg, 0.0);
  EXPECT_EQ(s.steps[2].w_sim, 0.1);
  EXPECT_EQ(s.total_epochs(), 12u);
  EXPECT_EQ(s.similarity_loss, SimilarityLoss::dm_kl);
  EXPECT_EQ(s.optimizer, OptimizerKind::sgd);
  EXPECT_EQ(s.learning_rate, 0.01);
  EXPECT_EQ(s.batch_size, 32u);
}

TEST(Schedule, OtherModes) {
  EXPECT_EQ(TrainSchedule::make(TrainMode::regression_only, 2).steps.size(), 1u);
  EXPECT_EQ(TrainSchedule::make(TrainMode::similarity_only, 2).steps[0].w_reg, 0.0);
  const auto ft = TrainSchedule::make(TrainMode::two_step_finetune, 2);
  ASSERT_EQ(ft.steps.size(), 2u);
  EXPECT_EQ(ft.steps[1].w_sim, 1.0);
}

TEST(Schedule, NamesRoundTrip) {
  for (auto l : {SimilarityLoss::dm_logcosh, SimilarityLoss::dm_pearson, SimilarityLoss::dm_ranked_pearson,
                 SimilarityLoss::dm_kl, SimilarityLoss::siamese})
    EXPECT_EQ(similarity_loss_from_string(to_string(l)), l);
  for (auto m : {TrainMode::regression_only, TrainMode::similarity_only, TrainMode::two_step_finetune,
                 TrainMode::multi_task})
    EXPECT_EQ(train_mode_from_string(to_string(m)), m);
  EXPECT_EQ(optimizer_from_string("adam"), OptimizerKind::adam);
}

TEST(Schedule, UnknownLossListsChoices) {
  try {
    similarity_loss_from_string("triplet");
    FAIL();
  } catch (const UsageError& e) {
    const std::string msg = e.what();
    for (const char* name : {"dm_logcosh", "dm_pearson", "dm_ranked_pearson", "dm_kl", "siamese", "regression"})
      EXPECT_NE(msg.find(name), std::string::npos) << name;
  }
  EXPECT_THROW(train_mode_from_string("cosine"), UsageError);
}

TEST(Schedule, JsonRoundTripAndValidation) {
  auto s = TrainSchedule::make(TrainMode::two_step_finetune, 3);
  s.optimizer = OptimizerKind::momentum;
  s.learning_rate = 0.2;
  s.seed = 99;
  s.softmax_sign = SoftmaxSign::negative;
  EXPECT_EQ(TrainSchedule::from_json(s.to_json()).to_json(), s.to_json());
  EXPECT_THROW(TrainSchedule::from_json(R"({"batch_size": 2})"), ConfigError);
  EXPECT_THROW(TrainSchedule::from_json(R"({"learning_rate": 0})"), ConfigError);
  EXPECT_THROW(TrainSchedule::from_json(R"({"steps": [{"w_reg": -1, "w_sim": 0, "epochs": 1}]})"), ConfigError);
  EXPECT_THROW(TrainSchedule::from_json("{"), FormatError);
}

class BatchGradient : public ::testing::TestWithParam<SimilarityLoss> {};

TEST_P(BatchGradient, EndToEndMatchesFiniteDifferences) {
  EmbeddingModel model(small_model());
  const TrainingData data = small_data(20);
  const Matrix x = data.inputs.topRows(6);
  const std::span<const RatingSet> sets(data.rating_sets.data(), 6);
  const ScheduleStep weights{0.4, 0.6, 1};
  const BatchLoss bl = batch_loss(model, x, sets, weights, GetParam());
  for (std::size_t p = 0; p < model.parameters().size(); ++p) {
    Matrix& param = model.parameters()[p];
    const Matrix numeric = testing::numeric_gradient(
        [&](const Matrix& v) {
          const Matrix saved = param;
          param = v;
          const double f = batch_loss(model, x, sets, weights, GetParam()).value;
          param = saved;
          return f;
        },
        param);
    EXPECT_LT(testing::max_relative_error(bl.gradients[p], numeric, 1e-5), 1e-4) << "parameter " << p;
  }
}

INSTANTIATE_TEST_SUITE_P(Losses, BatchGradient,
                         ::testing::Values(SimilarityLoss::dm_logcosh, SimilarityLoss::dm_pearson,
                                           SimilarityLoss::dm_ranked_pearson, SimilarityLoss::dm_kl,
                                           SimilarityLoss::siamese));

TEST(Train, ZeroEpochsLeavesModelUntouched) {
  EmbeddingModel model(small_model());
  const auto before = model.checksum();
  const auto h = train(model, small_data(30), TrainSchedule::make(TrainMode::multi_task, 0));
  EXPECT_TRUE(h.epochs.empty());
  EXPECT_EQ(model.checksum(), before);
}

TEST(Train, DeterministicPerSeed) {
  const TrainingData data = small_data(60);
  auto s = TrainSchedule::make(TrainMode::multi_task, 1);
  s.batch_size = 16;
  EmbeddingModel a(small_model()), b(small_model()), c(small_model());
  train(a, data, s);
  train(b, data, s);
  s.seed = 1;
  train(c, data, s);
  EXPECT_EQ(a.checksum(), b.checksum());
  EXPECT_NE(a.checksum(), c.checksum());
}

TEST(Train, ReducesLossAndReportsHistory) {
  const TrainingData data = small_data(120);
  const TrainingData val = small_data(40, 9);
  auto s = TrainSchedule::make(TrainMode::regression_only, 15);
  s.optimizer = OptimizerKind::adam;
  s.learning_rate = 0.003;
  EmbeddingModel model(small_model());
  std::size_t calls = 0;
  const auto h = train(model, data, s, &val, [&](const EpochRecord&, const EmbeddingModel&) { ++calls; });
  ASSERT_EQ(h.epochs.size(), 15u);
  EXPECT_EQ(calls, 15u);
  EXPECT_EQ(h.epochs.front().epoch, 1u);
  EXPECT_LT(h.epochs.back().train_loss, h.epochs.front().train_loss);
  EXPECT_LT(h.epochs.back().val_regression_loss, h.epochs.front().val_regression_loss);
  EXPECT_FALSE(std::isnan(h.epochs.back().val_correlation));
}

TEST(Train, ConstantRowsSkipTheBatch) {
  TrainingData data = small_data(12);
  for (auto& s : data.rating_sets) s = RatingSet({RatingVector(9, 3.0)});
  auto s = TrainSchedule::make(TrainMode::similarity_only, 2);
  s.similarity_loss = SimilarityLoss::dm_pearson;
  s.batch_size = 5;
  EmbeddingModel model(small_model());
  const auto before = model.checksum();
  const auto h = train(model, data, s);
  // Batches of 5, 5 and a trailing 2 that joins the second.
  EXPECT_EQ(h.skipped_batches, 4u);
  EXPECT_EQ(h.epochs[0].skipped_batches, 2u);
  EXPECT_TRUE(std::isnan(h.epochs[0].train_loss));
  EXPECT_EQ(model.checksum(), before);
}

TEST(Train, RejectsTinyData) {
  EmbeddingModel model(small_model());
  TrainingData data = small_data(12);
  data.inputs = data.inputs.topRows(2).eval();
  data.rating_sets.resize(2);
  data.ids.resize(2);
  EXPECT_THROW(train(model, data, TrainSchedule::make(TrainMode::multi_task, 1)), DomainError);
}

TEST(Predict, ClampsToSchema) {
  EmbeddingModel model(small_model());
  model.parameters().back().setConstant(50.0);
  const auto pred = predict_ratings(model, small_data(12).inputs, CharacteristicSchema::lidc());
  for (const auto& p : pred)
    for (double v : p) EXPECT_EQ(v, 6.0);
}

}  // namespace
}  // namespace mre
