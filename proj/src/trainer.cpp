#include "mre/trainer.hpp"

#include <algorithm>
#include <cmath>

#include <nlohmann/json.hpp>

#include "mre/error.hpp"
#include "mre/random.hpp"
#include "mre/retrieval.hpp"

namespace mre {

using Eigen::Index;
using json = nlohmann::json;

std::string_view to_string(TrainMode m) {
  switch (m) {
    case TrainMode::regression_only: return "regression_only";
    case TrainMode::similarity_only: return "similarity_only";
    case TrainMode::two_step_finetune: return "two_step_finetune";
    case TrainMode::multi_task: return "multi_task";
  }
  return "";
}

std::string_view to_string(SimilarityLoss l) {
  switch (l) {
    case SimilarityLoss::dm_logcosh: return "dm_logcosh";
    case SimilarityLoss::dm_pearson: return "dm_pearson";
    case SimilarityLoss::dm_ranked_pearson: return "dm_ranked_pearson";
    case SimilarityLoss::dm_kl: return "dm_kl";
    case SimilarityLoss::siamese: return "siamese";
  }
  return "";
}

std::string_view to_string(OptimizerKind o) {
  switch (o) {
    case OptimizerKind::sgd: return "sgd";
    case OptimizerKind::momentum: return "momentum";
    case OptimizerKind::adam: return "adam";
  }
  return "";
}

TrainMode train_mode_from_string(std::string_view s) {
  for (auto m : {TrainMode::regression_only, TrainMode::similarity_only,
                 TrainMode::two_step_finetune, TrainMode::multi_task})
    if (to_string(m) == s) return m;
  throw UsageError("unknown schedule '" + std::string(s) +
                   "' (expected regression_only, similarity_only, two_step_finetune, multi_task)");
}

SimilarityLoss similarity_loss_from_string(std::string_view s) {
  for (auto l : {SimilarityLoss::dm_logcosh, SimilarityLoss::dm_pearson,
                 SimilarityLoss::dm_ranked_pearson, SimilarityLoss::dm_kl, SimilarityLoss::siamese})
    if (to_string(l) == s) return l;
  throw UsageError("unknown loss '" + std::string(s) +
                   "' (expected dm_logcosh, dm_pearson, dm_ranked_pearson, dm_kl, siamese, regression)");
}

OptimizerKind optimizer_from_string(std::string_view s) {
  for (auto o : {OptimizerKind::sgd, OptimizerKind::momentum, OptimizerKind::adam})
    if (to_string(o) == s) return o;
  throw UsageError("unknown optimizer '" + std::string(s) + "' (expected sgd, momentum, adam)");
}

TrainSchedule TrainSchedule::make(TrainMode mode, std::size_t epochs_per_step) {
  TrainSchedule s;
  s.mode = mode;
  switch (mode) {
    case TrainMode::regression_only: s.steps = {{1.0, 0.0, epochs_per_step}}; break;
    case TrainMode::similarity_only: s.steps = {{0.0, 1.0, epochs_per_step}}; break;
    case TrainMode::two_step_finetune:
      s.steps = {{1.0, 0.0, epochs_per_step}, {0.0, 1.0, epochs_per_step}};
      break;
    case TrainMode::multi_task:
      s.steps = {{0.9, 0.1, epochs_per_step}, {0.5, 0.5, epochs_per_step}, {0.0, 0.1, epochs_per_step}};
      break;
  }
  return s;
}

std::size_t TrainSchedule::total_epochs() const {
  std::size_t n = 0;
  for (const auto& s : steps) n += s.epochs;
  return n;
}

void TrainSchedule::validate() const {
  if (steps.empty()) throw ConfigError("schedule has no steps");
  for (const auto& s : steps) {
    if (!(s.w_reg >= 0.0) || !(s.w_sim >= 0.0)) throw ConfigError("schedule weights must be nonnegative");
  }
  if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
  if (batch_size < 3) throw ConfigError("batch size must be at least 3");
  if (momentum < 0.0 || momentum >= 1.0) throw ConfigError("momentum must be in [0, 1)");
}

std::string TrainSchedule::to_json() const {
  json j;
  j["mode"] = to_string(mode);
  j["similarity_loss"] = to_string(similarity_loss);
  j["optimizer"] = to_string(optimizer);
  j["learning_rate"] = learning_rate;
  j["momentum"] = momentum;
  j["batch_size"] = batch_size;
  j["seed"] = seed;
  j["softmax_sign"] = softmax_sign == SoftmaxSign::positive ? "positive" : "negative";
  j["steps"] = json::array();
  for (const auto& s : steps) j["steps"].push_back({{"w_reg", s.w_reg}, {"w_sim", s.w_sim}, {"epochs", s.epochs}});
  return j.dump();
}

TrainSchedule TrainSchedule::from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw FormatError(std::string("schedule is not valid JSON: ") + e.what());
  }
  try {
    const TrainMode mode = train_mode_from_string(j.value("mode", std::string("multi_task")));
    TrainSchedule s = make(mode, j.value("epochs", std::size_t{10}));
    if (j.contains("steps")) {
      s.steps.clear();
      for (const auto& st : j["steps"])
        s.steps.push_back({st.at("w_reg").get<double>(), st.at("w_sim").get<double>(),
                           st.at("epochs").get<std::size_t>()});
    }
    s.similarity_loss = similarity_loss_from_string(j.value("similarity_loss", std::string("dm_kl")));
    s.optimizer = optimizer_from_string(j.value("optimizer", std::string("sgd")));
    s.learning_rate = j.value("learning_rate", s.learning_rate);
    s.momentum = j.value("momentum", s.momentum);
    s.batch_size = j.value("batch_size", s.batch_size);
    s.seed = j.value("seed", s.seed);
    const auto sign = j.value("softmax_sign", std::string("positive"));
    if (sign != "positive" && sign != "negative") throw ConfigError("softmax_sign must be positive or negative");
    s.softmax_sign = sign == "positive" ? SoftmaxSign::positive : SoftmaxSign::negative;
    s.validate();
    return s;
  } catch (const json::exception& e) {
    throw FormatError(std::string("schedule has a malformed field: ") + e.what());
  }
}

namespace {

Matrix mean_rating_matrix(std::span<const RatingSet> sets) {
  Matrix m(static_cast<Index>(sets.size()), static_cast<Index>(sets.front().dim()));
  for (std::size_t i = 0; i < sets.size(); ++i) {
    const RatingVector r = mean_rating(sets[i]);
    for (std::size_t c = 0; c < r.size(); ++c) m(static_cast<Index>(i), static_cast<Index>(c)) = r[c];
  }
  return m;
}

// Gradient w.r.t. embedding rows given a gradient on their distance matrix.
Matrix distance_matrix_backward(const Matrix& emb, const Matrix& dist, const Matrix& grad) {
  Matrix g = Matrix::Zero(emb.rows(), emb.cols());
  for (Index i = 0; i < emb.rows(); ++i) {
    for (Index j = 0; j < emb.rows(); ++j) {
      if (i == j || dist(i, j) <= 0.0) continue;
      const double c = (grad(i, j) + grad(j, i)) / dist(i, j);
      g.row(i) += c * (emb.row(i) - emb.row(j));
    }
  }
  return g;
}

LossResult similarity(SimilarityLoss loss, const Matrix& p, const Matrix& t, SoftmaxSign sign) {
  switch (loss) {
    case SimilarityLoss::dm_logcosh: return dm_logcosh(p, t);
    case SimilarityLoss::dm_pearson: return dm_pearson(p, t);
    case SimilarityLoss::dm_ranked_pearson: return dm_ranked_pearson(p, t, sign);
    case SimilarityLoss::dm_kl: return dm_kl(p, t, sign);
    case SimilarityLoss::siamese: break;
  }
  throw ConfigError("siamese loss is not a distance-matrix loss");
}

class Optimizer {
 public:
  Optimizer(const TrainSchedule& s, const EmbeddingModel& model) : s_(s) {
    if (s.optimizer != OptimizerKind::sgd) m_ = model.zero_gradients();
    if (s.optimizer == OptimizerKind::adam) v_ = model.zero_gradients();
  }

  void step(EmbeddingModel& model, const Gradients& g) {
    auto& params = model.parameters();
    ++t_;
    for (std::size_t i = 0; i < params.size(); ++i) {
      switch (s_.optimizer) {
        case OptimizerKind::sgd: params[i] -= s_.learning_rate * g[i]; break;
        case OptimizerKind::momentum:
          m_[i] = s_.momentum * m_[i] + g[i];
          params[i] -= s_.learning_rate * m_[i];
          break;
        case OptimizerKind::adam: {
          constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
          m_[i] = b1 * m_[i] + (1.0 - b1) * g[i];
          v_[i] = b2 * v_[i] + (1.0 - b2) * g[i].cwiseAbs2();
          const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
          const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
          params[i].array() -= s_.learning_rate * (m_[i].array() / c1) /
                               ((v_[i].array() / c2).sqrt() + eps);
          break;
        }
      }
    }
  }

 private:
  const TrainSchedule& s_;
  Gradients m_, v_;
  long t_ = 0;
};

// Item batches for one epoch; a trailing remainder under 3 items joins the
// previous batch so every batch supports the correlation losses.
std::vector<std::vector<std::size_t>> make_batches(std::vector<std::size_t> order, std::size_t b) {
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t i = 0; i < order.size(); i += b)
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                         order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), i + b)));
  if (batches.size() > 1 && batches.back().size() < 3) {
    auto tail = std::move(batches.back());
    batches.pop_back();
    batches.back().insert(batches.back().end(), tail.begin(), tail.end());
  }
  return batches;
}

}  // namespace

BatchLoss batch_loss(const EmbeddingModel& model, const Matrix& inputs,
                     std::span<const RatingSet> sets, const ScheduleStep& weights,
                     SimilarityLoss loss, SoftmaxSign sign) {
  if (static_cast<std::size_t>(inputs.rows()) != sets.size())
    throw DomainError("batch inputs and rating sets differ in length");
  if (!(weights.w_reg >= 0.0) || !(weights.w_sim >= 0.0))
    throw ConfigError("multi-task weights must be nonnegative");
  ForwardTrace trace;
  const Matrix emb = model.forward(inputs, trace);
  const Index b = emb.rows();

  LossResult reg{0.0, Matrix()};
  if (weights.w_reg > 0.0) reg = logcosh_regression(model.rating_head(emb), mean_rating_matrix(sets));

  LossResult sim{0.0, Matrix()};
  Matrix grad_emb;
  if (weights.w_sim > 0.0) {
    if (loss == SimilarityLoss::siamese) {
      // Consecutive items form the pairs (0,1), (2,3), ...
      const Index pairs = b / 2;
      if (pairs < 1) throw DomainError("siamese loss needs at least one pair per batch");
      Matrix ea(pairs, emb.cols()), eb(pairs, emb.cols());
      Vector d(pairs);
      for (Index k = 0; k < pairs; ++k) {
        ea.row(k) = emb.row(2 * k);
        eb.row(k) = emb.row(2 * k + 1);
        d(k) = set_distance(sets[static_cast<std::size_t>(2 * k)], sets[static_cast<std::size_t>(2 * k + 1)]);
      }
      const PairLossResult pr = siamese_distance_loss(ea, eb, d);
      sim.value = pr.value;
      grad_emb = Matrix::Zero(b, emb.cols());
      for (Index k = 0; k < pairs; ++k) {
        grad_emb.row(2 * k) += weights.w_sim * pr.grad_a.row(k);
        grad_emb.row(2 * k + 1) += weights.w_sim * pr.grad_b.row(k);
      }
    } else {
      const Matrix p = pairwise_l2(emb);
      const Matrix t = set_distance_matrix(sets);
      sim = similarity(loss, p, t, sign);
      grad_emb = distance_matrix_backward(emb, p, weights.w_sim * sim.gradient);
    }
  }

  BatchLoss out;
  out.value = weights.w_reg * reg.value + weights.w_sim * sim.value;
  const Matrix grad_ratings = weights.w_reg > 0.0 ? Matrix(weights.w_reg * reg.gradient) : Matrix();
  out.gradients = model.backward(trace, grad_emb, grad_ratings);
  return out;
}

double validation_correlation(const EmbeddingModel& model, const TrainingData& data) {
  if (data.size() < 3) return std::numeric_limits<double>::quiet_NaN();
  const Matrix emb = model.forward(data.inputs);
  return rating_correlation(pairwise_l2(emb), set_distance_matrix(data.rating_sets));
}

double validation_regression_loss(const EmbeddingModel& model, const TrainingData& data) {
  if (data.size() == 0) return std::numeric_limits<double>::quiet_NaN();
  const Matrix pred = model.rating_head(model.forward(data.inputs));
  return logcosh_regression(pred, mean_rating_matrix(data.rating_sets)).value;
}

TrainHistory train(EmbeddingModel& model, const TrainingData& data, const TrainSchedule& schedule,
                   const TrainingData* validation, const EpochCallback& on_epoch) {
  schedule.validate();
  if (data.size() < 3) throw DomainError("training needs at least 3 items");
  if (static_cast<std::size_t>(data.inputs.rows()) != data.size())
    throw DomainError("training inputs and rating sets differ in length");

  TrainHistory history;
  Optimizer opt(schedule, model);
  Rng rng(derive_seed(schedule.seed, 0x5348));
  std::vector<std::size_t> order(data.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  std::size_t epoch = 0;
  for (std::size_t si = 0; si < schedule.steps.size(); ++si) {
    const ScheduleStep& step = schedule.steps[si];
    for (std::size_t e = 0; e < step.epochs; ++e) {
      ++epoch;
      rng.shuffle(order);
      EpochRecord rec;
      rec.epoch = epoch;
      rec.step = si;
      rec.w_reg = step.w_reg;
      rec.w_sim = step.w_sim;
      double loss_sum = 0.0;
      std::size_t used = 0;
      for (const auto& batch : make_batches(order, schedule.batch_size)) {
        Matrix x(static_cast<Index>(batch.size()), data.inputs.cols());
        std::vector<RatingSet> sets;
        sets.reserve(batch.size());
        for (std::size_t r = 0; r < batch.size(); ++r) {
          x.row(static_cast<Index>(r)) = data.inputs.row(static_cast<Index>(batch[r]));
          sets.push_back(data.rating_sets[batch[r]]);
        }
        BatchLoss bl;
        try {
          bl = batch_loss(model, x, sets, step, schedule.similarity_loss, schedule.softmax_sign);
        } catch (const DegenerateError& err) {
          if (err.row() < 0) throw;  // a degenerate embedding is fatal, a constant row is not
          ++rec.skipped_batches;
          continue;
        }
        opt.step(model, bl.gradients);
        loss_sum += bl.value;
        ++used;
      }
      if (used) rec.train_loss = loss_sum / static_cast<double>(used);
      history.skipped_batches += rec.skipped_batches;
      if (validation) {
        try {
          rec.val_correlation = validation_correlation(model, *validation);
        } catch (const DegenerateError&) {
        }
        rec.val_regression_loss = validation_regression_loss(model, *validation);
      }
      history.epochs.push_back(rec);
      if (on_epoch) on_epoch(rec, model);
    }
  }
  return history;
}

std::vector<RatingVector> predict_ratings(const EmbeddingModel& model, const Matrix& inputs,
                                          const CharacteristicSchema& schema) {
  if (model.config().rating_dim != schema.size())
    throw SchemaError("model rating head does not match the schema length");
  const Matrix pred = model.rating_head(model.forward(inputs));
  std::vector<RatingVector> out(static_cast<std::size_t>(pred.rows()), RatingVector(schema.size()));
  for (Index i = 0; i < pred.rows(); ++i) {
    for (std::size_t c = 0; c < schema.size(); ++c) {
      const auto& r = schema.range(c);
      out[static_cast<std::size_t>(i)][c] = std::clamp(pred(i, static_cast<Index>(c)), r.min, r.max);
    }
  }
  return out;
}

}  // namespace mre
