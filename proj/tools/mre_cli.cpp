// Command-line front end over the mre C interface.
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "CLI11.hpp"
#include "mre/mre.h"

namespace {

using json = nlohmann::json;

constexpr const char* kLossNames = "dm_logcosh, dm_pearson, dm_ranked_pearson, dm_kl, siamese, regression";
constexpr const char* kScheduleNames = "regression_only, similarity_only, two_step_finetune, multi_task";
constexpr const char* kRegimeNames = "supervised, semi_supervised, imported_baseline";

struct Failure {
  int code;
};

void check(mre_status s) {
  if (s != MRE_OK) {
    std::cerr << "error: " << mre_last_error() << "\n";
    throw Failure{static_cast<int>(s)};
  }
}

void usage_failure(const std::string& msg) {
  std::cerr << "error: " << msg << "\n";
  throw Failure{MRE_ERR_USAGE};
}

struct DatasetDeleter {
  void operator()(mre_dataset* p) const { mre_dataset_free(p); }
};
struct ModelDeleter {
  void operator()(mre_model* p) const { mre_model_free(p); }
};
using DatasetPtr = std::unique_ptr<mre_dataset, DatasetDeleter>;
using ModelPtr = std::unique_ptr<mre_model, ModelDeleter>;

DatasetPtr load_dataset(const std::string& path) {
  mre_dataset* ds = nullptr;
  check(mre_dataset_load(path.c_str(), &ds));
  return DatasetPtr(ds);
}

ModelPtr load_model(const std::string& path) {
  mre_model* m = nullptr;
  check(mre_model_load(path.c_str(), &m));
  return ModelPtr(m);
}

void make_dir(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) {
    std::cerr << "error: cannot create output directory '" << dir << "': " << ec.message() << "\n";
    throw Failure{MRE_ERR_DATA};
  }
}

// Resolved options of the subcommand, written both as a manifest and as a
// config file that reproduces the run with --config.
void write_run_manifest(const CLI::App& app, const std::string& dir, const std::string& command,
                        std::uint64_t seed) {
  const CLI::App* sub = app.get_subcommand(command);
  // Unset list options render as key="", which would not parse back.
  std::string config = "[" + command + "]\n";
  std::istringstream lines(sub->config_to_str(true, false));
  for (std::string line; std::getline(lines, line);) {
    if (!line.ends_with("=\"\"")) config += line + '\n';
  }
  json options = json::object();
  for (const CLI::Option* o : sub->get_options()) {
    if (o->get_single_name() == "help") continue;
    const auto values = o->as<std::vector<std::string>>();
    if (o->get_expected_max() > 1) {
      options[o->get_single_name()] = values;
    } else {
      options[o->get_single_name()] = values.empty() ? std::string() : values.front();
    }
  }
  json j;
  j["command"] = command;
  j["version"] = mre_version();
  j["seed"] = seed;
  j["options"] = options;
  j["config_file"] = "run_config.toml";
  const auto base = std::filesystem::path(dir);
  std::ofstream os(base / "run_manifest.json");
  std::ofstream cs(base / "run_config.toml");
  if (!os || !cs) {
    std::cerr << "error: cannot write run manifest in '" << dir << "'\n";
    throw Failure{MRE_ERR_DATA};
  }
  os << j.dump(2) << "\n";
  cs << config;
}

struct SynthArgs {
  mre_synth_options opts{};
  std::string out;
};

struct TrainArgs {
  std::string data;
  std::string schedule = "multi_task";
  std::string loss = "dm_kl";
  std::size_t epochs = 10;
  std::uint64_t seed = 0;
  std::string out;
  std::string optimizer = "sgd";
  double learning_rate = 0.01;
  double momentum = 0.9;
  std::size_t batch_size = 32;
  std::size_t embedding_dim = 128;
  std::vector<std::size_t> hidden;
  std::vector<int> train_groups = {0, 1, 2};
  std::vector<int> val_groups = {3};
};

struct EvalArgs {
  std::string data;
  std::string checkpoint;
  std::string embeddings;
  std::vector<int> groups;
  std::size_t hub_k = 2;
  std::string out;
};

struct RetrieveArgs {
  std::string data;
  std::string checkpoint;
  std::string query_id;
  std::size_t k = 4;
  std::string out;
};

struct PipelineArgs {
  std::string data;
  std::vector<std::string> regimes = {"semi_supervised"};
  std::vector<int> configs = {2, 5, 6, 8, 9};
  std::uint64_t seed = 0;
  std::string out;
  std::size_t jobs = 1;
  std::string embeddings;
  std::string loss = "dm_kl";
  std::size_t epochs = 10;
  std::size_t prediction_epochs = 70;
  std::string optimizer = "sgd";
  double learning_rate = 0.01;
  std::size_t batch_size = 32;
  std::size_t embedding_dim = 128;
  std::vector<std::size_t> hidden;
};

json schedule_json(const std::string& mode, const std::string& loss, std::size_t epochs,
                   const std::string& optimizer, double lr, double momentum, std::size_t batch,
                   std::uint64_t seed) {
  json s;
  s["mode"] = loss == "regression" ? "regression_only" : mode;
  if (loss != "regression") s["similarity_loss"] = loss;
  s["epochs"] = epochs;
  s["optimizer"] = optimizer;
  s["learning_rate"] = lr;
  s["momentum"] = momentum;
  s["batch_size"] = batch;
  s["seed"] = seed;
  return s;
}

json model_json(std::size_t embedding_dim, const std::vector<std::size_t>& hidden, std::uint64_t seed) {
  json m;
  m["embedding_dim"] = embedding_dim;
  if (!hidden.empty()) m["hidden"] = hidden;
  m["seed"] = seed;
  return m;
}

void run_synth(const CLI::App& app, const SynthArgs& a) {
  mre_dataset* raw = nullptr;
  check(mre_dataset_synthesize(&a.opts, &raw));
  DatasetPtr ds(raw);
  check(mre_dataset_save(ds.get(), a.out.c_str()));
  write_run_manifest(app, a.out, "synth", a.opts.seed);
  std::cerr << "note: groups are stratified by malignancy class; per-group class counts approximate a "
               "balanced split\n";
  std::printf("wrote %zu items to %s (checksum %016llx)\n", mre_dataset_size(ds.get()), a.out.c_str(),
              static_cast<unsigned long long>(mre_dataset_checksum(ds.get())));
}

void run_train(const CLI::App& app, const TrainArgs& a) {
  const auto ds = load_dataset(a.data);
  const std::string model_cfg = model_json(a.embedding_dim, a.hidden, a.seed).dump();
  mre_model* raw = nullptr;
  check(mre_model_create(ds.get(), model_cfg.c_str(), &raw));
  ModelPtr model(raw);

  const std::string sched =
      schedule_json(a.schedule, a.loss, a.epochs, a.optimizer, a.learning_rate, a.momentum, a.batch_size, a.seed)
          .dump();
  make_dir(a.out);
  const auto history = (std::filesystem::path(a.out) / "history.csv").string();
  check(mre_model_train(model.get(), ds.get(), sched.c_str(), a.train_groups.data(), a.train_groups.size(),
                        a.val_groups.data(), a.val_groups.size(), history.c_str()));
  const auto ckpt = (std::filesystem::path(a.out) / "model.ckpt").string();
  check(mre_model_save(model.get(), ckpt.c_str()));
  write_run_manifest(app, a.out, "train", a.seed);
  std::printf("checkpoint %s (checksum %016llx)\n", ckpt.c_str(),
              static_cast<unsigned long long>(mre_model_checksum(model.get())));
}

void run_eval(const CLI::App& app, const EvalArgs& a) {
  if (a.checkpoint.empty() == a.embeddings.empty())
    usage_failure("eval needs exactly one of --checkpoint or --embeddings");
  const auto ds = load_dataset(a.data);
  ModelPtr model;
  if (!a.checkpoint.empty()) model = load_model(a.checkpoint);
  check(mre_evaluate(ds.get(), model.get(), a.embeddings.empty() ? nullptr : a.embeddings.c_str(),
                     a.groups.data(), a.groups.size(), a.hub_k, a.out.c_str()));
  write_run_manifest(app, a.out, "eval", 0);
  std::printf("wrote metrics to %s\n", a.out.c_str());
}

void run_retrieve(const RetrieveArgs& a) {
  const auto ds = load_dataset(a.data);
  const auto model = load_model(a.checkpoint);
  char* table = nullptr;
  check(mre_retrieve(ds.get(), model.get(), a.query_id.c_str(), a.k, &table));
  const std::string text(table);
  mre_string_free(table);
  if (a.out.empty()) {
    std::cout << text;
    return;
  }
  std::ofstream os(a.out);
  if (!os) {
    std::cerr << "error: cannot write '" << a.out << "'\n";
    throw Failure{MRE_ERR_DATA};
  }
  os << text;
}

void run_pipeline(const CLI::App& app, const PipelineArgs& a) {
  const auto ds = load_dataset(a.data);
  json spec;
  spec["regimes"] = a.regimes;
  spec["configs"] = a.configs;
  spec["seed"] = a.seed;
  spec["jobs"] = a.jobs;
  spec["embeddings"] = a.embeddings;
  spec["model"] = model_json(a.embedding_dim, a.hidden, a.seed);
  spec["retrieval"] = schedule_json("multi_task", a.loss, a.epochs, a.optimizer, a.learning_rate, 0.9,
                                    a.batch_size, a.seed);
  spec["prediction"] = schedule_json("regression_only", "regression", a.prediction_epochs, a.optimizer,
                                     a.learning_rate, 0.9, a.batch_size, a.seed);
  const std::string text = spec.dump();
  check(mre_pipeline_run(ds.get(), text.c_str(), a.out.c_str()));
  write_run_manifest(app, a.out, "pipeline", a.seed);
  std::cerr << "note: groups are stratified by malignancy class; per-group class counts approximate a "
               "balanced split\n";
  std::printf("wrote summary to %s\n", (std::filesystem::path(a.out) / "summary.csv").string().c_str());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Metric-learning retrieval engine for rated image patches"};
  app.set_config("--config", "", "TOML/INI file with option values; command line flags take precedence");
  app.require_subcommand(1);
  app.footer(std::string("Losses: ") + kLossNames + "\nSchedules: " + kScheduleNames +
             "\nRegimes: " + kRegimeNames + "\nExit codes: 0 ok, 2 usage, 3 data/format, 4 numerical");

  SynthArgs synth;
  mre_synth_options_default(&synth.opts);
  auto* s = app.add_subcommand("synth", "Generate a synthetic rated dataset");
  s->add_option("--n", synth.opts.n_items, "Number of items (at least 10)")->capture_default_str();
  s->add_option("--seed", synth.opts.seed, "Random seed")->capture_default_str();
  s->add_option("--out", synth.out, "Output directory")->required();
  s->add_option("--noise", synth.opts.rater_noise, "Rater perturbation std")->capture_default_str();
  s->add_option("--min-raters", synth.opts.min_raters, "Minimum raters per item")->capture_default_str();
  s->add_option("--max-raters", synth.opts.max_raters, "Maximum raters per item")->capture_default_str();
  s->add_option("--feature-dim", synth.opts.feature_dim, "Feature vector length")->capture_default_str();
  s->add_option("--feature-noise", synth.opts.feature_noise, "Feature noise std")->capture_default_str();
  s->add_option("--nuisance-dim", synth.opts.nuisance_dim, "Nuisance factor count")->capture_default_str();
  s->add_option("--nuisance-scale", synth.opts.nuisance_scale, "Nuisance factor std")->capture_default_str();
  s->add_option("--mixing-gain", synth.opts.mixing_gain, "Gain of the feature map")->capture_default_str();

  TrainArgs train;
  auto* t = app.add_subcommand("train", "Train an embedding model");
  t->add_option("--data", train.data, "Dataset manifest or directory")->required();
  t->add_option("--schedule", train.schedule, std::string("Schedule: ") + kScheduleNames)->capture_default_str();
  t->add_option("--loss", train.loss, std::string("Loss: ") + kLossNames)->capture_default_str();
  t->add_option("--epochs", train.epochs, "Epochs per schedule step")->capture_default_str();
  t->add_option("--seed", train.seed, "Seed for initialization and shuffling")->capture_default_str();
  t->add_option("--out", train.out, "Output directory for model.ckpt and history.csv")->required();
  t->add_option("--optimizer", train.optimizer, "sgd, momentum or adam")->capture_default_str();
  t->add_option("--lr", train.learning_rate, "Learning rate")->capture_default_str();
  t->add_option("--momentum", train.momentum, "Momentum coefficient")->capture_default_str();
  t->add_option("--batch-size", train.batch_size, "Mini-batch size")->capture_default_str();
  t->add_option("--embedding-dim", train.embedding_dim, "Embedding length")->capture_default_str();
  t->add_option("--hidden", train.hidden, "Hidden layer widths (channels for patches)")->delimiter(',');
  t->add_option("--train-groups", train.train_groups, "Training groups")->delimiter(',')->capture_default_str();
  t->add_option("--val-groups", train.val_groups, "Validation groups")->delimiter(',')->capture_default_str();

  EvalArgs eval;
  auto* e = app.add_subcommand("eval", "Evaluate a checkpoint or imported embeddings");
  e->add_option("--data", eval.data, "Dataset manifest or directory")->required();
  e->add_option("--checkpoint", eval.checkpoint, "Model checkpoint");
  e->add_option("--embeddings", eval.embeddings, "JSON Lines embeddings {id, vector}");
  e->add_option("--groups", eval.groups, "Restrict to these groups (default all)")->delimiter(',');
  e->add_option("--hub-k", eval.hub_k, "Neighbourhood size for the hub report")->capture_default_str();
  e->add_option("--out", eval.out, "Output directory")->required();

  RetrieveArgs retrieve;
  auto* r = app.add_subcommand("retrieve", "Rank the nearest neighbours of one item");
  r->add_option("--data", retrieve.data, "Dataset manifest or directory")->required();
  r->add_option("--checkpoint", retrieve.checkpoint, "Model checkpoint")->required();
  r->add_option("--query-id", retrieve.query_id, "Query item id")->required();
  r->add_option("--k", retrieve.k, "Number of neighbours")->capture_default_str();
  r->add_option("--out", retrieve.out, "Write the table here instead of stdout");

  PipelineArgs pipe;
  auto* p = app.add_subcommand("pipeline", "Run the cross-validation experiment");
  p->add_option("--data", pipe.data, "Dataset manifest or directory")->required();
  p->add_option("--regime", pipe.regimes, std::string("Regimes: ") + kRegimeNames)
      ->delimiter(',')
      ->capture_default_str();
  p->add_option("--configs", pipe.configs, "Configuration ids 0..9")->delimiter(',')->capture_default_str();
  p->add_option("--seed", pipe.seed, "Experiment seed")->capture_default_str();
  p->add_option("--out", pipe.out, "Output directory")->required();
  p->add_option("--jobs", pipe.jobs, "Configurations run in parallel")->capture_default_str();
  p->add_option("--embeddings", pipe.embeddings, "Embeddings for imported_baseline");
  p->add_option("--loss", pipe.loss, std::string("Retrieval similarity loss: ") + kLossNames)->capture_default_str();
  p->add_option("--epochs", pipe.epochs, "Retrieval epochs per schedule step")->capture_default_str();
  p->add_option("--prediction-epochs", pipe.prediction_epochs, "Maximum rating prediction epochs")
      ->capture_default_str();
  p->add_option("--optimizer", pipe.optimizer, "sgd, momentum or adam")->capture_default_str();
  p->add_option("--lr", pipe.learning_rate, "Learning rate")->capture_default_str();
  p->add_option("--batch-size", pipe.batch_size, "Mini-batch size")->capture_default_str();
  p->add_option("--embedding-dim", pipe.embedding_dim, "Embedding length")->capture_default_str();
  p->add_option("--hidden", pipe.hidden, "Hidden layer widths")->delimiter(',');

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& ex) {
    return app.exit(ex);
  } catch (const CLI::ParseError& ex) {
    app.exit(ex);
    return MRE_ERR_USAGE;
  }

  try {
    if (*s) run_synth(app, synth);
    if (*t) run_train(app, train);
    if (*e) run_eval(app, eval);
    if (*r) run_retrieve(retrieve);
    if (*p) run_pipeline(app, pipe);
  } catch (const Failure& f) {
    return f.code;
  }
  return 0;
}
