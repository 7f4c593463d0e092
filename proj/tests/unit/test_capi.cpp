#include "mre/mre.h"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("mre_capi_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::size_t line_count(const std::string& s) {
  return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n'));
}

struct Fixture : ::testing::Test {
  mre_dataset* ds = nullptr;
  void SetUp() override {
    mre_synth_options o;
    mre_synth_options_default(&o);
    o.n_items = 100;
    o.seed = 4;
    ASSERT_EQ(mre_dataset_synthesize(&o, &ds), MRE_OK) << mre_last_error();
  }
  void TearDown() override { mre_dataset_free(ds); }

  mre_model* make_model(const char* cfg = R"({"embedding_dim": 8, "hidden": [16], "seed": 1})") {
    mre_model* m = nullptr;
    EXPECT_EQ(mre_model_create(ds, cfg, &m), MRE_OK) << mre_last_error();
    return m;
  }
};

TEST(CApi, VersionAndErrors) {
  EXPECT_NE(std::string(mre_version()), "");
  double out = 0;
  EXPECT_EQ(mre_set_distance(nullptr, 0, nullptr, 0, 9, &out), MRE_ERR_USAGE);
  EXPECT_NE(std::string(mre_last_error()), "");
  mre_dataset* d = nullptr;
  EXPECT_EQ(mre_dataset_load("/nonexistent/manifest.jsonl", &d), MRE_ERR_DATA);
  EXPECT_EQ(d, nullptr);
}

TEST(CApi, SetDistanceHandCase) {
  const double a[] = {1, 1, 1, 1, 1, 1, 1, 1, 1};
  const double b[] = {1, 1, 1, 1, 1, 1, 1, 1, 2};
  double d = -1;
  ASSERT_EQ(mre_set_distance(a, 1, b, 1, 9, &d), MRE_OK);
  EXPECT_EQ(d, 1.0);
  EXPECT_EQ(mre_set_distance(a, 0, b, 1, 9, &d), MRE_ERR_DATA);
}

TEST(CApi, NormalizeHu) {
  const double hu[] = {-1000, -300, 200, 700, 3000};
  double out[5];
  ASSERT_EQ(mre_normalize_hu(hu, 5, out), MRE_OK);
  EXPECT_DOUBLE_EQ(out[0], 0.0);
  EXPECT_DOUBLE_EQ(out[2], 0.5);
  EXPECT_DOUBLE_EQ(out[4], 1.0);
}

TEST_F(Fixture, DatasetSaveLoadChecksum) {
  EXPECT_EQ(mre_dataset_size(ds), 100u);
  const fs::path dir = scratch("ds");
  ASSERT_EQ(mre_dataset_save(ds, dir.c_str()), MRE_OK) << mre_last_error();
  mre_dataset* back = nullptr;
  ASSERT_EQ(mre_dataset_load(dir.c_str(), &back), MRE_OK) << mre_last_error();
  EXPECT_EQ(mre_dataset_checksum(back), mre_dataset_checksum(ds));
  mre_dataset_free(back);
  fs::remove_all(dir);
}

TEST_F(Fixture, ModelEmbedSaveLoad) {
  mre_model* m = make_model();
  ASSERT_NE(m, nullptr);
  EXPECT_EQ(mre_model_embedding_dim(m), 8u);
  const std::size_t in = mre_model_input_size(m);
  std::vector<double> x(2 * in, 0.25), y(16);
  ASSERT_EQ(mre_model_embed(m, x.data(), 2, y.data()), MRE_OK);
  double norm = 0;
  for (int i = 0; i < 8; ++i) norm += y[i] * y[i];
  EXPECT_NEAR(norm, 1.0, 1e-9);

  const fs::path p = scratch("model.ckpt");
  ASSERT_EQ(mre_model_save(m, p.c_str()), MRE_OK);
  mre_model* back = nullptr;
  ASSERT_EQ(mre_model_load(p.c_str(), &back), MRE_OK) << mre_last_error();
  EXPECT_EQ(mre_model_checksum(back), mre_model_checksum(m));
  std::vector<double> z(16);
  ASSERT_EQ(mre_model_embed(back, x.data(), 2, z.data()), MRE_OK);
  for (int i = 0; i < 16; ++i) EXPECT_NEAR(z[i], y[i], 1e-6);
  mre_model_free(back);
  mre_model_free(m);
  fs::remove(p);
}

TEST_F(Fixture, TrainWritesHistory) {
  mre_model* m = make_model();
  const int train[] = {0, 1, 2};
  const int val[] = {3};
  const fs::path h = scratch("history.csv");
  const std::uint64_t before = mre_model_checksum(m);
  ASSERT_EQ(mre_model_train(m, ds, R"({"mode": "multi_task", "epochs": 1})", train, 3, val,
                            1, h.c_str()),
            MRE_OK)
      << mre_last_error();
  EXPECT_NE(mre_model_checksum(m), before);
  EXPECT_GE(line_count(slurp(h)), 4u);
  EXPECT_EQ(mre_model_train(m, ds, R"({"mode": "nonsense"})", train, 3, nullptr, 0, nullptr),
            MRE_ERR_USAGE);
  mre_model_free(m);
  fs::remove(h);
}

TEST(CApi, IndexKnnAndHubness) {
  const char* ids[] = {"a", "b", "c", "d"};
  const double v[] = {1, 0, 0, 1, -1, 0, 0, -1};
  mre_index* idx = nullptr;
  ASSERT_EQ(mre_index_create(ids, v, 4, 2, 1, &idx), MRE_OK) << mre_last_error();
  const double q[] = {0.995037190209989, 0.0995037190209989};
  size_t pos[2];
  double dist[2];
  ASSERT_EQ(mre_index_knn(idx, q, 2, pos, dist), MRE_OK);
  EXPECT_EQ(pos[0], 0u);
  EXPECT_EQ(pos[1], 1u);
  EXPECT_LE(dist[0], dist[1]);
  size_t counts[4];
  ASSERT_EQ(mre_index_k_occurrences(idx, 2, counts), MRE_OK);
  EXPECT_EQ(counts[0] + counts[1] + counts[2] + counts[3], 8u);
  const size_t ks[] = {2};
  double h = 0;
  ASSERT_EQ(mre_index_hubness(idx, ks, 1, &h), MRE_OK);
  EXPECT_NEAR(h, 1.0, 1e-12);
  mre_index_free(idx);

  const double off[] = {2, 0, 0, 1, -1, 0, 0, -1};
  EXPECT_EQ(mre_index_create(ids, off, 4, 2, 1, &idx), MRE_ERR_DATA);
}

TEST_F(Fixture, EvaluateAndRetrieve) {
  mre_model* m = make_model();
  const fs::path dir = scratch("eval");
  const int g[] = {4};
  ASSERT_EQ(mre_evaluate(ds, m, nullptr, g, 1, 5, dir.c_str()), MRE_OK) << mre_last_error();
  for (const char* f : {"metrics.csv", "k_occurrences.csv", "hub_report.txt", "embeddings.jsonl",
                        "regression.csv"})
    EXPECT_TRUE(fs::exists(dir / f)) << f;
  EXPECT_EQ(line_count(slurp(dir / "k_occurrences.csv")), 1u + 20u * 5u);

  const fs::path dir2 = scratch("eval2");
  const std::string emb = (dir / "embeddings.jsonl").string();
  ASSERT_EQ(mre_evaluate(ds, nullptr, emb.c_str(), g, 1, 5, dir2.c_str()), MRE_OK)
      << mre_last_error();
  EXPECT_EQ(mre_evaluate(ds, m, emb.c_str(), g, 1, 5, dir2.c_str()), MRE_ERR_USAGE);
  EXPECT_EQ(mre_evaluate(ds, nullptr, nullptr, g, 1, 5, dir2.c_str()), MRE_ERR_USAGE);

  char* table = nullptr;
  ASSERT_EQ(mre_retrieve(ds, m, "n000007", 4, &table), MRE_OK) << mre_last_error();
  const std::string t(table);
  mre_string_free(table);
  EXPECT_EQ(line_count(t), 5u);
  EXPECT_EQ(t.rfind("rank,id,distance", 0), 0u);
  EXPECT_EQ(t.find(",n000007,"), std::string::npos);
  EXPECT_EQ(mre_retrieve(ds, m, "missing", 4, &table), MRE_ERR_DATA);
  mre_model_free(m);
  fs::remove_all(dir);
  fs::remove_all(dir2);
}

}  // namespace
