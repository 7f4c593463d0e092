#include "mre/dataset.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <map>

#include "mre/error.hpp"
#include "mre/retrieval.hpp"
#include "oracles.hpp"

namespace mre {
namespace {

namespace fs = std::filesystem;

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("mre_dataset_" + name);
  fs::remove_all(p);
  return p;
}

AnnotationRecord annotation(std::string id, std::vector<SliceArea> slices) {
  return {"n1", std::move(id), std::move(slices), RatingVector(9, 3.0)};
}

TEST(Slices, HeaviestRelativeAreaWins) {
  const std::vector<AnnotationRecord> a = {
      annotation("r1", {{10, 5.0}, {11, 10.0}, {12, 4.0}}),
      annotation("r2", {{11, 2.0}, {12, 4.0}}),
  };
  // Slice 11: 1.0 + 0.5, slice 12: 0.4 + 1.0.
  EXPECT_EQ(select_representative_slice(a), 11);
}

TEST(Slices, TiesGoToLowerIndex) {
  const std::vector<AnnotationRecord> a = {annotation("r1", {{7, 1.0}}), annotation("r2", {{3, 1.0}})};
  EXPECT_EQ(select_representative_slice(a), 3);
}

TEST(Slices, RejectsBadAnnotations) {
  EXPECT_THROW(select_representative_slice(std::vector<AnnotationRecord>{}), DomainError);
  const std::vector<AnnotationRecord> zero = {annotation("r1", {{1, 0.0}})};
  EXPECT_THROW(select_representative_slice(zero), DomainError);
  const std::vector<AnnotationRecord> repeat = {annotation("r1", {{1, 1.0}, {1, 2.0}})};
  EXPECT_THROW(select_representative_slice(repeat), DomainError);
}

TEST(Normalize, WindowAndScale) {
  const std::vector<double> hu = {-1000.0, -300.0, 200.0, 700.0, 3000.0};
  EXPECT_EQ(normalize_patch(hu), (std::vector<double>{0.0, 0.0, 0.5, 1.0, 1.0}));
}

TEST(Synthetic, DeterministicPerSeed) {
  SyntheticOptions o;
  o.n_items = 80;
  o.seed = 3;
  EXPECT_EQ(generate_synthetic(o).checksum(), generate_synthetic(o).checksum());
  o.seed = 4;
  SyntheticOptions other = o;
  other.seed = 5;
  EXPECT_NE(generate_synthetic(o).checksum(), generate_synthetic(other).checksum());
}

TEST(Synthetic, RejectsTooFewItems) {
  SyntheticOptions o;
  o.n_items = 9;
  EXPECT_THROW(generate_synthetic(o), ConfigError);
}

TEST(Synthetic, NoiseFreeSingletonsReduceToLatentL2) {
  SyntheticOptions o;
  o.n_items = 30;
  o.rater_noise = 0.0;
  o.max_raters = 1;
  std::vector<RatingVector> latents;
  const Dataset ds = generate_synthetic(o, CharacteristicSchema::lidc(), &latents);
  ASSERT_EQ(latents.size(), 30u);
  for (std::size_t i = 0; i + 1 < 30; ++i) {
    EXPECT_DOUBLE_EQ(set_distance(ds.records[i].rating_set, ds.records[i + 1].rating_set),
                     rating_l2(latents[i], latents[i + 1]));
  }
}

TEST(Synthetic, RaterCountsAndIds) {
  SyntheticOptions o;
  o.n_items = 100;
  const Dataset ds = generate_synthetic(o);
  EXPECT_EQ(ds.records.front().id, "n000000");
  for (const auto& r : ds.records) {
    EXPECT_GE(r.rating_set.size(), 1u);
    EXPECT_LE(r.rating_set.size(), 4u);
    EXPECT_EQ(r.input.size(), 32u);
    for (const auto& v : r.rating_set.ratings()) EXPECT_NO_THROW(validate_rating(v, CharacteristicSchema::lidc()));
  }
}

TEST(Synthetic, SetDistanceTracksLatentDistance) {
  SyntheticOptions o;
  o.n_items = 300;
  o.seed = 11;
  std::vector<RatingVector> latents;
  const Dataset ds = generate_synthetic(o, CharacteristicSchema::lidc(), &latents);
  std::vector<RatingSet> sets;
  for (const auto& r : ds.records) sets.push_back(r.rating_set);
  const Matrix t = set_distance_matrix(sets);
  std::vector<double> latent_d, set_d;
  for (std::size_t i = 0; i < latents.size(); ++i) {
    for (std::size_t j = i + 1; j < latents.size(); ++j) {
      latent_d.push_back(rating_l2(latents[i], latents[j]));
      set_d.push_back(t(Eigen::Index(i), Eigen::Index(j)));
    }
  }
  EXPECT_GE(pearson(latent_d, set_d), 0.9);
}

TEST(Split, StratifiedAndBalanced) {
  SyntheticOptions o;
  o.n_items = 503;
  const Dataset ds = generate_synthetic(o);
  std::map<MalignancyClass, std::vector<int>> per_class;
  std::vector<int> sizes(5, 0);
  for (const auto& r : ds.records) {
    per_class[r.malignancy].resize(5, 0);
    ++per_class[r.malignancy][static_cast<std::size_t>(r.group)];
    ++sizes[static_cast<std::size_t>(r.group)];
  }
  for (const auto& [cls, counts] : per_class) {
    EXPECT_LE(*std::max_element(counts.begin(), counts.end()) - *std::min_element(counts.begin(), counts.end()), 1);
  }
  EXPECT_LE(*std::max_element(sizes.begin(), sizes.end()) - *std::min_element(sizes.begin(), sizes.end()), 1);
  EXPECT_EQ(split_groups(ds, 5, 1), split_groups(ds, 5, 1));
  EXPECT_THROW(split_groups(ds, 0, 1), ConfigError);
}

TEST(Files, RoundTrip) {
  SyntheticOptions o;
  o.n_items = 40;
  Dataset ds = generate_synthetic(o);
  ds.records[2].predicted_rating_set = RatingSet({RatingVector(9, 2.5)});
  const fs::path dir = scratch("roundtrip");
  save_dataset(ds, dir.string());
  const Dataset back = load_dataset(dir.string());
  EXPECT_EQ(back.checksum(), ds.checksum());
  EXPECT_EQ(back.input_dim, 32u);
  ASSERT_TRUE(back.records[2].predicted_rating_set.has_value());
  EXPECT_FALSE(back.records[3].predicted_rating_set.has_value());
  EXPECT_EQ(back.records[5].malignancy, ds.records[5].malignancy);
  const Dataset via_manifest = load_dataset((dir / "manifest.jsonl").string());
  EXPECT_EQ(via_manifest.checksum(), ds.checksum());
}

TEST(Files, MalformedManifestNamesTheLine) {
  SyntheticOptions o;
  o.n_items = 12;
  const fs::path dir = scratch("malformed");
  save_dataset(generate_synthetic(o), dir.string());
  {
    std::ofstream os(dir / "manifest.jsonl", std::ios::app);
    os << "{\"id\": \"broken\"\n";
  }
  try {
    load_dataset(dir.string());
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("manifest.jsonl:13"), std::string::npos) << e.what();
  }
}

TEST(Files, RatingOutOfRange) {
  const fs::path dir = scratch("range");
  fs::create_directories(dir / "blobs");
  {
    std::ofstream blob(dir / "blobs/0.f32", std::ios::binary);
    const float v[2] = {0.0f, 1.0f};
    blob.write(reinterpret_cast<const char*>(v), sizeof v);
    std::ofstream os(dir / "manifest.jsonl");
    os << R"({"id":"a","group":0,"input":{"kind":"features","ref":"blobs/0.f32","dim":2},"ratings":[[1,1,1,1,1,1,1,1,9]]})" << "\n";
  }
  EXPECT_THROW(load_dataset(dir.string()), Error);
  EXPECT_THROW(load_dataset((dir / "missing.jsonl").string()), IoError);
}

TEST(Files, ShortBlob) {
  const fs::path dir = scratch("blob");
  fs::create_directories(dir / "blobs");
  {
    std::ofstream blob(dir / "blobs/0.f32", std::ios::binary);
    const float v[1] = {0.0f};
    blob.write(reinterpret_cast<const char*>(v), sizeof v);
    std::ofstream os(dir / "manifest.jsonl");
    os << R"({"id":"a","group":0,"input":{"kind":"features","ref":"blobs/0.f32","dim":2},"ratings":[[1,1,1,1,1,1,1,1,1]]})" << "\n";
  }
  EXPECT_THROW(load_dataset(dir.string()), FormatError);
}

TEST(TrainingView, PredictedLabelsRequired) {
  SyntheticOptions o;
  o.n_items = 20;
  const Dataset ds = generate_synthetic(o);
  const std::vector<int> g = {0, 1};
  const auto td = ds.training_data(g, LabelSource::true_ratings);
  EXPECT_EQ(td.size(), ds.in_groups(g).size());
  EXPECT_EQ(td.inputs.cols(), 32);
  try {
    ds.training_data(g, LabelSource::predicted_ratings);
    FAIL();
  } catch (const DomainError& e) {
    EXPECT_NE(std::string(e.what()).find("run the rating prediction step first"), std::string::npos);
  }
}

TEST(Embeddings, RoundTripAndValidation) {
  const fs::path dir = scratch("emb");
  fs::create_directories(dir);
  EmbeddingTable t{{"a", "b"}, Matrix(2, 3)};
  t.vectors << 1, 0, 0, 0.6, 0.8, 0;
  write_embeddings((dir / "e.jsonl").string(), t);
  const auto back = read_embeddings((dir / "e.jsonl").string());
  EXPECT_EQ(back.ids, t.ids);
  EXPECT_TRUE(back.vectors == t.vectors);

  {
    std::ofstream os(dir / "dup.jsonl");
    os << R"({"id":"a","vector":[1,0]})" << "\n" << R"({"id":"a","vector":[0,1]})" << "\n";
  }
  EXPECT_THROW(read_embeddings((dir / "dup.jsonl").string()), FormatError);
  {
    std::ofstream os(dir / "dim.jsonl");
    os << R"({"id":"a","vector":[1,0]})" << "\n" << R"({"id":"b","vector":[0,1,0]})" << "\n";
  }
  EXPECT_THROW(read_embeddings((dir / "dim.jsonl").string()), FormatError);
}

}  // namespace
}  // namespace mre
