#include "mre/dataset.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "mre/error.hpp"
#include "mre/random.hpp"

namespace mre {

namespace fs = std::filesystem;
using json = nlohmann::json;
using Eigen::Index;

int select_representative_slice(std::span<const AnnotationRecord> annotations) {
  if (annotations.empty()) throw DomainError("slice selection needs at least one annotation");
  std::map<int, double> weight;  // ordered so ties resolve to the lower index
  for (const auto& a : annotations) {
    if (a.slices.empty())
      throw DomainError("annotation '" + a.annotation_id + "' has no slices");
    double max_area = 0.0;
    std::set<int> seen;
    for (const auto& s : a.slices) {
      if (!(s.area > 0.0)) throw DomainError("slice areas must be positive");
      if (!seen.insert(s.slice_index).second)
        throw DomainError("annotation '" + a.annotation_id + "' repeats slice " +
                          std::to_string(s.slice_index));
      max_area = std::max(max_area, s.area);
    }
    for (const auto& s : a.slices) weight[s.slice_index] += s.area / max_area;
  }
  int best = weight.begin()->first;
  double best_w = weight.begin()->second;
  for (const auto& [slice, w] : weight) {
    if (w > best_w) {
      best = slice;
      best_w = w;
    }
  }
  return best;
}

std::vector<double> normalize_patch(std::span<const double> hu) {
  std::vector<double> out(hu.size());
  for (std::size_t i = 0; i < hu.size(); ++i)
    out[i] = (std::clamp(hu[i], kHuWindowLow, kHuWindowHigh) - kHuWindowLow) / (kHuWindowHigh - kHuWindowLow);
  return out;
}

std::size_t Dataset::input_size() const {
  return input_kind == InputKind::feature_vector ? input_dim : patch_height * patch_width;
}

const PatchRecord& Dataset::find(const std::string& id) const {
  for (const auto& r : records) {
    if (r.id == id) return r;
  }
  throw DomainError("unknown item id '" + id + "'");
}

std::vector<const PatchRecord*> Dataset::in_groups(std::span<const int> groups) const {
  std::vector<const PatchRecord*> out;
  for (const auto& r : records) {
    if (std::find(groups.begin(), groups.end(), r.group) != groups.end()) out.push_back(&r);
  }
  return out;
}

TrainingData Dataset::training_data(std::span<const int> groups, LabelSource labels) const {
  const auto recs = in_groups(groups);
  TrainingData td;
  td.inputs.resize(static_cast<Index>(recs.size()), static_cast<Index>(input_size()));
  for (std::size_t i = 0; i < recs.size(); ++i) {
    const PatchRecord& r = *recs[i];
    td.ids.push_back(r.id);
    for (std::size_t c = 0; c < r.input.size(); ++c) td.inputs(static_cast<Index>(i), static_cast<Index>(c)) = r.input[c];
    if (labels == LabelSource::true_ratings) {
      td.rating_sets.push_back(r.rating_set);
    } else {
      if (!r.predicted_rating_set)
        throw DomainError("item '" + r.id +
                          "' has no predicted ratings; run the rating prediction step first");
      td.rating_sets.push_back(*r.predicted_rating_set);
    }
  }
  return td;
}

ModelConfig Dataset::model_config(std::uint64_t seed) const {
  ModelConfig c;
  c.input_kind = input_kind;
  c.input_dim = input_dim;
  c.patch_height = patch_height;
  c.patch_width = patch_width;
  c.seed = seed;
  return c;
}

std::uint64_t Dataset::checksum() const {
  std::uint64_t h = fnv1a(nullptr, 0);
  for (const auto& r : records) {
    h = fnv1a(r.id.data(), r.id.size(), h);
    h = fnv1a(&r.group, sizeof r.group, h);
    h = fnv1a(r.input.data(), r.input.size() * sizeof(double), h);
    for (const auto& v : r.rating_set.ratings()) h = fnv1a(v.data(), v.size() * sizeof(double), h);
  }
  return h;
}

std::vector<int> split_groups(const Dataset& dataset, int n_groups, std::uint64_t seed) {
  if (n_groups < 1) throw ConfigError("number of groups must be positive");
  if (dataset.size() < static_cast<std::size_t>(n_groups))
    throw DomainError("cannot split " + std::to_string(dataset.size()) + " items into " +
                      std::to_string(n_groups) + " groups");
  Rng rng(derive_seed(seed, 0x6770));
  std::vector<int> assignment(dataset.size(), 0);
  std::size_t dealer = 0;
  for (auto cls : {MalignancyClass::benign, MalignancyClass::unknown, MalignancyClass::malignant}) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < dataset.size(); ++i) {
      if (dataset.records[i].malignancy == cls) members.push_back(i);
    }
    rng.shuffle(members);
    for (std::size_t m : members) assignment[m] = static_cast<int>(dealer++ % static_cast<std::size_t>(n_groups));
  }
  return assignment;
}

Dataset generate_synthetic(const SyntheticOptions& o, const CharacteristicSchema& schema,
                           std::vector<RatingVector>* latents) {
  if (o.n_items < 10) throw ConfigError("synthetic dataset needs at least 10 items");
  if (o.min_raters < 1 || o.max_raters < o.min_raters) throw ConfigError("invalid rater count range");
  if (o.feature_dim < 1) throw ConfigError("feature_dim must be positive");
  if (o.rater_noise < 0.0 || o.feature_noise < 0.0 || o.nuisance_scale < 0.0)
    throw ConfigError("noise levels must be nonnegative");

  const std::size_t d = schema.size();
  Rng rng(o.seed);
  Rng map_rng(derive_seed(o.seed, 0x6d6170));

  Matrix a(static_cast<Index>(o.feature_dim), static_cast<Index>(d));
  for (Index i = 0; i < a.size(); ++i) a.data()[i] = map_rng.normal() * o.mixing_gain / std::sqrt(static_cast<double>(d));
  Matrix b(static_cast<Index>(o.feature_dim), static_cast<Index>(std::max<std::size_t>(o.nuisance_dim, 1)));
  for (Index i = 0; i < b.size(); ++i)
    b.data()[i] = map_rng.normal() * o.mixing_gain / std::sqrt(static_cast<double>(b.cols()));

  Dataset ds;
  ds.input_kind = InputKind::feature_vector;
  ds.input_dim = o.feature_dim;
  if (latents) latents->clear();
  const int width = o.n_items >= 1000000 ? 7 : 6;
  for (std::size_t n = 0; n < o.n_items; ++n) {
    RatingVector latent(d);
    Vector z(static_cast<Index>(d));
    for (std::size_t c = 0; c < d; ++c) {
      const auto& r = schema.range(c);
      latent[c] = rng.uniform(r.min, r.max);
      z(static_cast<Index>(c)) = 2.0 * (latent[c] - r.min) / (r.max - r.min) - 1.0;
    }
    const std::size_t raters = o.min_raters + static_cast<std::size_t>(rng.below(o.max_raters - o.min_raters + 1));
    std::vector<RatingVector> copies;
    for (std::size_t k = 0; k < raters; ++k) {
      RatingVector v(d);
      for (std::size_t c = 0; c < d; ++c) {
        const auto& r = schema.range(c);
        v[c] = std::clamp(latent[c] + o.rater_noise * rng.normal(), r.min, r.max);
      }
      copies.push_back(std::move(v));
    }
    Vector u(b.cols());
    for (Index k = 0; k < u.size(); ++k) u(k) = o.nuisance_dim ? o.nuisance_scale * rng.normal() : 0.0;
    const Vector pre = a * z + b * u;

    PatchRecord rec;
    char id[32];
    std::snprintf(id, sizeof id, "n%0*zu", width, n);
    rec.id = id;
    rec.input.resize(o.feature_dim);
    for (std::size_t f = 0; f < o.feature_dim; ++f) {
      const double v = std::tanh(pre(static_cast<Index>(f))) + o.feature_noise * rng.normal();
      rec.input[f] = static_cast<double>(static_cast<float>(v));  // blobs store float32
    }
    rec.rating_set = RatingSet(std::move(copies));
    rec.malignancy = malignancy_class(mean_rating(rec.rating_set)[kMalignancyIndex % d], schema.range(kMalignancyIndex % d));
    ds.records.push_back(std::move(rec));
    if (latents) latents->push_back(std::move(latent));
  }
  const auto groups = split_groups(ds, kGroupCount, o.seed);
  for (std::size_t i = 0; i < ds.size(); ++i) ds.records[i].group = groups[i];
  return ds;
}

namespace {

void write_blob(const fs::path& path, std::span<const double> values) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write blob '" + path.string() + "'");
  for (double v : values) {
    const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
    const unsigned char b[4] = {static_cast<unsigned char>(bits), static_cast<unsigned char>(bits >> 8),
                                static_cast<unsigned char>(bits >> 16), static_cast<unsigned char>(bits >> 24)};
    os.write(reinterpret_cast<const char*>(b), 4);
  }
  if (!os) throw IoError("failed writing blob '" + path.string() + "'");
}

std::vector<double> read_blob(const fs::path& path, std::size_t count) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open blob '" + path.string() + "'");
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  if (bytes.size() != count * 4)
    throw FormatError("blob '" + path.string() + "' has " + std::to_string(bytes.size()) +
                      " bytes, expected " + std::to_string(count * 4));
  std::vector<double> out(count);
  for (std::size_t i = 0; i < count; ++i) {
    const std::uint32_t bits = static_cast<std::uint32_t>(bytes[4 * i]) |
                               static_cast<std::uint32_t>(bytes[4 * i + 1]) << 8 |
                               static_cast<std::uint32_t>(bytes[4 * i + 2]) << 16 |
                               static_cast<std::uint32_t>(bytes[4 * i + 3]) << 24;
    out[i] = std::bit_cast<float>(bits);
  }
  return out;
}

json rating_set_json(const RatingSet& s) {
  json arr = json::array();
  for (const auto& r : s.ratings()) arr.push_back(r);
  return arr;
}

RatingSet parse_rating_set(const json& j, std::optional<std::vector<double>> weights,
                           const CharacteristicSchema& schema, const std::string& id) {
  if (!j.is_array() || j.empty()) throw FormatError("item '" + id + "' needs a nonempty ratings array");
  std::vector<RatingVector> ratings;
  for (const auto& r : j) {
    RatingVector v = r.get<RatingVector>();
    try {
      validate_rating(v, schema);
    } catch (const SchemaError& e) {
      throw FormatError("item '" + id + "': " + e.what());
    }
    ratings.push_back(std::move(v));
  }
  return RatingSet(std::move(ratings), std::move(weights));
}

}  // namespace

void save_dataset(const Dataset& dataset, const std::string& dir) {
  std::error_code ec;
  fs::create_directories(fs::path(dir) / "blobs", ec);
  if (ec) throw IoError("cannot create dataset directory '" + dir + "': " + ec.message());
  const fs::path manifest = fs::path(dir) / "manifest.jsonl";
  std::ofstream os(manifest);
  if (!os) throw IoError("cannot write manifest '" + manifest.string() + "'");
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const PatchRecord& r = dataset.records[i];
    char name[32];
    std::snprintf(name, sizeof name, "blobs/%06zu.f32", i);
    write_blob(fs::path(dir) / name, r.input);
    json j;
    j["id"] = r.id;
    j["group"] = r.group;
    if (dataset.input_kind == InputKind::feature_vector) {
      j["input"] = {{"kind", "features"}, {"ref", name}, {"dim", dataset.input_dim}};
    } else {
      j["input"] = {{"kind", "patch"}, {"ref", name}, {"shape", {dataset.patch_height, dataset.patch_width}}};
    }
    j["ratings"] = rating_set_json(r.rating_set);
    if (r.rating_set.weights()) j["weights"] = *r.rating_set.weights();
    if (r.predicted_rating_set) j["predicted_ratings"] = rating_set_json(*r.predicted_rating_set);
    j["malignancy_class"] = to_string(r.malignancy);
    os << j.dump() << '\n';
  }
  if (!os) throw IoError("failed writing manifest '" + manifest.string() + "'");
}

Dataset load_dataset(const std::string& manifest_path, const CharacteristicSchema& schema) {
  fs::path manifest(manifest_path);
  if (fs::is_directory(manifest)) manifest /= "manifest.jsonl";
  std::ifstream is(manifest);
  if (!is) throw IoError("cannot open manifest '" + manifest.string() + "'");
  const fs::path base = manifest.parent_path();

  Dataset ds;
  std::unordered_set<std::string> ids;
  std::string line;
  std::size_t line_no = 0;
  bool first = true;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = manifest.string() + ":" + std::to_string(line_no);
    try {
      const json j = json::parse(line);
      PatchRecord r;
      r.id = j.at("id").get<std::string>();
      if (!ids.insert(r.id).second) throw FormatError(where + ": duplicate id '" + r.id + "'");
      r.group = j.at("group").get<int>();
      if (r.group < 0 || r.group >= kGroupCount) throw FormatError(where + ": group must be in 0..4");

      const json& in = j.at("input");
      const auto kind = in.at("kind").get<std::string>();
      InputKind k;
      std::size_t dim = 0, h = 0, w = 0;
      if (kind == "features") {
        k = InputKind::feature_vector;
        dim = in.at("dim").get<std::size_t>();
      } else if (kind == "patch") {
        k = InputKind::image_patch;
        const auto shape = in.at("shape").get<std::vector<std::size_t>>();
        if (shape.size() != 2) throw FormatError(where + ": patch shape must be [height, width]");
        h = shape[0];
        w = shape[1];
      } else {
        throw FormatError(where + ": unknown input kind '" + kind + "'");
      }
      if (first) {
        ds.input_kind = k;
        ds.input_dim = dim;
        ds.patch_height = h;
        ds.patch_width = w;
        first = false;
      } else if (k != ds.input_kind || dim != ds.input_dim || h != ds.patch_height || w != ds.patch_width) {
        throw FormatError(where + ": input kind or shape differs from earlier records");
      }
      r.input = read_blob(base / in.at("ref").get<std::string>(), ds.input_size());

      std::optional<std::vector<double>> weights;
      if (j.contains("weights")) weights = j["weights"].get<std::vector<double>>();
      r.rating_set = parse_rating_set(j.at("ratings"), std::move(weights), schema, r.id);
      if (j.contains("predicted_ratings"))
        r.predicted_rating_set = parse_rating_set(j["predicted_ratings"], std::nullopt, schema, r.id);
      if (j.contains("malignancy_class")) {
        r.malignancy = malignancy_class_from_string(j["malignancy_class"].get<std::string>());
      } else {
        const std::size_t m = std::min(kMalignancyIndex, schema.size() - 1);
        r.malignancy = malignancy_class(mean_rating(r.rating_set)[m], schema.range(m));
      }
      ds.records.push_back(std::move(r));
    } catch (const json::exception& e) {
      throw FormatError(where + ": " + e.what());
    } catch (const DomainError& e) {
      throw FormatError(where + ": " + e.what());
    }
  }
  if (ds.records.empty()) throw FormatError("manifest '" + manifest.string() + "' has no records");
  return ds;
}

EmbeddingTable read_embeddings(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open embeddings '" + path + "'");
  EmbeddingTable t;
  std::vector<std::vector<double>> rows;
  std::unordered_set<std::string> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = path + ":" + std::to_string(line_no);
    try {
      const json j = json::parse(line);
      auto id = j.at("id").get<std::string>();
      auto v = j.at("vector").get<std::vector<double>>();
      if (!seen.insert(id).second) throw FormatError(where + ": duplicate id '" + id + "'");
      if (v.empty()) throw FormatError(where + ": empty vector");
      if (!rows.empty() && v.size() != rows.front().size())
        throw FormatError(where + ": vector dimension " + std::to_string(v.size()) + " differs from " +
                          std::to_string(rows.front().size()));
      t.ids.push_back(std::move(id));
      rows.push_back(std::move(v));
    } catch (const json::exception& e) {
      throw FormatError(where + ": " + e.what());
    }
  }
  if (rows.empty()) throw FormatError("embeddings file '" + path + "' is empty");
  t.vectors.resize(static_cast<Index>(rows.size()), static_cast<Index>(rows.front().size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t c = 0; c < rows[i].size(); ++c) t.vectors(static_cast<Index>(i), static_cast<Index>(c)) = rows[i][c];
  return t;
}

void write_embeddings(const std::string& path, const EmbeddingTable& table) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write embeddings '" + path + "'");
  for (std::size_t i = 0; i < table.ids.size(); ++i) {
    std::vector<double> v(table.vectors.row(static_cast<Index>(i)).data(),
                          table.vectors.row(static_cast<Index>(i)).data() + table.vectors.cols());
    os << json{{"id", table.ids[i]}, {"vector", v}}.dump() << '\n';
  }
  if (!os) throw IoError("failed writing embeddings '" + path + "'");
}

}  // namespace mre
