#include "idenbat/dataset.hpp"

#include "json.hpp"

#include <cstdio>
#include <fstream>
#include <set>
#include <stdexcept>

#include "idenbat/io.hpp"
#include "idenbat/random.hpp"

namespace idenbat {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string subject_name(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "s%05zu", index);
  return buf;
}

std::string scan_name(const std::string& subject, int age) {
  return subject + "_a" + std::to_string(age);
}

json identity_to_json(const PhantomIdentity& id) {
  return {{"seed", id.seed},
          {"skull_axes", id.skull_axes},
          {"ventricle_base", id.ventricle_base},
          {"sulci_seed", id.sulci_seed},
          {"texture_seed", id.texture_seed},
          {"asymmetry", id.asymmetry}};
}

PhantomIdentity identity_from_json(const json& j) {
  PhantomIdentity id;
  id.seed = j.at("seed").get<std::uint64_t>();
  id.skull_axes = j.at("skull_axes").get<std::vector<double>>();
  id.ventricle_base = j.at("ventricle_base").get<double>();
  id.sulci_seed = j.at("sulci_seed").get<std::uint64_t>();
  id.texture_seed = j.at("texture_seed").get<std::uint64_t>();
  id.asymmetry = j.at("asymmetry").get<double>();
  id.validate();
  return id;
}

}  // namespace

void DatasetManifest::validate() const {
  if (age_min > age_max) throw std::invalid_argument("manifest: age_min must not exceed age_max");
  if (dimensionality != 2 && dimensionality != 3)
    throw std::invalid_argument("manifest: dimensionality must be 2 or 3");
  if (static_cast<int>(resolution.size()) != dimensionality)
    throw std::invalid_argument("manifest: resolution does not match dimensionality");
  std::set<std::string> ids;
  for (const auto& r : records) {
    if (r.age < age_min || r.age > age_max)
      throw AgeRangeError("manifest: record " + r.subject_id + " has age " + std::to_string(r.age) +
                          " outside [" + std::to_string(age_min) + ", " + std::to_string(age_max) + "]");
    if (!ids.insert(r.subject_id).second)
      throw std::invalid_argument("manifest: duplicate subject_id " + r.subject_id);
    if (!r.image_path && !r.identity)
      throw std::invalid_argument("manifest: record " + r.subject_id + " has no image source");
  }
}

DatasetManifest build_dataset(int n_per_age, int age_min, int age_max, const Shape& resolution,
                              std::uint64_t seed, bool longitudinal, int gap) {
  if (n_per_age < 1) throw std::invalid_argument("build_dataset: n_per_age must be >= 1");
  if (age_min < AgingModel::kAgeMin || age_max > AgingModel::kAgeMax || age_min > age_max)
    throw AgeRangeError("build_dataset: ages must satisfy 48 <= age_min <= age_max <= 80");
  if (longitudinal && (gap < 1 || age_min + gap > age_max))
    throw std::invalid_argument("build_dataset: gap must fit inside the age range");
  DatasetManifest m;
  m.age_min = age_min;
  m.age_max = age_max;
  m.dimensionality = static_cast<int>(resolution.size());
  m.resolution = resolution;
  m.seed = seed;
  m.longitudinal = longitudinal;
  m.gap = longitudinal ? gap : 0;
  m.generator_config = json{{"kind", "phantom"},
                            {"seed", seed},
                            {"n_per_age", n_per_age},
                            {"longitudinal", longitudinal},
                            {"gap", m.gap}};

  std::size_t subject = 0;
  auto add = [&](int age, const PhantomIdentity& id, const std::string& name) {
    SubjectRecord r;
    r.subject = name;
    r.subject_id = scan_name(name, age);
    r.age = age;
    r.identity = id;
    m.records.push_back(std::move(r));
  };
  const int last_base = longitudinal ? age_max - gap : age_max;
  for (int age = age_min; age <= last_base; ++age) {
    for (int i = 0; i < n_per_age; ++i, ++subject) {
      const auto id = PhantomIdentity::from_seed(derive_seed(seed, subject), m.dimensionality);
      const std::string name = subject_name(subject);
      add(age, id, name);
      if (longitudinal) add(age + gap, id, name);
    }
  }
  m.validate();
  return m;
}

json manifest_to_json(const DatasetManifest& m) {
  json recs = json::array();
  for (const auto& r : m.records) {
    json j{{"subject_id", r.subject_id}, {"subject", r.subject}, {"age", r.age}};
    if (r.image_path) j["image"] = *r.image_path;
    if (r.identity) j["identity"] = identity_to_json(*r.identity);
    recs.push_back(std::move(j));
  }
  json out{{"age_min", m.age_min},
           {"age_max", m.age_max},
           {"dimensionality", m.dimensionality},
           {"resolution", m.resolution},
           {"seed", m.seed},
           {"longitudinal", m.longitudinal},
           {"gap", m.gap},
           {"records", std::move(recs)}};
  if (m.generator_config) out["generator_config"] = *m.generator_config;
  return out;
}

DatasetManifest manifest_from_json(const json& j) {
  DatasetManifest m;
  m.age_min = j.value("age_min", 48);
  m.age_max = j.value("age_max", 80);
  m.dimensionality = j.at("dimensionality").get<int>();
  m.resolution = j.at("resolution").get<Shape>();
  m.seed = j.value("seed", std::uint64_t{0});
  m.longitudinal = j.value("longitudinal", false);
  m.gap = j.value("gap", 0);
  if (j.contains("generator_config")) m.generator_config = j.at("generator_config");
  for (const auto& rj : j.at("records")) {
    SubjectRecord r;
    r.subject_id = rj.at("subject_id").get<std::string>();
    r.subject = rj.value("subject", r.subject_id);
    r.age = rj.at("age").get<int>();
    if (rj.contains("image")) r.image_path = rj.at("image").get<std::string>();
    if (rj.contains("identity")) r.identity = identity_from_json(rj.at("identity"));
    m.records.push_back(std::move(r));
  }
  m.validate();
  return m;
}

void save_manifest(const DatasetManifest& m, const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << manifest_to_json(m).dump(1) << '\n';
  if (!out) throw IoError("write failed for " + path.string());
}

DatasetManifest load_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw IoError("manifest " + path.string() + ": " + e.what());
  }
  return manifest_from_json(j);
}

Image record_image(const SubjectRecord& rec, const Shape& resolution, const fs::path& base_dir) {
  if (rec.identity) return generate_phantom(*rec.identity, rec.age, resolution);
  if (!rec.image_path) throw std::invalid_argument("record " + rec.subject_id + " has no image");
  fs::path p(*rec.image_path);
  if (p.is_relative() && !base_dir.empty()) p = base_dir / p;
  Image img = load_volume(p);
  if (img.shape != resolution)
    throw ShapeError("record " + rec.subject_id + ": image shape " + shape_string(img.shape) +
                     " does not match manifest resolution " + shape_string(resolution));
  return img;
}

void write_dataset(DatasetManifest& m, const fs::path& dir) {
  fs::create_directories(dir / "images");
  for (auto& r : m.records) {
    const std::string rel = "images/" + r.subject_id + ".grid";
    save_raw_grid(record_image(r, m.resolution, dir), dir / rel);
    r.image_path = rel;
  }
  save_manifest(m, dir / "manifest.json");
}

Dataset::Dataset(DatasetManifest manifest, const fs::path& base_dir)
    : manifest_(std::move(manifest)) {
  manifest_.validate();
  images_.reserve(manifest_.records.size());
  for (std::size_t i = 0; i < manifest_.records.size(); ++i) {
    images_.push_back(record_image(manifest_.records[i], manifest_.resolution, base_dir));
    by_age_[manifest_.records[i].age].push_back(i);
  }
}

const std::vector<std::size_t>& Dataset::indices_at_age(int age) const {
  static const std::vector<std::size_t> none;
  auto it = by_age_.find(age);
  return it == by_age_.end() ? none : it->second;
}

AgeCodeConfig Dataset::age_config() const {
  AgeCodeConfig cfg;
  cfg.age_min = manifest_.age_min;
  cfg.age_max = manifest_.age_max;
  return cfg;
}

}  // namespace idenbat
