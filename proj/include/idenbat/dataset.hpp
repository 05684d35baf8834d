#pragma once

#include "json.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "idenbat/agecode.hpp"
#include "idenbat/phantom.hpp"

namespace idenbat {

struct SubjectRecord {
  std::string subject_id;  // unique per (subject, age)
  std::string subject;     // shared by every scan of one identity
  int age = 0;
  std::optional<std::string> image_path;  // relative to the manifest directory
  std::optional<PhantomIdentity> identity;
};

struct DatasetManifest {
  std::vector<SubjectRecord> records;
  int age_min = 48;
  int age_max = 80;
  int dimensionality = 2;
  Shape resolution;
  std::uint64_t seed = 0;
  bool longitudinal = false;
  int gap = 0;
  std::optional<nlohmann::json> generator_config;

  void validate() const;
};

// n_per_age phantom records for every age in [age_min, age_max], one fresh identity each.
// With `longitudinal`, every identity is instead rendered at a and a + gap for each base age
// a in [age_min, age_max - gap], n_per_age identities per base age.
DatasetManifest build_dataset(int n_per_age, int age_min, int age_max, const Shape& resolution,
                              std::uint64_t seed, bool longitudinal = false, int gap = 5);

nlohmann::json manifest_to_json(const DatasetManifest& m);
DatasetManifest manifest_from_json(const nlohmann::json& j);
void save_manifest(const DatasetManifest& m, const std::filesystem::path& path);
DatasetManifest load_manifest(const std::filesystem::path& path);

// Renders phantom records; for file-backed records loads the volume from `base_dir`.
Image record_image(const SubjectRecord& rec, const Shape& resolution,
                   const std::filesystem::path& base_dir = {});

// Writes each phantom as a raw grid under `dir`/images and records its path, then the
// manifest itself as `dir`/manifest.json.
void write_dataset(DatasetManifest& m, const std::filesystem::path& dir);

// Manifest with every image materialized in memory and indexed by age.
class Dataset {
 public:
  Dataset() = default;
  Dataset(DatasetManifest manifest, const std::filesystem::path& base_dir = {});

  const DatasetManifest& manifest() const { return manifest_; }
  std::size_t size() const { return images_.size(); }
  const Image& image(std::size_t i) const { return images_[i]; }
  const SubjectRecord& record(std::size_t i) const { return manifest_.records[i]; }
  const std::vector<std::size_t>& indices_at_age(int age) const;
  AgeCodeConfig age_config() const;

 private:
  DatasetManifest manifest_;
  std::vector<Image> images_;
  std::map<int, std::vector<std::size_t>> by_age_;
};

}  // namespace idenbat
