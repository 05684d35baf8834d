#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "idenbat/dataset.hpp"
#include "idenbat/metrics.hpp"
#include "idenbat/nets.hpp"

namespace idenbat {

struct AgeCluster {
  const char* name;
  int lo, hi;  // inclusive
};
inline constexpr std::array<AgeCluster, 5> kAgeClusters{{
    {"48-54", 48, 54}, {"55-61", 55, 61}, {"62-68", 62, 68}, {"69-74", 69, 74}, {"75-80", 75, 80}}};

struct PadReport {
  double overall = 0;
  std::map<std::string, double> clusters;  // absent clusters are omitted
  std::map<std::string, std::size_t> counts;
};

// Mean |predicted - target| overall and per target-age cluster.
PadReport pad_from_predictions(const std::vector<double>& predicted, const std::vector<double>& targets);

// T(X, a_t) in eval mode, in batches.
std::vector<Image> transform_images(AgeTransformer<float>& model, const std::vector<Image>& images,
                                    const std::vector<double>& target_ages, std::size_t batch = 16);

// PAD of the regressor's predictions on T(X, a_t).
PadReport pad(AgeTransformer<float>& model, const std::vector<Image>& images,
              const std::vector<double>& target_ages, Encoder<float>& regressor);

struct MetricReport {
  double psnr = 0, ssim = 0, mse = 0;
  std::size_t pairs = 0;
  std::optional<PadReport> pad;

  nlohmann::json to_json() const;
  std::string to_csv() const;
};

// Transforms the younger scan of every longitudinal pair to the older age and compares
// with the older scan. PAD uses the same transforms when a regressor is given.
MetricReport evaluate_pairs(AgeTransformer<float>& model, const Dataset& pairs,
                            Encoder<float>* regressor);

struct TrajectoryReport {
  std::vector<double> rho;  // one per identity
  double median_rho = 0;
};

// Transforms each identity's render at `source_age` to every age in [age_min, age_max] and
// correlates the thresholded ventricle area with the target age.
TrajectoryReport aging_trajectory(AgeTransformer<float>& model,
                                  const std::vector<PhantomIdentity>& identities,
                                  const Shape& resolution, int source_age,
                                  int age_min = 48, int age_max = 80);

struct FeatureRow {
  std::string subject_id;
  int age = 0;
  std::vector<float> f_age;   // flattened bottleneck F_age^L
  std::vector<float> f_iden;  // flattened bottleneck F_iden^L
  double cosine = 0;          // feature_cosine over all levels for this image
};

struct FeatureExport {
  std::vector<FeatureRow> rows;
  double mean_abs_cosine = 0;
};

FeatureExport export_features(AgeTransformer<float>& model, const std::vector<Image>& images,
                              const std::vector<std::string>& subject_ids, const std::vector<int>& ages);
// CSV: subject_id,age,f_age,f_iden with base64 little-endian float32 vectors.
void write_feature_csv(const FeatureExport& f, const std::filesystem::path& path);

// Mean feature_cosine(F_iden(X), F_iden(T(X, a_t))) in eval mode.
double identity_preservation(AgeTransformer<float>& model, const std::vector<Image>& images,
                             const std::vector<double>& target_ages);

std::string base64_encode(const unsigned char* data, std::size_t n);

}  // namespace idenbat
