#pragma once

#include <cstdint>
#include <vector>

#include "idenbat/image.hpp"

namespace idenbat {

// Subject-specific, age-invariant parameters of an aging brain phantom.
struct PhantomIdentity {
  std::uint64_t seed = 0;
  std::vector<double> skull_axes;  // semi-axes as fractions of the image extent
  double ventricle_base = 0.04;    // ventricle fraction of brain area at age 48
  std::uint64_t sulci_seed = 0;
  std::uint64_t texture_seed = 0;
  double asymmetry = 0.0;  // in [-0.1, 0.1]

  // Draws every field from `seed` for a `dims`-dimensional phantom.
  static PhantomIdentity from_seed(std::uint64_t seed, int dims);
  void validate() const;
  bool operator==(const PhantomIdentity&) const = default;
};

// Aging model constants.
struct AgingModel {
  static constexpr double kAgeMin = 48.0;
  static constexpr double kAgeMax = 80.0;
  static constexpr double kVentricleGrowthPerYear = 0.04;
  static constexpr double kRimBase = 0.06;             // CSF rim, fraction of skull radius
  static constexpr double kRimGrowthPerDecade = 0.005;
  static constexpr double kCortexWidth = 0.16;
  static constexpr double kVentricleRegion = 0.65;     // ventricles stay inside this radius
  static constexpr float kVentricleThreshold = 0.3f;

  static double ventricle_fraction(double base, double age) {
    return base * (1.0 + kVentricleGrowthPerYear * (age - kAgeMin));
  }
  static double rim_width(double age) {
    return kRimBase + kRimGrowthPerDecade * (age - kAgeMin) / 10.0;
  }
};

struct PhantomRender {
  Image image;
  std::vector<std::uint8_t> brain_mask;      // inside the skull ellipse; age-invariant
  std::vector<std::uint8_t> ventricle_mask;
  std::vector<std::uint8_t> csf_mask;        // outer rim and sulci
};

PhantomRender render_phantom(const PhantomIdentity& identity, double age, const Shape& resolution);

// Deterministic render; throws for ages outside [48, 80] or any axis below 32 voxels.
Image generate_phantom(const PhantomIdentity& identity, double age, const Shape& resolution);

// Central region where ventricles live (normalized skull radius below kVentricleRegion).
std::vector<std::uint8_t> ventricle_region(const PhantomIdentity& identity, const Shape& resolution);

// Thresholded ventricle size: voxels in the central region darker than the threshold.
Index ventricle_area(const Image& image, const PhantomIdentity& identity,
                     float threshold = AgingModel::kVentricleThreshold);

}  // namespace idenbat
