#pragma once

#include <filesystem>
#include <stdexcept>

#include "idenbat/image.hpp"

namespace idenbat {

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Raw grid: 8-byte magic "IDBTGRID", one dimensionality byte, per-axis uint32 extents,
// then little-endian float32 voxels (row-major, last axis fastest).
inline constexpr char kRawGridMagic[8] = {'I', 'D', 'B', 'T', 'G', 'R', 'I', 'D'};

void save_raw_grid(const Image& img, const std::filesystem::path& path);
// Reads a raw grid without renormalizing (bit-exact round trip).
Image read_raw_grid(const std::filesystem::path& path);

// NIfTI-1 (.nii or .nii.gz), uint8/int16/int32/float32/float64 voxels. Voxel (i, j, k)
// maps to Image axes (0, 1, 2); pixdim fills the spacing.
Image read_nifti(const std::filesystem::path& path);
void save_nifti(const Image& img, const std::filesystem::path& path);

// Dispatches on magic bytes, then min-max normalizes to [0, 1] (constant volumes map to 0).
// Raw grids already inside [0, 1] are returned untouched.
Image load_volume(const std::filesystem::path& path);
// Raw grid unless the extension is .nii / .nii.gz.
void save_volume(const Image& img, const std::filesystem::path& path);

// Per-volume min-max normalization; throws on non-finite voxels.
void normalize_min_max(Image& img);

// 8-bit grayscale PNG of a 2-D image (values clipped to [0, 1]).
void save_png_gray(const Image& img, const std::filesystem::path& path);
// Signed 2-D map rendered with a blue-white-red scale symmetric about 0.
void save_png_diverging(const Image& signed_map, const std::filesystem::path& path,
                        double max_abs = 0.0);
// Reads an 8-bit grayscale PNG back as [0, 1] intensities.
Image read_png_gray(const std::filesystem::path& path);

}  // namespace idenbat
