#pragma once

#include <vector>

#include "idenbat/image.hpp"

namespace idenbat {

inline constexpr double kPsnrCap = 100.0;  // reported when the images are identical

double mse(const Image& x, const Image& y);
// 10 log10(1 / MSE) for unit dynamic range; kPsnrCap when MSE is 0.
double psnr(const Image& x, const Image& y);

struct SsimOptions {
  int window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double data_range = 1.0;
};

// Mean SSIM over every valid window position of a separable Gaussian window (2-D or 3-D).
double ssim(const Image& x, const Image& y, const SsimOptions& opt = {});

// y - x
Image difference_map(const Image& x, const Image& y);

// Spearman rank correlation with average ranks for ties; 0 when either input is constant.
double spearman(const std::vector<double>& a, const std::vector<double>& b);

}  // namespace idenbat
