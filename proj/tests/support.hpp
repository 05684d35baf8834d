#pragma once

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "idenbat/image.hpp"
#include "idenbat/tensor.hpp"

namespace testing {

using idenbat::Index;
using idenbat::Shape;
using idenbat::Tensor;
using idenbat::Var;

inline std::filesystem::path scratch_dir(const std::string& name) {
  const char* root = std::getenv("IDENBAT_TEST_TMP");
  std::filesystem::path p = root ? std::filesystem::path(root) : std::filesystem::temp_directory_path() / "idenbat_tests";
  p /= name;
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

inline Tensor<double> random_tensor(Shape s, std::mt19937_64& rng, double lo = -1, double hi = 1) {
  Tensor<double> t(std::move(s));
  std::uniform_real_distribution<double> u(lo, hi);
  for (Index i = 0; i < t.size(); ++i) t[i] = u(rng);
  return t;
}

inline idenbat::Image random_image(Shape s, std::mt19937_64& rng) {
  idenbat::Image img(std::move(s));
  std::uniform_real_distribution<float> u(0.f, 1.f);
  for (Index i = 0; i < img.size(); ++i) img[i] = u(rng);
  return img;
}

struct GradResult {
  double rel_error = 0;
  double norm = 0;
};

// Compares backprop gradients of a scalar function with central differences, over every
// element of every input. Inputs must be leaves that require gradient.
inline GradResult gradcheck(std::vector<Var<double>> inputs,
                            const std::function<Var<double>(const std::vector<Var<double>>&)>& f,
                            double h = 1e-6) {
  for (auto& v : inputs) v.zero_grad();
  Var<double> y = f(inputs);
  y.backward();
  double diff2 = 0, ref2 = 0;
  for (auto& v : inputs) {
    for (Index i = 0; i < v.value().size(); ++i) {
      const double keep = v.value()[i];
      v.value()[i] = keep + h;
      const double up = f(inputs).item();
      v.value()[i] = keep - h;
      const double down = f(inputs).item();
      v.value()[i] = keep;
      const double numeric = (up - down) / (2 * h);
      const double analytic = v.has_grad() ? v.grad()[i] : 0.0;
      diff2 += (numeric - analytic) * (numeric - analytic);
      ref2 += numeric * numeric;
    }
  }
  return {std::sqrt(diff2) / std::max(std::sqrt(ref2), 1e-12), std::sqrt(ref2)};
}

// 32-bit xorshift stream in [0, 1), as used by the SSIM reference generator.
inline std::vector<double> xorshift_uniform(std::uint64_t seed, std::size_t n) {
  std::uint32_t s = static_cast<std::uint32_t>(seed & 0xFFFFFFFFu);
  if (s == 0) s = 1;
  std::vector<double> out(n);
  for (auto& v : out) {
    s ^= s << 13;
    s ^= s >> 17;
    s ^= s << 5;
    v = s / 4294967296.0;
  }
  return out;
}

}  // namespace testing
