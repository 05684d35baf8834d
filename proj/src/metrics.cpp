#include "idenbat/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace idenbat {

namespace {

using Grid = Eigen::ArrayXd;

// Valid-mode correlation of `in` (extents `shape`) with `k` along one axis.
Grid filter_axis(const Grid& in, Shape& shape, int axis, const std::vector<double>& k) {
  const Index taps = static_cast<Index>(k.size());
  Shape out_shape = shape;
  out_shape[axis] = shape[axis] - taps + 1;
  Index inner = 1;
  for (std::size_t a = axis + 1; a < shape.size(); ++a) inner *= shape[a];
  Index outer = 1;
  for (int a = 0; a < axis; ++a) outer *= shape[a];
  const Index n_in = shape[axis], n_out = out_shape[axis];
  Grid out(outer * n_out * inner);
  for (Index o = 0; o < outer; ++o)
    for (Index p = 0; p < n_out; ++p) {
      auto dst = out.segment((o * n_out + p) * inner, inner);
      dst.setZero();
      for (Index t = 0; t < taps; ++t) dst += k[t] * in.segment((o * n_in + p + t) * inner, inner);
    }
  shape = out_shape;
  return out;
}

Grid gaussian_filter(const Grid& in, const Shape& shape, const std::vector<double>& k) {
  Shape s = shape;
  Grid g = in;
  for (int a = 0; a < static_cast<int>(shape.size()); ++a) g = filter_axis(g, s, a, k);
  return g;
}

std::vector<double> ranks(const std::vector<double>& v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t t = i; t <= j; ++t) r[idx[t]] = avg;
    i = j + 1;
  }
  return r;
}

}  // namespace

double mse(const Image& x, const Image& y) {
  require_same_shape(x.shape, y.shape, "mse");
  if (x.size() == 0) throw ShapeError("mse: empty image");
  return (x.data.cast<double>() - y.data.cast<double>()).square().mean();
}

double psnr(const Image& x, const Image& y) {
  const double m = mse(x, y);
  if (m == 0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(1.0 / m));
}

double ssim(const Image& x, const Image& y, const SsimOptions& opt) {
  require_same_shape(x.shape, y.shape, "ssim");
  if (opt.window < 1 || opt.window % 2 == 0) throw std::invalid_argument("ssim: window must be odd");
  for (Index e : x.shape)
    if (e < opt.window)
      throw ShapeError("ssim: image " + shape_string(x.shape) + " smaller than the " +
                       std::to_string(opt.window) + "-voxel window");
  std::vector<double> k(static_cast<std::size_t>(opt.window));
  const int r = opt.window / 2;
  for (int i = -r; i <= r; ++i) k[static_cast<std::size_t>(i + r)] = std::exp(-0.5 * i * i / (opt.sigma * opt.sigma));
  const double total = std::accumulate(k.begin(), k.end(), 0.0);
  for (auto& v : k) v /= total;

  const Grid X = x.data.cast<double>(), Y = y.data.cast<double>();
  const Grid ux = gaussian_filter(X, x.shape, k), uy = gaussian_filter(Y, x.shape, k);
  const Grid uxx = gaussian_filter(X * X, x.shape, k), uyy = gaussian_filter(Y * Y, x.shape, k);
  const Grid uxy = gaussian_filter(X * Y, x.shape, k);
  const Grid vx = uxx - ux * ux, vy = uyy - uy * uy, vxy = uxy - ux * uy;
  const double c1 = std::pow(opt.k1 * opt.data_range, 2), c2 = std::pow(opt.k2 * opt.data_range, 2);
  const Grid s = ((2 * ux * uy + c1) * (2 * vxy + c2)) / ((ux * ux + uy * uy + c1) * (vx + vy + c2));
  return s.mean();
}

Image difference_map(const Image& x, const Image& y) {
  require_same_shape(x.shape, y.shape, "difference_map");
  Image d = x;
  d.data = y.data - x.data;
  return d;
}

double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw std::invalid_argument("spearman: length mismatch");
  if (a.size() < 2) return 0.0;
  const auto ra = ranks(a), rb = ranks(b);
  const Eigen::Map<const Eigen::ArrayXd> A(ra.data(), static_cast<Index>(ra.size()));
  const Eigen::Map<const Eigen::ArrayXd> B(rb.data(), static_cast<Index>(rb.size()));
  const Eigen::ArrayXd da = A - A.mean(), db = B - B.mean();
  const double den = std::sqrt(da.square().sum() * db.square().sum());
  if (den == 0) return 0.0;
  return (da * db).sum() / den;
}

}  // namespace idenbat
