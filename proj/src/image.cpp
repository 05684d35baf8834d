#include "idenbat/image.hpp"

#include <cmath>
#include <stdexcept>

namespace idenbat {

namespace {

// Strides of a row-major shape.
std::vector<Index> strides_of(const Shape& s) {
  std::vector<Index> st(s.size(), 1);
  for (int i = static_cast<int>(s.size()) - 2; i >= 0; --i) st[i] = st[i + 1] * s[i + 1];
  return st;
}

// Applies `kernel` (odd length, centred) along `axis` with replicated borders.
Eigen::ArrayXf convolve_axis(const Image& img, int axis, const std::vector<double>& kernel) {
  const auto st = strides_of(img.shape);
  const Index n = img.shape[axis];
  const Index stride = st[axis];
  const Index radius = static_cast<Index>(kernel.size() / 2);
  Eigen::ArrayXf out(img.size());
  for (Index i = 0; i < img.size(); ++i) {
    const Index pos = (i / stride) % n;
    const Index line_start = i - pos * stride;
    double acc = 0;
    for (Index k = -radius; k <= radius; ++k) {
      const Index p = std::clamp(pos + k, Index{0}, n - 1);
      acc += kernel[static_cast<std::size_t>(k + radius)] * img.data[line_start + p * stride];
    }
    out[i] = static_cast<float>(acc);
  }
  return out;
}

}  // namespace

Image::Image(Shape s, float fill)
    : shape(std::move(s)), data(Eigen::ArrayXf::Constant(shape_size(shape), fill)),
      spacing(shape.size(), 1.0) {}

void Image::validate() const {
  if (shape.size() != 2 && shape.size() != 3)
    throw ShapeError("Image: expected 2-D or 3-D shape, got " + shape_string(shape));
  if (data.size() != shape_size(shape)) throw ShapeError("Image: data does not match shape");
  if (!data.allFinite()) throw std::domain_error("Image: non-finite intensity");
  if (data.size() && (data.minCoeff() < 0.f || data.maxCoeff() > 1.f))
    throw std::domain_error("Image: intensity outside [0, 1]");
}

Image flip(const Image& img, int axis) {
  if (axis < 0 || axis >= img.dims()) throw std::invalid_argument("flip: bad axis");
  const auto st = strides_of(img.shape);
  const Index n = img.shape[axis], stride = st[axis];
  Image out = img;
  for (Index i = 0; i < img.size(); ++i) {
    const Index pos = (i / stride) % n;
    out.data[i] = img.data[i + (n - 1 - 2 * pos) * stride];
  }
  return out;
}

Image gaussian_blur(const Image& img, double sigma) {
  if (sigma < 0) throw std::invalid_argument("gaussian_blur: sigma must be >= 0");
  if (sigma == 0) return img;
  const auto radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> kernel(static_cast<std::size_t>(2 * radius + 1));
  double total = 0;
  for (int k = -radius; k <= radius; ++k) {
    kernel[static_cast<std::size_t>(k + radius)] = std::exp(-0.5 * k * k / (sigma * sigma));
    total += kernel[static_cast<std::size_t>(k + radius)];
  }
  for (auto& k : kernel) k /= total;
  Image out = img;
  for (int axis = 0; axis < img.dims(); ++axis) out.data = convolve_axis(out, axis, kernel);
  return out;
}

Image augment(const Image& img, bool do_flip, double blur_sigma) {
  if (blur_sigma < 0) throw std::invalid_argument("augment: blur_sigma must be >= 0");
  Image out = do_flip ? flip(img, lateral_axis(img.dims())) : img;
  out = gaussian_blur(out, blur_sigma);
  out.data = out.data.max(0.f).min(1.f);
  return out;
}

Image augment(const Image& img, Rng& rng, double max_sigma) {
  std::bernoulli_distribution coin(0.5);
  std::uniform_real_distribution<double> sig(0.0, max_sigma);
  const bool f = coin(rng);
  const double s = max_sigma > 0 ? sig(rng) : 0.0;
  return augment(img, f, s);
}

std::vector<std::pair<Index, Index>> crop_margins(const Shape& source, const Shape& target) {
  if (source.size() != target.size()) throw ShapeError("center_crop: dimensionality mismatch");
  std::vector<std::pair<Index, Index>> m;
  for (std::size_t i = 0; i < source.size(); ++i) {
    if (target[i] > source[i] || target[i] < 1)
      throw ShapeError("center_crop: target " + shape_string(target) + " exceeds source " +
                       shape_string(source));
    const Index total = source[i] - target[i];
    m.emplace_back(total / 2, total - total / 2);
  }
  return m;
}

Image center_crop(const Image& img, const Shape& target) {
  const auto margins = crop_margins(img.shape, target);
  Image out(target);
  out.spacing = img.spacing;
  const auto src_st = strides_of(img.shape);
  const auto dst_st = strides_of(target);
  for (Index i = 0; i < out.size(); ++i) {
    Index src = 0;
    for (std::size_t a = 0; a < target.size(); ++a) {
      const Index pos = (i / dst_st[a]) % target[a];
      src += (pos + margins[a].first) * src_st[a];
    }
    out.data[i] = img.data[src];
  }
  return out;
}

}  // namespace idenbat
