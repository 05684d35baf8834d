#pragma once

#include <Eigen/Core>

#include <vector>

#include "idenbat/layers.hpp"
#include "idenbat/tensor.hpp"

namespace idenbat {

// 2-D (H, W) or 3-D (H, W, D) intensity grid, row-major with the last axis fastest.
struct Image {
  Shape shape;
  Eigen::ArrayXf data;
  std::vector<double> spacing;

  Image() = default;
  explicit Image(Shape s, float fill = 0.f);

  int dims() const { return static_cast<int>(shape.size()); }
  Index size() const { return data.size(); }
  float& operator[](Index i) { return data[i]; }
  float operator[](Index i) const { return data[i]; }

  // Throws when the shape is not 2-D/3-D or any value is non-finite or outside [0, 1].
  void validate() const;
  bool operator==(const Image& o) const {
    return shape == o.shape && (data.size() == 0 || (data == o.data).all());
  }
};

// Left-right axis: columns for 2-D slices, x (sagittal flip) for volumes.
inline int lateral_axis(int dims) { return dims == 2 ? 1 : 0; }

Image flip(const Image& img, int axis);
// Separable Gaussian blur with a kernel truncated at 3 sigma and replicated borders.
Image gaussian_blur(const Image& img, double sigma);
// Optional lateral flip then blur; output clipped to [0, 1].
Image augment(const Image& img, bool do_flip, double blur_sigma);
// Random augmentation: flip with probability 1/2, blur sigma uniform in [0, max_sigma].
Image augment(const Image& img, Rng& rng, double max_sigma);
// Symmetric crop; on odd margins the extra voxel comes off the high-index side.
Image center_crop(const Image& img, const Shape& target);

// Per-axis (low, high) crop margins used by center_crop.
std::vector<std::pair<Index, Index>> crop_margins(const Shape& source, const Shape& target);

// Stack images into an (N, 1, spatial...) tensor.
template <typename S>
Tensor<S> to_batch(const std::vector<const Image*>& images) {
  if (images.empty()) throw ShapeError("to_batch: no images");
  const Shape& s = images.front()->shape;
  Shape bs{static_cast<Index>(images.size()), 1};
  bs.insert(bs.end(), s.begin(), s.end());
  Tensor<S> out(bs);
  const Index per = images.front()->size();
  for (std::size_t n = 0; n < images.size(); ++n) {
    require_same_shape(images[n]->shape, s, "to_batch");
    out.data().segment(static_cast<Index>(n) * per, per) = images[n]->data.template cast<S>();
  }
  return out;
}

template <typename S>
Image from_batch(const Tensor<S>& batch, Index n) {
  Shape s(batch.shape().begin() + 2, batch.shape().end());
  Image img(s);
  const Index per = img.size();
  img.data = batch.data().segment(n * per, per).template cast<float>();
  return img;
}

}  // namespace idenbat
