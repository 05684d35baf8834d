#include "idenbat/ops.hpp"

#include <cmath>

namespace idenbat {

namespace {

template <typename S>
using ArrayS = Eigen::Array<S, Eigen::Dynamic, 1>;
template <typename S>
using MatrixS = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
template <typename S>
using MapM = Eigen::Map<MatrixS<S>>;
template <typename S>
using CMapM = Eigen::Map<const MatrixS<S>>;

void require_feature_map(const Shape& s, const char* what) {
  if (s.size() < 3 || s.size() > 5)
    throw ShapeError(std::string(what) + ": expected (N, C, spatial...) got " + shape_string(s));
}

// Spatial extents padded to three axes (leading ones for 2-D).
struct Spatial3 {
  Index d[3] = {1, 1, 1};
  Index size() const { return d[0] * d[1] * d[2]; }
};

Spatial3 spatial3(const Shape& s, std::size_t first = 2) {
  Spatial3 out;
  const std::size_t n = s.size() - first;
  for (std::size_t i = 0; i < n; ++i) out.d[3 - n + i] = s[first + i];
  return out;
}

struct ConvPlan {
  Spatial3 in, out, kernel;
  Index stride[3] = {1, 1, 1};
  Index pad[3] = {0, 0, 0};
  Index channels = 0;
  Index K() const { return channels * kernel.size(); }
  Index P() const { return out.size(); }
};

// Output positions y2 along the last axis whose input index y2 * stride + o2 - pad is in range.
inline std::pair<Index, Index> valid_range(const ConvPlan& pl, Index o2) {
  const Index s = pl.stride[2], off = o2 - pl.pad[2], n = pl.in.d[2];
  Index lo = off >= 0 ? 0 : (-off + s - 1) / s;
  Index hi = n - 1 - off < 0 ? 0 : (n - 1 - off) / s + 1;
  hi = std::min(hi, pl.out.d[2]);
  lo = std::min(lo, hi);
  return {lo, hi};
}

// cols is P x K column-major: column kc = (c, kernel offset) holds the input samples
// seen by that weight at every output position.
template <typename S>
void im2col(const S* x, const ConvPlan& pl, S* cols) {
  const Index P = pl.P();
  const auto& I = pl.in.d;
  const auto& O = pl.out.d;
  const auto& Kd = pl.kernel.d;
  for (Index c = 0; c < pl.channels; ++c) {
    const S* xc = x + c * pl.in.size();
    for (Index o0 = 0; o0 < Kd[0]; ++o0)
      for (Index o1 = 0; o1 < Kd[1]; ++o1)
        for (Index o2 = 0; o2 < Kd[2]; ++o2) {
          const Index kc = ((c * Kd[0] + o0) * Kd[1] + o1) * Kd[2] + o2;
          S* dst = cols + kc * P;
          for (Index y0 = 0; y0 < O[0]; ++y0) {
            const Index i0 = y0 * pl.stride[0] - pl.pad[0] + o0;
            if (i0 < 0 || i0 >= I[0]) {
              std::fill(dst, dst + O[1] * O[2], S(0));
              dst += O[1] * O[2];
              continue;
            }
            for (Index y1 = 0; y1 < O[1]; ++y1) {
              const Index i1 = y1 * pl.stride[1] - pl.pad[1] + o1;
              if (i1 < 0 || i1 >= I[1]) {
                std::fill(dst, dst + O[2], S(0));
                dst += O[2];
                continue;
              }
              const S* row = xc + (i0 * I[1] + i1) * I[2];
              const auto [lo, hi] = valid_range(pl, o2);
              std::fill(dst, dst + lo, S(0));
              if (pl.stride[2] == 1) {
                std::copy(row + lo + o2 - pl.pad[2], row + hi + o2 - pl.pad[2], dst + lo);
              } else {
                for (Index y2 = lo; y2 < hi; ++y2) dst[y2] = row[y2 * pl.stride[2] + o2 - pl.pad[2]];
              }
              std::fill(dst + hi, dst + O[2], S(0));
              dst += O[2];
            }
          }
        }
  }
}

template <typename S>
void col2im(const S* cols, const ConvPlan& pl, S* x) {
  const Index P = pl.P();
  const auto& I = pl.in.d;
  const auto& O = pl.out.d;
  const auto& Kd = pl.kernel.d;
  for (Index c = 0; c < pl.channels; ++c) {
    S* xc = x + c * pl.in.size();
    for (Index o0 = 0; o0 < Kd[0]; ++o0)
      for (Index o1 = 0; o1 < Kd[1]; ++o1)
        for (Index o2 = 0; o2 < Kd[2]; ++o2) {
          const Index kc = ((c * Kd[0] + o0) * Kd[1] + o1) * Kd[2] + o2;
          const S* src = cols + kc * P;
          for (Index y0 = 0; y0 < O[0]; ++y0) {
            const Index i0 = y0 * pl.stride[0] - pl.pad[0] + o0;
            if (i0 < 0 || i0 >= I[0]) {
              src += O[1] * O[2];
              continue;
            }
            for (Index y1 = 0; y1 < O[1]; ++y1) {
              const Index i1 = y1 * pl.stride[1] - pl.pad[1] + o1;
              if (i1 < 0 || i1 >= I[1]) {
                src += O[2];
                continue;
              }
              S* row = xc + (i0 * I[1] + i1) * I[2];
              const auto [lo, hi] = valid_range(pl, o2);
              for (Index y2 = lo; y2 < hi; ++y2) row[y2 * pl.stride[2] + o2 - pl.pad[2]] += src[y2];
              src += O[2];
            }
          }
        }
  }
}

}  // namespace

template <typename S>
Var<S> add(const Var<S>& a, const Var<S>& b) {
  require_same_shape(a.shape(), b.shape(), "add");
  Tensor<S> out(a.shape(), ArrayS<S>(a.value().data() + b.value().data()));
  return Var<S>::make(std::move(out), {a, b}, [](auto& n) {
    for (auto& in : n.inputs)
      if (in->requires_grad) in->accumulate(n.grad.data());
  });
}

template <typename S>
Var<S> sub(const Var<S>& a, const Var<S>& b) {
  require_same_shape(a.shape(), b.shape(), "sub");
  Tensor<S> out(a.shape(), ArrayS<S>(a.value().data() - b.value().data()));
  return Var<S>::make(std::move(out), {a, b}, [](auto& n) {
    if (n.input(0).requires_grad) n.input(0).accumulate(n.grad.data());
    if (n.input(1).requires_grad) n.input(1).accumulate(-n.grad.data());
  });
}

template <typename S>
Var<S> mul(const Var<S>& a, const Var<S>& b) {
  require_same_shape(a.shape(), b.shape(), "mul");
  Tensor<S> out(a.shape(), ArrayS<S>(a.value().data() * b.value().data()));
  return Var<S>::make(std::move(out), {a, b}, [](auto& n) {
    auto& x = n.input(0);
    auto& y = n.input(1);
    if (x.requires_grad) x.accumulate(n.grad.data() * y.value.data());
    if (y.requires_grad) y.accumulate(n.grad.data() * x.value.data());
  });
}

template <typename S>
Var<S> scale(const Var<S>& a, S factor) {
  Tensor<S> out(a.shape(), ArrayS<S>(a.value().data() * factor));
  return Var<S>::make(std::move(out), {a},
                      [factor](auto& n) { n.input(0).accumulate(n.grad.data() * factor); });
}

template <typename S>
Var<S> abs(const Var<S>& a) {
  Tensor<S> out(a.shape(), ArrayS<S>(a.value().data().abs()));
  return Var<S>::make(std::move(out), {a}, [](auto& n) {
    const auto& x = n.input(0).value.data();
    ArrayS<S> sign = (x > S(0)).template cast<S>() - (x < S(0)).template cast<S>();
    n.input(0).accumulate(n.grad.data() * sign);
  });
}

template <typename S>
Var<S> square(const Var<S>& a) {
  Tensor<S> out(a.shape(), ArrayS<S>(a.value().data().square()));
  return Var<S>::make(std::move(out), {a}, [](auto& n) {
    n.input(0).accumulate(S(2) * n.grad.data() * n.input(0).value.data());
  });
}

template <typename S>
Var<S> sum(const Var<S>& a) {
  Tensor<S> out(Shape{}, ArrayS<S>::Constant(1, a.value().data().sum()));
  return Var<S>::make(std::move(out), {a}, [](auto& n) {
    n.input(0).accumulate(ArrayS<S>::Constant(n.input(0).value.size(), n.grad[0]));
  });
}

template <typename S>
Var<S> mean(const Var<S>& a) {
  const auto count = static_cast<S>(a.value().size());
  Tensor<S> out(Shape{}, ArrayS<S>::Constant(1, a.value().data().sum() / count));
  return Var<S>::make(std::move(out), {a}, [count](auto& n) {
    n.input(0).accumulate(ArrayS<S>::Constant(n.input(0).value.size(), n.grad[0] / count));
  });
}

template <typename S>
Var<S> reshape(const Var<S>& a, Shape shape) {
  Tensor<S> out = a.value().reshaped(std::move(shape));
  return Var<S>::make(std::move(out), {a},
                      [](auto& n) { n.input(0).accumulate(n.grad.data()); });
}

template <typename S>
Var<S> weighted_sum(const std::vector<Var<S>>& terms, const std::vector<S>& weights) {
  if (terms.size() != weights.size()) throw ShapeError("weighted_sum: size mismatch");
  S total = 0;
  for (std::size_t i = 0; i < terms.size(); ++i) {
    if (terms[i].value().size() != 1) throw ShapeError("weighted_sum: terms must be scalars");
    total += weights[i] * terms[i].item();
  }
  Tensor<S> out(Shape{}, ArrayS<S>::Constant(1, total));
  return Var<S>::make(std::move(out), terms, [weights](auto& n) {
    for (std::size_t i = 0; i < n.inputs.size(); ++i)
      if (n.inputs[i]->requires_grad)
        n.inputs[i]->accumulate(ArrayS<S>::Constant(1, weights[i] * n.grad[0]));
  });
}

template <typename S>
Var<S> scale_samples(const Var<S>& a, const std::vector<S>& weights) {
  const Index N = a.shape().at(0);
  if (static_cast<Index>(weights.size()) != N) throw ShapeError("scale_samples: weight count");
  const Index per = a.value().sample_size();
  ArrayS<S> factor(a.value().size());
  for (Index n = 0; n < N; ++n) factor.segment(n * per, per).setConstant(weights[n]);
  Tensor<S> out(a.shape(), ArrayS<S>(a.value().data() * factor));
  return Var<S>::make(std::move(out), {a}, [factor = std::move(factor)](auto& n) {
    n.input(0).accumulate(n.grad.data() * factor);
  });
}

template <typename S>
Var<S> clip01(const Var<S>& a) {
  Tensor<S> out(a.shape(), ArrayS<S>(a.value().data().max(S(0)).min(S(1))));
  return Var<S>::make(std::move(out), {a}, [](auto& n) {
    const auto& x = n.input(0).value.data();
    ArrayS<S> pass = ((x >= S(0)) && (x <= S(1))).template cast<S>();
    n.input(0).accumulate(n.grad.data() * pass);
  });
}

template <typename S>
Var<S> leaky_relu(const Var<S>& a, S slope) {
  const auto& x = a.value().data();
  Tensor<S> out(a.shape(), ArrayS<S>((x > S(0)).select(x, x * slope)));
  return Var<S>::make(std::move(out), {a}, [slope](auto& n) {
    const auto& xv = n.input(0).value.data();
    n.input(0).accumulate((xv > S(0)).select(n.grad.data(), n.grad.data() * slope));
  });
}

template <typename S>
Var<S> prelu(const Var<S>& x, const Var<S>& slope) {
  require_feature_map(x.shape(), "prelu");
  const Index N = x.shape()[0], C = x.shape()[1], P = x.value().spatial_size();
  if (slope.value().size() != C) throw ShapeError("prelu: slope must have C entries");
  Tensor<S> out(x.shape());
  const S* xp = x.value().ptr();
  S* op = out.ptr();
  for (Index n = 0; n < N; ++n)
    for (Index c = 0; c < C; ++c) {
      const S a = slope.value()[c];
      Eigen::Map<const ArrayS<S>> xs(xp + (n * C + c) * P, P);
      Eigen::Map<ArrayS<S>>(op + (n * C + c) * P, P) = xs.max(S(0)) + a * xs.min(S(0));
    }
  return Var<S>::make(std::move(out), {x, slope}, [N, C, P](auto& n) {
    auto& xin = n.input(0);
    auto& sin = n.input(1);
    const S* xv = xin.value.ptr();
    const S* g = n.grad.ptr();
    ArrayS<S> dx(xin.value.size());
    ArrayS<S> ds = ArrayS<S>::Zero(C);
    for (Index b = 0; b < N; ++b)
      for (Index c = 0; c < C; ++c) {
        const S a = sin.value[c];
        const Index off = (b * C + c) * P;
        Eigen::Map<const ArrayS<S>> xs(xv + off, P), gs(g + off, P);
        dx.segment(off, P) = (xs > S(0)).select(gs, a * gs);
        ds[c] += (xs.min(S(0)) * gs).sum();
      }
    if (xin.requires_grad) xin.accumulate(dx);
    if (sin.requires_grad) sin.accumulate(ds);
  });
}

template <typename S>
Var<S> conv(const Var<S>& x, const Var<S>& weight, const Var<S>& bias, ConvGeometry geom) {
  const Shape& xs = x.shape();
  const Shape& ws = weight.shape();
  require_feature_map(xs, "conv");
  if (ws.size() != xs.size() || ws[1] != xs[1])
    throw ShapeError("conv: weight " + shape_string(ws) + " incompatible with input " +
                     shape_string(xs));
  const Index N = xs[0], Cout = ws[0];
  if (bias.value().size() != Cout) throw ShapeError("conv: bias size");

  ConvPlan pl;
  pl.channels = xs[1];
  pl.in = spatial3(xs);
  pl.kernel = spatial3(ws);
  const std::size_t nsp = xs.size() - 2;
  Shape out_shape{N, Cout};
  for (std::size_t i = 0; i < 3; ++i) {
    const bool real_axis = i >= 3 - nsp;
    pl.stride[i] = real_axis ? geom.stride : 1;
    pl.pad[i] = real_axis ? geom.padding : 0;
    pl.out.d[i] = (pl.in.d[i] + 2 * pl.pad[i] - pl.kernel.d[i]) / pl.stride[i] + 1;
    if (pl.out.d[i] < 1) throw ShapeError("conv: kernel larger than padded input");
    if (real_axis) out_shape.push_back(pl.out.d[i]);
  }
  const Index P = pl.P(), K = pl.K();
  Tensor<S> out(out_shape);
  MatrixS<S> cols(P, K);
  CMapM<S> wt(weight.value().ptr(), K, Cout);
  const auto bias_row = bias.value().data().matrix().transpose();
  for (Index n = 0; n < N; ++n) {
    im2col(x.value().ptr() + n * pl.channels * pl.in.size(), pl, cols.data());
    MapM<S> o(out.ptr() + n * Cout * P, P, Cout);
    o.noalias() = cols * wt;
    o.rowwise() += bias_row;
  }
  return Var<S>::make(std::move(out), {x, weight, bias}, [pl, N, Cout](auto& node) {
    auto& xin = node.input(0);
    auto& win = node.input(1);
    auto& bin = node.input(2);
    const Index P = pl.P(), K = pl.K();
    const Index in_per = pl.channels * pl.in.size();
    MatrixS<S> cols(P, K);
    MatrixS<S> dwt = MatrixS<S>::Zero(K, Cout);
    ArrayS<S> db = ArrayS<S>::Zero(Cout);
    ArrayS<S> dx;
    if (xin.requires_grad) dx = ArrayS<S>::Zero(xin.value.size());
    CMapM<S> wt(win.value.ptr(), K, Cout);
    for (Index n = 0; n < N; ++n) {
      CMapM<S> g(node.grad.ptr() + n * Cout * P, P, Cout);
      if (win.requires_grad) {
        im2col(xin.value.ptr() + n * in_per, pl, cols.data());
        dwt.noalias() += cols.transpose() * g;
      }
      if (bin.requires_grad) db += g.colwise().sum().transpose().array();
      if (xin.requires_grad) {
        cols.noalias() = g * wt.transpose();
        col2im(cols.data(), pl, dx.data() + n * in_per);
      }
    }
    if (xin.requires_grad) xin.accumulate(dx);
    if (win.requires_grad) win.accumulate(Eigen::Map<const ArrayS<S>>(dwt.data(), dwt.size()));
    if (bin.requires_grad) bin.accumulate(db);
  });
}

template <typename S>
Var<S> batch_norm(const Var<S>& x, BatchNormStats& stats, bool training) {
  require_feature_map(x.shape(), "batch_norm");
  const Index N = x.shape()[0], C = x.shape()[1], P = x.value().spatial_size();
  if (stats.running_mean.size() != C) throw ShapeError("batch_norm: channel count");
  const Index M = N * P;
  const S* xp = x.value().ptr();
  ArrayS<S> mu(C), inv_std(C);
  for (Index c = 0; c < C; ++c) {
    if (training) {
      // Two-pass in double for stable statistics in the float build.
      double s = 0;
      for (Index n = 0; n < N; ++n)
        for (Index p = 0; p < P; ++p) s += xp[(n * C + c) * P + p];
      const double m = s / static_cast<double>(M);
      double v = 0;
      for (Index n = 0; n < N; ++n)
        for (Index p = 0; p < P; ++p) {
          const double d = xp[(n * C + c) * P + p] - m;
          v += d * d;
        }
      const double var = v / static_cast<double>(M);
      mu[c] = static_cast<S>(m);
      inv_std[c] = static_cast<S>(1.0 / std::sqrt(var + stats.eps));
      const double unbiased = M > 1 ? v / static_cast<double>(M - 1) : var;
      stats.running_mean[c] = (1 - stats.momentum) * stats.running_mean[c] + stats.momentum * m;
      stats.running_var[c] =
          (1 - stats.momentum) * stats.running_var[c] + stats.momentum * unbiased;
    } else {
      mu[c] = static_cast<S>(stats.running_mean[c]);
      inv_std[c] = static_cast<S>(1.0 / std::sqrt(stats.running_var[c] + stats.eps));
    }
  }
  Tensor<S> out(x.shape());
  S* op = out.ptr();
  for (Index n = 0; n < N; ++n)
    for (Index c = 0; c < C; ++c) {
      const Index off = (n * C + c) * P;
      for (Index p = 0; p < P; ++p) op[off + p] = (xp[off + p] - mu[c]) * inv_std[c];
    }
  return Var<S>::make(std::move(out), {x}, [N, C, P, M, inv_std, training](auto& node) {
    const S* g = node.grad.ptr();
    const S* xh = node.value.ptr();
    ArrayS<S> dx(node.value.size());
    for (Index c = 0; c < C; ++c) {
      if (!training) {
        for (Index n = 0; n < N; ++n)
          for (Index p = 0; p < P; ++p) {
            const Index i = (n * C + c) * P + p;
            dx[i] = g[i] * inv_std[c];
          }
        continue;
      }
      double sg = 0, sgx = 0;
      for (Index n = 0; n < N; ++n)
        for (Index p = 0; p < P; ++p) {
          const Index i = (n * C + c) * P + p;
          sg += g[i];
          sgx += g[i] * xh[i];
        }
      const S mg = static_cast<S>(sg / M), mgx = static_cast<S>(sgx / M);
      for (Index n = 0; n < N; ++n)
        for (Index p = 0; p < P; ++p) {
          const Index i = (n * C + c) * P + p;
          dx[i] = inv_std[c] * (g[i] - mg - xh[i] * mgx);
        }
    }
    node.input(0).accumulate(dx);
  });
}

template <typename S>
Var<S> channel_affine(const Var<S>& x, const Var<S>& scale_v, const Var<S>& shift_v) {
  require_feature_map(x.shape(), "channel_affine");
  const Index N = x.shape()[0], C = x.shape()[1], P = x.value().spatial_size();
  const bool per_sample = scale_v.value().size() == N * C;
  if (!per_sample && scale_v.value().size() != C)
    throw ShapeError("channel_affine: scale must be (C) or (N, C)");
  require_same_shape(scale_v.shape(), shift_v.shape(), "channel_affine");
  auto idx = [per_sample, C](Index n, Index c) { return per_sample ? n * C + c : c; };
  Tensor<S> out(x.shape());
  const S* xp = x.value().ptr();
  for (Index n = 0; n < N; ++n)
    for (Index c = 0; c < C; ++c) {
      const S a = scale_v.value()[idx(n, c)], b = shift_v.value()[idx(n, c)];
      const Index off = (n * C + c) * P;
      for (Index p = 0; p < P; ++p) out[off + p] = a * xp[off + p] + b;
    }
  return Var<S>::make(std::move(out), {x, scale_v, shift_v},
                      [N, C, P, idx](auto& node) {
                        auto& xin = node.input(0);
                        auto& ain = node.input(1);
                        auto& bin = node.input(2);
                        const S* g = node.grad.ptr();
                        const S* xv = xin.value.ptr();
                        ArrayS<S> dx;
                        if (xin.requires_grad) dx.resize(xin.value.size());
                        ArrayS<S> da = ArrayS<S>::Zero(ain.value.size());
                        ArrayS<S> dbv = ArrayS<S>::Zero(bin.value.size());
                        for (Index n = 0; n < N; ++n)
                          for (Index c = 0; c < C; ++c) {
                            const Index k = idx(n, c);
                            const S a = ain.value[k];
                            const Index off = (n * C + c) * P;
                            S sa = 0, sb = 0;
                            for (Index p = 0; p < P; ++p) {
                              sa += g[off + p] * xv[off + p];
                              sb += g[off + p];
                              if (xin.requires_grad) dx[off + p] = a * g[off + p];
                            }
                            da[k] += sa;
                            dbv[k] += sb;
                          }
                        if (xin.requires_grad) xin.accumulate(dx);
                        if (ain.requires_grad) ain.accumulate(da);
                        if (bin.requires_grad) bin.accumulate(dbv);
                      });
}

template <typename S>
Var<S> max_pool2(const Var<S>& x) {
  require_feature_map(x.shape(), "max_pool2");
  const Shape& xs = x.shape();
  const Index NC = xs[0] * xs[1];
  const Spatial3 in = spatial3(xs);
  const std::size_t nsp = xs.size() - 2;
  Spatial3 out = in;
  Shape out_shape{xs[0], xs[1]};
  for (std::size_t i = 3 - nsp; i < 3; ++i) {
    out.d[i] = in.d[i] / 2;
    if (out.d[i] < 1) throw ShapeError("max_pool2: spatial extent < 2");
    out_shape.push_back(out.d[i]);
  }
  Index f[3];
  for (std::size_t i = 0; i < 3; ++i) f[i] = (i >= 3 - nsp) ? 2 : 1;
  Tensor<S> result(out_shape);
  std::vector<Index> arg(static_cast<std::size_t>(result.size()));
  const S* xp = x.value().ptr();
  Index o = 0;
  for (Index nc = 0; nc < NC; ++nc) {
    const Index base = nc * in.size();
    for (Index y0 = 0; y0 < out.d[0]; ++y0)
      for (Index y1 = 0; y1 < out.d[1]; ++y1)
        for (Index y2 = 0; y2 < out.d[2]; ++y2, ++o) {
          Index best = -1;
          S best_v = S(0);
          for (Index a = 0; a < f[0]; ++a)
            for (Index b = 0; b < f[1]; ++b)
              for (Index c = 0; c < f[2]; ++c) {
                const Index i =
                    base + ((y0 * f[0] + a) * in.d[1] + (y1 * f[1] + b)) * in.d[2] + y2 * f[2] + c;
                if (best < 0 || xp[i] > best_v) {
                  best = i;
                  best_v = xp[i];
                }
              }
          result[o] = best_v;
          arg[static_cast<std::size_t>(o)] = best;
        }
  }
  return Var<S>::make(std::move(result), {x}, [arg = std::move(arg)](auto& node) {
    ArrayS<S> dx = ArrayS<S>::Zero(node.input(0).value.size());
    for (std::size_t i = 0; i < arg.size(); ++i) dx[arg[i]] += node.grad[static_cast<Index>(i)];
    node.input(0).accumulate(dx);
  });
}

template <typename S>
Var<S> upsample_to(const Var<S>& x, const Shape& spatial) {
  require_feature_map(x.shape(), "upsample_to");
  const Shape& xs = x.shape();
  const std::size_t nsp = xs.size() - 2;
  if (spatial.size() != nsp) throw ShapeError("upsample_to: dimensionality mismatch");
  Shape out_shape{xs[0], xs[1]};
  for (std::size_t i = 0; i < nsp; ++i) {
    if (spatial[i] < xs[2 + i] || spatial[i] > 2 * xs[2 + i])
      throw ShapeError("upsample_to: target must be within 1x..2x of input");
    out_shape.push_back(spatial[i]);
  }
  const Spatial3 in = spatial3(xs), out = spatial3(out_shape);
  const Index NC = xs[0] * xs[1];
  std::vector<Index> src(static_cast<std::size_t>(out.size()));
  Index k = 0;
  for (Index y0 = 0; y0 < out.d[0]; ++y0)
    for (Index y1 = 0; y1 < out.d[1]; ++y1)
      for (Index y2 = 0; y2 < out.d[2]; ++y2, ++k) {
        const Index i0 = std::min(y0 / (out.d[0] > in.d[0] ? 2 : 1), in.d[0] - 1);
        const Index i1 = std::min(y1 / (out.d[1] > in.d[1] ? 2 : 1), in.d[1] - 1);
        const Index i2 = std::min(y2 / (out.d[2] > in.d[2] ? 2 : 1), in.d[2] - 1);
        src[static_cast<std::size_t>(k)] = (i0 * in.d[1] + i1) * in.d[2] + i2;
      }
  Tensor<S> result(out_shape);
  const Index ip = in.size(), op = out.size();
  for (Index nc = 0; nc < NC; ++nc)
    for (Index j = 0; j < op; ++j)
      result[nc * op + j] = x.value()[nc * ip + src[static_cast<std::size_t>(j)]];
  return Var<S>::make(std::move(result), {x}, [src = std::move(src), NC, ip, op](auto& node) {
    ArrayS<S> dx = ArrayS<S>::Zero(node.input(0).value.size());
    for (Index nc = 0; nc < NC; ++nc)
      for (Index j = 0; j < op; ++j)
        dx[nc * ip + src[static_cast<std::size_t>(j)]] += node.grad[nc * op + j];
    node.input(0).accumulate(dx);
  });
}

template <typename S>
Var<S> concat_channels(const Var<S>& a, const Var<S>& b) {
  require_feature_map(a.shape(), "concat_channels");
  Shape as = a.shape(), bs = b.shape();
  if (as.size() != bs.size() || as[0] != bs[0] ||
      !std::equal(as.begin() + 2, as.end(), bs.begin() + 2))
    throw ShapeError("concat_channels: " + shape_string(as) + " vs " + shape_string(bs));
  const Index N = as[0], Ca = as[1], Cb = bs[1], P = a.value().spatial_size();
  Shape os = as;
  os[1] = Ca + Cb;
  Tensor<S> out(os);
  for (Index n = 0; n < N; ++n) {
    out.data().segment(n * (Ca + Cb) * P, Ca * P) = a.value().data().segment(n * Ca * P, Ca * P);
    out.data().segment((n * (Ca + Cb) + Ca) * P, Cb * P) =
        b.value().data().segment(n * Cb * P, Cb * P);
  }
  return Var<S>::make(std::move(out), {a, b}, [N, Ca, Cb, P](auto& node) {
    const auto& g = node.grad.data();
    auto& ia = node.input(0);
    auto& ib = node.input(1);
    if (ia.requires_grad) {
      ArrayS<S> da(N * Ca * P);
      for (Index n = 0; n < N; ++n)
        da.segment(n * Ca * P, Ca * P) = g.segment(n * (Ca + Cb) * P, Ca * P);
      ia.accumulate(da);
    }
    if (ib.requires_grad) {
      ArrayS<S> dbv(N * Cb * P);
      for (Index n = 0; n < N; ++n)
        dbv.segment(n * Cb * P, Cb * P) = g.segment((n * (Ca + Cb) + Ca) * P, Cb * P);
      ib.accumulate(dbv);
    }
  });
}

template <typename S>
Var<S> global_avg_pool(const Var<S>& x) {
  require_feature_map(x.shape(), "global_avg_pool");
  const Index N = x.shape()[0], C = x.shape()[1], P = x.value().spatial_size();
  Tensor<S> out(Shape{N, C});
  for (Index i = 0; i < N * C; ++i)
    out[i] = x.value().data().segment(i * P, P).sum() / static_cast<S>(P);
  return Var<S>::make(std::move(out), {x}, [N, C, P](auto& node) {
    ArrayS<S> dx(N * C * P);
    for (Index i = 0; i < N * C; ++i)
      dx.segment(i * P, P).setConstant(node.grad[i] / static_cast<S>(P));
    node.input(0).accumulate(dx);
  });
}

template <typename S>
Var<S> linear(const Var<S>& x, const Var<S>& weight, const Var<S>& bias) {
  if (x.shape().size() != 2 || weight.shape().size() != 2 || weight.shape()[1] != x.shape()[1])
    throw ShapeError("linear: input " + shape_string(x.shape()) + " weight " +
                     shape_string(weight.shape()));
  const Index N = x.shape()[0], In = x.shape()[1], Out = weight.shape()[0];
  if (bias.value().size() != Out) throw ShapeError("linear: bias size");
  Tensor<S> out(Shape{N, Out});
  CMapM<S> xm(x.value().ptr(), In, N);
  CMapM<S> wt(weight.value().ptr(), In, Out);
  MapM<S> om(out.ptr(), Out, N);
  om.noalias() = wt.transpose() * xm;
  om.colwise() += bias.value().data().matrix();
  return Var<S>::make(std::move(out), {x, weight, bias}, [N, In, Out](auto& node) {
    auto& xin = node.input(0);
    auto& win = node.input(1);
    auto& bin = node.input(2);
    CMapM<S> g(node.grad.ptr(), Out, N);
    CMapM<S> wt(win.value.ptr(), In, Out);
    CMapM<S> xm(xin.value.ptr(), In, N);
    if (xin.requires_grad) {
      MatrixS<S> dx = wt * g;
      xin.accumulate(Eigen::Map<const ArrayS<S>>(dx.data(), dx.size()));
    }
    if (win.requires_grad) {
      MatrixS<S> dw = xm * g.transpose();
      win.accumulate(Eigen::Map<const ArrayS<S>>(dw.data(), dw.size()));
    }
    if (bin.requires_grad) bin.accumulate(g.rowwise().sum().array());
  });
}

template <typename S>
Tensor<S> softmax_rows(const Tensor<S>& logits) {
  if (logits.rank() != 2) throw ShapeError("softmax_rows: expected (N, K)");
  const Index N = logits.dim(0), K = logits.dim(1);
  Tensor<S> out(logits.shape());
  for (Index n = 0; n < N; ++n) {
    auto row = logits.data().segment(n * K, K);
    const S m = row.maxCoeff();
    ArrayS<S> e = (row - m).exp();
    out.data().segment(n * K, K) = e / e.sum();
  }
  return out;
}

template <typename S>
Var<S> kl_from_logits(const Var<S>& logits, const Tensor<S>& target) {
  require_same_shape(logits.shape(), target.shape(), "kl_from_logits");
  if (logits.value().rank() != 2) throw ShapeError("kl_from_logits: expected (N, K)");
  const Index N = logits.shape()[0], K = logits.shape()[1];
  const S log_floor = std::log(S(1e-12));
  Tensor<S> logp(logits.shape());
  for (Index n = 0; n < N; ++n) {
    auto row = logits.value().data().segment(n * K, K);
    const S m = row.maxCoeff();
    const S lse = m + std::log((row - m).exp().sum());
    logp.data().segment(n * K, K) = row - lse;
  }
  S total = 0;
  for (Index i = 0; i < N * K; ++i) {
    const S t = target[i];
    if (t > S(0)) total += t * (std::log(t) - std::max(logp[i], log_floor));
  }
  Tensor<S> out(Shape{}, ArrayS<S>::Constant(1, total / static_cast<S>(N)));
  return Var<S>::make(
      std::move(out), {logits}, [target, logp = std::move(logp), N, K, log_floor](auto& node) {
        const S upstream = node.grad[0] / static_cast<S>(N);
        ArrayS<S> dz(N * K);
        for (Index n = 0; n < N; ++n) {
          // dL/dlogp_k = -t_k (zero where the floor is active); chain through log-softmax.
          S gsum = 0;
          for (Index k = 0; k < K; ++k) {
            const Index i = n * K + k;
            const S g = logp[i] > log_floor ? -target[i] : S(0);
            dz[i] = g;
            gsum += g;
          }
          for (Index k = 0; k < K; ++k) {
            const Index i = n * K + k;
            dz[i] = upstream * (dz[i] - std::exp(logp[i]) * gsum);
          }
        }
        node.input(0).accumulate(dz);
      });
}

template <typename S>
Var<S> row_cosine(const Var<S>& a, const Var<S>& b, S eps) {
  require_same_shape(a.shape(), b.shape(), "row_cosine");
  if (a.value().rank() != 2) throw ShapeError("row_cosine: expected (N, D)");
  const Index N = a.shape()[0], D = a.shape()[1];
  ArrayS<S> dot(N), na(N), nb(N), denom(N);
  Tensor<S> out(Shape{N});
  for (Index n = 0; n < N; ++n) {
    auto x = a.value().data().segment(n * D, D);
    auto y = b.value().data().segment(n * D, D);
    dot[n] = (x * y).sum();
    na[n] = std::sqrt(x.square().sum());
    nb[n] = std::sqrt(y.square().sum());
    denom[n] = std::max(na[n] * nb[n], eps);
    out[n] = dot[n] / denom[n];
  }
  return Var<S>::make(std::move(out), {a, b}, [N, D, dot, na, nb, denom, eps](auto& node) {
    auto& ia = node.input(0);
    auto& ib = node.input(1);
    ArrayS<S> da, db;
    if (ia.requires_grad) da.resize(N * D);
    if (ib.requires_grad) db.resize(N * D);
    for (Index n = 0; n < N; ++n) {
      const S g = node.grad[n];
      auto x = ia.value.data().segment(n * D, D);
      auto y = ib.value.data().segment(n * D, D);
      const bool floored = na[n] * nb[n] <= eps;
      const S c = dot[n] / denom[n];
      if (ia.requires_grad) {
        if (floored || na[n] == S(0))
          da.segment(n * D, D) = g * y / denom[n];
        else
          da.segment(n * D, D) = g * (y / denom[n] - c * x / (na[n] * na[n]));
      }
      if (ib.requires_grad) {
        if (floored || nb[n] == S(0))
          db.segment(n * D, D) = g * x / denom[n];
        else
          db.segment(n * D, D) = g * (x / denom[n] - c * y / (nb[n] * nb[n]));
      }
    }
    if (ia.requires_grad) ia.accumulate(da);
    if (ib.requires_grad) ib.accumulate(db);
  });
}

#define IDENBAT_INSTANTIATE_OPS(S)                                                          \
  template Var<S> add(const Var<S>&, const Var<S>&);                                       \
  template Var<S> sub(const Var<S>&, const Var<S>&);                                       \
  template Var<S> mul(const Var<S>&, const Var<S>&);                                       \
  template Var<S> scale(const Var<S>&, S);                                                 \
  template Var<S> abs(const Var<S>&);                                                      \
  template Var<S> square(const Var<S>&);                                                   \
  template Var<S> sum(const Var<S>&);                                                      \
  template Var<S> mean(const Var<S>&);                                                     \
  template Var<S> reshape(const Var<S>&, Shape);                                           \
  template Var<S> weighted_sum(const std::vector<Var<S>>&, const std::vector<S>&);         \
  template Var<S> scale_samples(const Var<S>&, const std::vector<S>&);                     \
  template Var<S> clip01(const Var<S>&);                                                   \
  template Var<S> leaky_relu(const Var<S>&, S);                                            \
  template Var<S> prelu(const Var<S>&, const Var<S>&);                                     \
  template Var<S> conv(const Var<S>&, const Var<S>&, const Var<S>&, ConvGeometry);         \
  template Var<S> batch_norm(const Var<S>&, BatchNormStats&, bool);                        \
  template Var<S> channel_affine(const Var<S>&, const Var<S>&, const Var<S>&);             \
  template Var<S> max_pool2(const Var<S>&);                                                \
  template Var<S> upsample_to(const Var<S>&, const Shape&);                                \
  template Var<S> concat_channels(const Var<S>&, const Var<S>&);                           \
  template Var<S> global_avg_pool(const Var<S>&);                                          \
  template Var<S> linear(const Var<S>&, const Var<S>&, const Var<S>&);                     \
  template Tensor<S> softmax_rows(const Tensor<S>&);                                       \
  template Var<S> kl_from_logits(const Var<S>&, const Tensor<S>&);                         \
  template Var<S> row_cosine(const Var<S>&, const Var<S>&, S);

IDENBAT_INSTANTIATE_OPS(float)
IDENBAT_INSTANTIATE_OPS(double)

}  // namespace idenbat
