#include "idenbat/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

#include "idenbat/random.hpp"

namespace idenbat {

namespace {

constexpr double kPi = 3.14159265358979323846;

constexpr float kBackground = 0.0f;
constexpr float kCsf = 0.12f;
constexpr float kVentricle = 0.06f;
constexpr float kGrey = 0.50f;
constexpr float kWhite = 0.78f;

struct Sulcus {
  std::vector<double> direction;  // unit vector in skull-normalized coordinates
  double width;                   // angular half-width, radians
  double depth;                   // fraction of the cortical band
};

struct TextureMode {
  std::vector<double> freq;
  double phase;
  double amplitude;
};

std::vector<double> random_unit(Rng& rng, int dims) {
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<double> v(static_cast<std::size_t>(dims));
  double n = 0;
  do {
    n = 0;
    for (auto& x : v) {
      x = g(rng);
      n += x * x;
    }
  } while (n < 1e-12);
  for (auto& x : v) x /= std::sqrt(n);
  return v;
}

std::vector<Sulcus> make_sulci(std::uint64_t seed, int dims) {
  Rng rng(seed);
  std::uniform_int_distribution<int> count(dims == 2 ? 10 : 36, dims == 2 ? 16 : 56);
  std::uniform_real_distribution<double> width(0.035, 0.07), depth(0.45, 1.0);
  std::vector<Sulcus> s(static_cast<std::size_t>(count(rng)));
  for (auto& x : s) {
    x.direction = random_unit(rng, dims);
    x.width = width(rng);
    x.depth = depth(rng);
  }
  return s;
}

std::vector<TextureMode> make_texture(std::uint64_t seed, int dims) {
  Rng rng(seed);
  std::uniform_real_distribution<double> mag(2.0, 6.0), phase(0.0, 2 * kPi), amp(0.3, 1.0);
  std::vector<TextureMode> modes(6);
  double total = 0;
  for (auto& m : modes) {
    const auto dir = random_unit(rng, dims);
    const double f = mag(rng);
    for (double d : dir) m.freq.push_back(d * f);
    m.phase = phase(rng);
    m.amplitude = amp(rng);
    total += m.amplitude;
  }
  for (auto& m : modes) m.amplitude *= 0.04 / total;
  return modes;
}

void check_resolution(const Shape& res) {
  if (res.size() != 2 && res.size() != 3)
    throw ShapeError("phantom: resolution must be 2-D or 3-D, got " + shape_string(res));
  for (Index r : res)
    if (r < 32) throw ShapeError("phantom: every axis needs >= 32 voxels, got " + shape_string(res));
}

// Per-voxel geometry shared by the renderer and the region helpers.
struct VoxelGeometry {
  std::vector<double> u;  // centred coordinates, fraction of extent
  std::vector<double> v;  // skull-normalized coordinates
  double radius = 0;      // normalized ellipse radius; 1 on the skull boundary
};

template <typename Fn>
void for_each_voxel(const Shape& res, const PhantomIdentity& id, Fn&& fn) {
  const int dims = static_cast<int>(res.size());
  VoxelGeometry g;
  g.u.resize(static_cast<std::size_t>(dims));
  g.v.resize(static_cast<std::size_t>(dims));
  std::vector<Index> pos(static_cast<std::size_t>(dims), 0);
  const Index total = shape_size(res);
  for (Index i = 0; i < total; ++i) {
    double r2 = 0;
    for (int a = 0; a < dims; ++a) {
      g.u[a] = (static_cast<double>(pos[a]) + 0.5) / static_cast<double>(res[a]) - 0.5;
      g.v[a] = g.u[a] / id.skull_axes[a];
      r2 += g.v[a] * g.v[a];
    }
    g.radius = std::sqrt(r2);
    fn(i, g);
    for (int a = dims - 1; a >= 0; --a) {
      if (++pos[a] < res[a]) break;
      pos[a] = 0;
    }
  }
}

// Two lateral ventricle lobes; geometry is fixed per identity so it never changes with age.
struct LobeGeometry {
  double offset;      // lateral offset of each lobe centre, skull-normalized
  double elongation;  // axis ratio along the non-lateral axes
  int lateral;
};

LobeGeometry lobe_geometry(const PhantomIdentity& id, int dims) {
  Rng rng(derive_seed(id.seed, 101));
  std::uniform_real_distribution<double> offset(0.10, 0.16), elong(1.2, 1.6);
  LobeGeometry g;
  g.offset = offset(rng);
  g.elongation = elong(rng);
  g.lateral = lateral_axis(dims);
  return g;
}

// Normalized distance to the nearer lobe.
double ventricle_potential(const std::vector<double>& v, const PhantomIdentity& id,
                           const LobeGeometry& lg) {
  auto lobe = [&](double side, double grow) {
    double d2 = 0;
    for (std::size_t a = 0; a < v.size(); ++a) {
      const bool lat = static_cast<int>(a) == lg.lateral;
      const double x = (v[a] - (lat ? side * lg.offset : 0.0)) / (lat ? 0.8 : lg.elongation);
      d2 += x * x;
    }
    return std::sqrt(d2) / grow;
  };
  return std::min(lobe(-1.0, 1.0 + id.asymmetry), lobe(1.0, 1.0 - id.asymmetry));
}

}  // namespace

PhantomIdentity PhantomIdentity::from_seed(std::uint64_t seed, int dims) {
  if (dims != 2 && dims != 3) throw std::invalid_argument("PhantomIdentity: dims must be 2 or 3");
  Rng rng(derive_seed(seed, 0));
  std::uniform_real_distribution<double> axis(0.36, 0.44), vent(0.03, 0.05), asym(-0.08, 0.08);
  PhantomIdentity id;
  id.seed = seed;
  for (int a = 0; a < dims; ++a) id.skull_axes.push_back(axis(rng));
  id.ventricle_base = vent(rng);
  id.sulci_seed = rng();
  id.texture_seed = rng();
  id.asymmetry = asym(rng);
  return id;
}

void PhantomIdentity::validate() const {
  if (skull_axes.size() != 2 && skull_axes.size() != 3)
    throw std::invalid_argument("PhantomIdentity: need 2 or 3 skull axes");
  for (double a : skull_axes)
    if (!(a > 0 && a < 0.5)) throw std::invalid_argument("PhantomIdentity: skull axis out of (0, 0.5)");
  if (!(ventricle_base > 0 && ventricle_base < 0.1))
    throw std::invalid_argument("PhantomIdentity: ventricle_base out of (0, 0.1)");
  if (!(asymmetry >= -0.1 && asymmetry <= 0.1))
    throw std::invalid_argument("PhantomIdentity: asymmetry out of [-0.1, 0.1]");
}

PhantomRender render_phantom(const PhantomIdentity& id, double age, const Shape& res) {
  if (!std::isfinite(age) || age < AgingModel::kAgeMin || age > AgingModel::kAgeMax)
    throw std::out_of_range("phantom: age " + std::to_string(age) + " outside [48, 80]");
  check_resolution(res);
  id.validate();
  const int dims = static_cast<int>(res.size());
  if (static_cast<int>(id.skull_axes.size()) != dims)
    throw ShapeError("phantom: identity dimensionality does not match resolution");

  const auto sulci = make_sulci(id.sulci_seed, dims);
  const auto texture = make_texture(id.texture_seed, dims);
  const LobeGeometry lobes = lobe_geometry(id, dims);
  const double rim = AgingModel::rim_width(age);
  const double cortex_inner = 1.0 - rim - AgingModel::kCortexWidth;

  PhantomRender out;
  out.image = Image(res);
  const Index total = out.image.size();
  out.brain_mask.assign(static_cast<std::size_t>(total), 0);
  out.ventricle_mask.assign(static_cast<std::size_t>(total), 0);
  out.csf_mask.assign(static_cast<std::size_t>(total), 0);

  std::vector<std::pair<double, Index>> candidates;
  Index brain_voxels = 0;
  for_each_voxel(res, id, [&](Index i, const VoxelGeometry& g) {
    const auto k = static_cast<std::size_t>(i);
    if (g.radius > 1.0) {
      out.image[i] = kBackground;
      return;
    }
    out.brain_mask[k] = 1;
    ++brain_voxels;
    double tex = 0;
    for (const auto& m : texture) {
      double phase = m.phase;
      for (int a = 0; a < dims; ++a) phase += 2 * kPi * m.freq[a] * g.u[a];
      tex += m.amplitude * std::cos(phase);
    }
    if (g.radius > 1.0 - rim) {
      out.image[i] = kCsf;
      out.csf_mask[k] = 1;
      return;
    }
    if (g.radius > cortex_inner) {
      // Sulcal indentation depth along this direction.
      double s = 0;
      if (g.radius > 1e-9) {
        for (const auto& sc : sulci) {
          double c = 0;
          for (int a = 0; a < dims; ++a) c += sc.direction[a] * g.v[a] / g.radius;
          const double ang = std::acos(std::clamp(c, -1.0, 1.0)) / sc.width;
          s = std::max(s, sc.depth * std::exp(-ang * ang));
        }
      }
      if (g.radius > 1.0 - rim - AgingModel::kCortexWidth * s) {
        out.image[i] = kCsf;
        out.csf_mask[k] = 1;
      } else {
        out.image[i] = static_cast<float>(kGrey + 0.5 * tex);
      }
      return;
    }
    out.image[i] = static_cast<float>(kWhite + tex);
    if (g.radius < AgingModel::kVentricleRegion)
      candidates.emplace_back(ventricle_potential(g.v, id, lobes), i);
  });

  // The ventricle is the n(age) central voxels of lowest potential: nested across ages,
  // with a voxel count that tracks the aging model exactly.
  std::sort(candidates.begin(), candidates.end());
  const double frac = AgingModel::ventricle_fraction(id.ventricle_base, age);
  const auto n = std::min<std::size_t>(
      candidates.size(), static_cast<std::size_t>(std::llround(frac * static_cast<double>(brain_voxels))));
  for (std::size_t j = 0; j < n; ++j) {
    const Index i = candidates[j].second;
    out.image[i] = kVentricle;
    out.ventricle_mask[static_cast<std::size_t>(i)] = 1;
  }
  out.image.data = out.image.data.max(0.f).min(1.f);
  return out;
}

Image generate_phantom(const PhantomIdentity& identity, double age, const Shape& resolution) {
  return render_phantom(identity, age, resolution).image;
}

std::vector<std::uint8_t> ventricle_region(const PhantomIdentity& id, const Shape& res) {
  check_resolution(res);
  std::vector<std::uint8_t> mask(static_cast<std::size_t>(shape_size(res)), 0);
  for_each_voxel(res, id, [&](Index i, const VoxelGeometry& g) {
    mask[static_cast<std::size_t>(i)] = g.radius < AgingModel::kVentricleRegion;
  });
  return mask;
}

Index ventricle_area(const Image& image, const PhantomIdentity& identity, float threshold) {
  const auto region = ventricle_region(identity, image.shape);
  Index count = 0;
  for (Index i = 0; i < image.size(); ++i)
    if (region[static_cast<std::size_t>(i)] && image[i] < threshold) ++count;
  return count;
}

}  // namespace idenbat
