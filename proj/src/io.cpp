#include "idenbat/io.hpp"

#include <png.h>
#include <zlib.h>

#include <array>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <vector>

namespace idenbat {

namespace fs = std::filesystem;

namespace {

static_assert(std::endian::native == std::endian::little,
              "raw grid and NIfTI writers assume a little-endian host");

std::vector<char> read_gz(const fs::path& path) {
  gzFile f = gzopen(path.string().c_str(), "rb");
  if (!f) throw IoError("cannot open " + path.string());
  std::vector<char> buf;
  std::array<char, 1 << 16> chunk{};
  int n = 0;
  while ((n = gzread(f, chunk.data(), static_cast<unsigned>(chunk.size()))) > 0)
    buf.insert(buf.end(), chunk.begin(), chunk.begin() + n);
  const bool failed = n < 0;
  gzclose(f);
  if (failed) throw IoError("read error in " + path.string());
  return buf;
}

template <typename T>
T read_at(const std::vector<char>& buf, std::size_t off, bool swap) {
  if (off + sizeof(T) > buf.size()) throw IoError("truncated file");
  T v;
  std::memcpy(&v, buf.data() + off, sizeof(T));
  if (swap) {
    auto* b = reinterpret_cast<unsigned char*>(&v);
    std::reverse(b, b + sizeof(T));
  }
  return v;
}

template <typename T>
void write_at(std::vector<char>& buf, std::size_t off, T v) {
  std::memcpy(buf.data() + off, &v, sizeof(T));
}

bool has_magic(const std::vector<char>& buf) {
  return buf.size() >= 8 && std::memcmp(buf.data(), kRawGridMagic, 8) == 0;
}

Image parse_raw_grid(const std::vector<char>& buf, const std::string& name) {
  if (!has_magic(buf)) throw IoError(name + ": not a raw grid (bad magic)");
  if (buf.size() < 9) throw IoError(name + ": truncated header");
  const int dims = static_cast<unsigned char>(buf[8]);
  if (dims != 2 && dims != 3) throw IoError(name + ": unsupported dimensionality");
  Shape shape;
  std::size_t off = 9;
  for (int a = 0; a < dims; ++a, off += 4) shape.push_back(read_at<std::uint32_t>(buf, off, false));
  Image img(shape);
  const auto bytes = static_cast<std::size_t>(img.size()) * sizeof(float);
  if (buf.size() != off + bytes) throw IoError(name + ": payload size does not match extents");
  std::memcpy(img.data.data(), buf.data() + off, bytes);
  if (!img.data.allFinite()) throw IoError(name + ": non-finite voxels");
  return img;
}

Image parse_nifti(const std::vector<char>& buf, const std::string& name) {
  if (buf.size() < 348) throw IoError(name + ": truncated NIfTI header");
  bool swap = false;
  auto hdr = read_at<std::int32_t>(buf, 0, false);
  if (hdr != 348) {
    swap = true;
    if (read_at<std::int32_t>(buf, 0, true) != 348) throw IoError(name + ": not a NIfTI-1 file");
  }
  if (std::memcmp(buf.data() + 344, "n+1", 3) != 0)
    throw IoError(name + ": only single-file NIfTI-1 (n+1) is supported");
  const int ndim = read_at<std::int16_t>(buf, 40, swap);
  if (ndim < 2 || ndim > 4) throw IoError(name + ": unsupported NIfTI rank");
  Shape nshape;
  for (int a = 0; a < ndim; ++a) nshape.push_back(read_at<std::int16_t>(buf, 42 + 2 * a, swap));
  if (ndim == 4) {
    if (nshape[3] != 1) throw IoError(name + ": 4-D series are not supported");
    nshape.pop_back();
  }
  const int datatype = read_at<std::int16_t>(buf, 70, swap);
  const auto vox_offset = static_cast<std::size_t>(read_at<float>(buf, 108, swap));
  float slope = read_at<float>(buf, 112, swap);
  const float inter = read_at<float>(buf, 116, swap);
  if (slope == 0.f || !std::isfinite(slope)) slope = 1.f;
  std::vector<double> spacing;
  for (std::size_t a = 0; a < nshape.size(); ++a) {
    const double p = read_at<float>(buf, 80 + 4 * a, swap);
    spacing.push_back(p > 0 ? p : 1.0);
  }

  std::size_t elem = 0;
  switch (datatype) {
    case 2: case 256: elem = 1; break;
    case 4: case 512: elem = 2; break;
    case 8: case 16: elem = 4; break;
    case 64: elem = 8; break;
    default: throw IoError(name + ": unsupported NIfTI datatype " + std::to_string(datatype));
  }
  Image img(nshape);
  img.spacing = spacing;
  const Index total = img.size();
  if (buf.size() < vox_offset + static_cast<std::size_t>(total) * elem)
    throw IoError(name + ": truncated voxel data");

  // NIfTI stores x fastest; Image stores the last axis fastest.
  const int d = static_cast<int>(nshape.size());
  const Index nx = nshape[0], ny = nshape[1], nz = d == 3 ? nshape[2] : 1;
  for (Index k = 0; k < nz; ++k)
    for (Index j = 0; j < ny; ++j)
      for (Index i = 0; i < nx; ++i) {
        const std::size_t src = vox_offset + static_cast<std::size_t>(i + nx * (j + ny * k)) * elem;
        double v = 0;
        switch (datatype) {
          case 2: v = read_at<std::uint8_t>(buf, src, false); break;
          case 256: v = read_at<std::int8_t>(buf, src, false); break;
          case 4: v = read_at<std::int16_t>(buf, src, swap); break;
          case 512: v = read_at<std::uint16_t>(buf, src, swap); break;
          case 8: v = read_at<std::int32_t>(buf, src, swap); break;
          case 16: v = read_at<float>(buf, src, swap); break;
          case 64: v = read_at<double>(buf, src, swap); break;
        }
        v = v * slope + inter;
        if (!std::isfinite(v)) throw IoError(name + ": non-finite voxels");
        const Index dst = d == 3 ? (i * ny + j) * nz + k : i * ny + j;
        img.data[dst] = static_cast<float>(v);
      }
  return img;
}

void write_file(const fs::path& path, const std::vector<char>& bytes, bool gzip) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  if (gzip) {
    gzFile f = gzopen(path.string().c_str(), "wb");
    if (!f) throw IoError("cannot write " + path.string());
    const int n = gzwrite(f, bytes.data(), static_cast<unsigned>(bytes.size()));
    gzclose(f);
    if (n != static_cast<int>(bytes.size())) throw IoError("short write to " + path.string());
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("short write to " + path.string());
}

bool is_nifti_path(const fs::path& p) {
  const std::string s = p.string();
  auto ends = [&s](const std::string& suf) {
    return s.size() >= suf.size() && s.compare(s.size() - suf.size(), suf.size(), suf) == 0;
  };
  return ends(".nii") || ends(".nii.gz");
}

void write_png(const fs::path& path, int width, int height, int color_type,
               const std::vector<unsigned char>& pixels) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::unique_ptr<FILE, int (*)(FILE*)> fp(std::fopen(path.string().c_str(), "wb"), &std::fclose);
  if (!fp) throw IoError("cannot write " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw IoError("libpng initialisation failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("PNG encoding failed for " + path.string());
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), 8,
               color_type, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  const int channels = color_type == PNG_COLOR_TYPE_RGB ? 3 : 1;
  for (int y = 0; y < height; ++y)
    png_write_row(png, const_cast<png_bytep>(pixels.data() + static_cast<std::size_t>(y) * width * channels));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

void require_2d(const Image& img, const char* what) {
  if (img.dims() != 2) throw IoError(std::string(what) + ": PNG export needs a 2-D image");
}

}  // namespace

void save_raw_grid(const Image& img, const fs::path& path) {
  img.validate();
  std::vector<char> bytes(9 + 4 * img.shape.size() + static_cast<std::size_t>(img.size()) * 4);
  std::memcpy(bytes.data(), kRawGridMagic, 8);
  bytes[8] = static_cast<char>(img.dims());
  std::size_t off = 9;
  for (Index e : img.shape) {
    write_at<std::uint32_t>(bytes, off, static_cast<std::uint32_t>(e));
    off += 4;
  }
  std::memcpy(bytes.data() + off, img.data.data(), static_cast<std::size_t>(img.size()) * 4);
  write_file(path, bytes, false);
}

Image read_raw_grid(const fs::path& path) { return parse_raw_grid(read_gz(path), path.string()); }

Image read_nifti(const fs::path& path) { return parse_nifti(read_gz(path), path.string()); }

void save_nifti(const Image& img, const fs::path& path) {
  if (img.dims() != 2 && img.dims() != 3) throw IoError("save_nifti: need 2-D or 3-D image");
  const std::size_t vox_offset = 352;
  std::vector<char> bytes(vox_offset + static_cast<std::size_t>(img.size()) * 4, 0);
  write_at<std::int32_t>(bytes, 0, 348);
  write_at<std::int16_t>(bytes, 40, static_cast<std::int16_t>(img.dims()));
  for (int a = 0; a < 7; ++a) {
    const std::int16_t e = a < img.dims() ? static_cast<std::int16_t>(img.shape[a]) : 1;
    write_at<std::int16_t>(bytes, 42 + 2 * a, e);
  }
  write_at<std::int16_t>(bytes, 70, 16);
  write_at<std::int16_t>(bytes, 72, 32);
  write_at<float>(bytes, 76, 1.f);
  for (int a = 0; a < img.dims(); ++a) {
    const double sp = a < static_cast<int>(img.spacing.size()) ? img.spacing[a] : 1.0;
    write_at<float>(bytes, 80 + 4 * a, static_cast<float>(sp));
  }
  write_at<float>(bytes, 108, static_cast<float>(vox_offset));
  write_at<float>(bytes, 112, 1.f);
  std::memcpy(bytes.data() + 344, "n+1\0", 4);
  const Index nx = img.shape[0], ny = img.shape[1], nz = img.dims() == 3 ? img.shape[2] : 1;
  for (Index k = 0; k < nz; ++k)
    for (Index j = 0; j < ny; ++j)
      for (Index i = 0; i < nx; ++i) {
        const Index src = img.dims() == 3 ? (i * ny + j) * nz + k : i * ny + j;
        write_at<float>(bytes, vox_offset + static_cast<std::size_t>(i + nx * (j + ny * k)) * 4,
                        img.data[src]);
      }
  const std::string s = path.string();
  write_file(path, bytes, s.size() > 3 && s.substr(s.size() - 3) == ".gz");
}

void normalize_min_max(Image& img) {
  if (!img.data.allFinite()) throw IoError("normalize: non-finite voxels");
  if (img.size() == 0) return;
  const float lo = img.data.minCoeff(), hi = img.data.maxCoeff();
  if (!(hi > lo)) {
    img.data.setZero();
    return;
  }
  img.data = (img.data - lo) / (hi - lo);
  img.data = img.data.max(0.f).min(1.f);
}

Image load_volume(const fs::path& path) {
  if (!fs::exists(path)) throw IoError("no such file: " + path.string());
  const auto buf = read_gz(path);
  Image img;
  if (has_magic(buf)) {
    img = parse_raw_grid(buf, path.string());
    const float lo = img.data.minCoeff(), hi = img.data.maxCoeff();
    if (lo >= 0.f && hi <= 1.f && hi > lo) return img;
  } else {
    img = parse_nifti(buf, path.string());
  }
  normalize_min_max(img);
  return img;
}

void save_volume(const Image& img, const fs::path& path) {
  if (is_nifti_path(path))
    save_nifti(img, path);
  else
    save_raw_grid(img, path);
}

void save_png_gray(const Image& img, const fs::path& path) {
  require_2d(img, "save_png_gray");
  const int h = static_cast<int>(img.shape[0]), w = static_cast<int>(img.shape[1]);
  std::vector<unsigned char> px(static_cast<std::size_t>(h) * w);
  for (Index i = 0; i < img.size(); ++i)
    px[static_cast<std::size_t>(i)] =
        static_cast<unsigned char>(std::lround(std::clamp(img.data[i], 0.f, 1.f) * 255.f));
  write_png(path, w, h, PNG_COLOR_TYPE_GRAY, px);
}

void save_png_diverging(const Image& map, const fs::path& path, double max_abs) {
  require_2d(map, "save_png_diverging");
  if (max_abs <= 0) max_abs = map.size() ? static_cast<double>(map.data.abs().maxCoeff()) : 0.0;
  if (max_abs <= 0) max_abs = 1.0;
  const int h = static_cast<int>(map.shape[0]), w = static_cast<int>(map.shape[1]);
  std::vector<unsigned char> px(static_cast<std::size_t>(h) * w * 3);
  for (Index i = 0; i < map.size(); ++i) {
    const double t = std::clamp(map.data[i] / max_abs, -1.0, 1.0);
    // Negative -> blue, zero -> white, positive -> red.
    const double r = t < 0 ? 1.0 + t : 1.0;
    const double g = 1.0 - std::abs(t);
    const double b = t > 0 ? 1.0 - t : 1.0;
    auto* p = px.data() + 3 * static_cast<std::size_t>(i);
    p[0] = static_cast<unsigned char>(std::lround(r * 255));
    p[1] = static_cast<unsigned char>(std::lround(g * 255));
    p[2] = static_cast<unsigned char>(std::lround(b * 255));
  }
  write_png(path, w, h, PNG_COLOR_TYPE_RGB, px);
}

Image read_png_gray(const fs::path& path) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.string().c_str()))
    throw IoError("cannot read PNG " + path.string());
  image.format = PNG_FORMAT_GRAY;
  std::vector<unsigned char> px(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, px.data(), 0, nullptr)) {
    png_image_free(&image);
    throw IoError("cannot decode PNG " + path.string());
  }
  Image img(Shape{static_cast<Index>(image.height), static_cast<Index>(image.width)});
  for (Index i = 0; i < img.size(); ++i) img.data[i] = px[static_cast<std::size_t>(i)] / 255.f;
  return img;
}

}  // namespace idenbat
