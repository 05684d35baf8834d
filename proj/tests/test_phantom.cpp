#include "doctest.h"

#include <cstring>
#include <fstream>
#include <set>

#include "idenbat/dataset.hpp"
#include "idenbat/io.hpp"
#include "idenbat/metrics.hpp"
#include "idenbat/phantom.hpp"
#include "support.hpp"

using namespace idenbat;

namespace {

template <typename T>
void put(std::vector<char>& b, std::size_t off, T v) {
  std::memcpy(b.data() + off, &v, sizeof v);
}

// Minimal single-file NIfTI-1 writer with int16 voxels, independent of the library's writer.
void write_int16_nifti(const std::filesystem::path& path, Index nx, Index ny, Index nz,
                       const std::function<std::int16_t(Index, Index, Index)>& value) {
  std::vector<char> b(352 + static_cast<std::size_t>(nx * ny * nz) * 2, 0);
  put<std::int32_t>(b, 0, 348);
  put<std::int16_t>(b, 40, 3);
  put<std::int16_t>(b, 42, static_cast<std::int16_t>(nx));
  put<std::int16_t>(b, 44, static_cast<std::int16_t>(ny));
  put<std::int16_t>(b, 46, static_cast<std::int16_t>(nz));
  for (int a = 3; a < 7; ++a) put<std::int16_t>(b, 42 + 2 * a, 1);
  put<std::int16_t>(b, 70, 4);
  put<std::int16_t>(b, 72, 16);
  put<float>(b, 80, 1.5f);
  put<float>(b, 84, 2.0f);
  put<float>(b, 88, 2.5f);
  put<float>(b, 108, 352.f);
  put<float>(b, 112, 2.f);
  put<float>(b, 116, 1.f);
  std::memcpy(b.data() + 344, "n+1\0", 4);
  for (Index k = 0; k < nz; ++k)
    for (Index j = 0; j < ny; ++j)
      for (Index i = 0; i < nx; ++i)
        put<std::int16_t>(b, 352 + static_cast<std::size_t>(i + nx * (j + ny * k)) * 2, value(i, j, k));
  std::ofstream(path, std::ios::binary).write(b.data(), static_cast<std::streamsize>(b.size()));
}

// Raw-grid bytes written by hand, so out-of-range payloads can be produced.
void write_raw_bytes(const std::filesystem::path& path, const Shape& shape, const std::vector<float>& v) {
  std::vector<char> b(9 + 4 * shape.size() + 4 * v.size());
  std::memcpy(b.data(), "IDBTGRID", 8);
  b[8] = static_cast<char>(shape.size());
  for (std::size_t a = 0; a < shape.size(); ++a) put<std::uint32_t>(b, 9 + 4 * a, static_cast<std::uint32_t>(shape[a]));
  std::memcpy(b.data() + 9 + 4 * shape.size(), v.data(), 4 * v.size());
  std::ofstream(path, std::ios::binary).write(b.data(), static_cast<std::streamsize>(b.size()));
}

std::vector<char> file_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST_SUITE("phantom") {

TEST_CASE("renders are deterministic and valid") {
  const auto id = PhantomIdentity::from_seed(42, 2);
  CHECK(id == PhantomIdentity::from_seed(42, 2));
  const Image a = generate_phantom(id, 60, {64, 64}), b = generate_phantom(id, 60, {64, 64});
  CHECK(a == b);
  CHECK_NOTHROW(a.validate());
  CHECK_THROWS(generate_phantom(id, 47, {64, 64}));
  CHECK_THROWS(generate_phantom(id, 81, {64, 64}));
  CHECK_THROWS(generate_phantom(id, 60, {31, 64}));
  const auto id3 = PhantomIdentity::from_seed(42, 3);
  const Image v = generate_phantom(id3, 70, {32, 48, 32});
  CHECK(v.shape == Shape{32, 48, 32});
  CHECK_NOTHROW(v.validate());
}

TEST_CASE("ventricle area grows strictly with age") {
  for (std::uint64_t seed : {1u, 2u, 3u, 17u, 99u}) {
    const auto id = PhantomIdentity::from_seed(seed, 2);
    Index prev = -1;
    for (int age = 48; age <= 80; ++age) {
      const Index area = ventricle_area(generate_phantom(id, age, {64, 64}), id);
      CAPTURE(seed);
      CAPTURE(age);
      CHECK(area > prev);
      prev = area;
    }
  }
  const auto id3 = PhantomIdentity::from_seed(5, 3);
  Index prev = -1;
  for (int age = 48; age <= 80; age += 5) {
    const Index area = ventricle_area(generate_phantom(id3, age, {32, 32, 32}), id3);
    CHECK(area > prev);
    prev = area;
  }
}

TEST_CASE("different identities differ in at least 1% of pixels") {
  for (std::uint64_t k = 0; k < 10; ++k) {
    const auto a = generate_phantom(PhantomIdentity::from_seed(1000 + k, 2), 64, {64, 64});
    const auto b = generate_phantom(PhantomIdentity::from_seed(2000 + k, 2), 64, {64, 64});
    const double frac = (a.data != b.data).cast<double>().mean();
    CHECK(frac >= 0.01);
  }
}

TEST_CASE("skull mask is age invariant") {
  const auto id = PhantomIdentity::from_seed(7, 2);
  const auto ref = render_phantom(id, 48, {64, 64}).brain_mask;
  for (int age = 49; age <= 80; ++age) CHECK(render_phantom(id, age, {64, 64}).brain_mask == ref);
}

TEST_CASE("augmentation") {
  std::mt19937_64 rng(1);
  const Image img = generate_phantom(PhantomIdentity::from_seed(3, 2), 55, {64, 64});
  CHECK(flip(flip(img, 1), 1) == img);
  CHECK(!(flip(img, 1) == img));
  CHECK(augment(img, false, 0.0) == img);

  Image delta({33, 33});
  delta[16 * 33 + 16] = 1.f;
  const Image blurred = gaussian_blur(delta, 1.0);
  CHECK(blurred[16 * 33 + 16] < 1.f);
  CHECK(blurred.data.cast<double>().sum() == doctest::Approx(1.0).epsilon(1e-3));
  // Discrete Gaussian oracle at offset (0, 1): ratio to the centre is exp(-1/2).
  CHECK(blurred[16 * 33 + 17] / blurred[16 * 33 + 16] == doctest::Approx(std::exp(-0.5)).epsilon(1e-5));

  const Image v = generate_phantom(PhantomIdentity::from_seed(3, 3), 55, {32, 32, 32});
  CHECK(flip(flip(v, 0), 0) == v);
  Rng r1(5), r2(5);
  CHECK(augment(img, r1, 1.0) == augment(img, r2, 1.0));
  const Image a = augment(img, r1, 1.0);
  CHECK((a.data >= 0.f).all());
  CHECK((a.data <= 1.f).all());
}

TEST_CASE("center crop") {
  Image src({229, 193});
  for (Index i = 0; i < src.size(); ++i) src[i] = static_cast<float>(i % 1000) / 1000.f;
  const auto m = crop_margins(src.shape, {208, 176});
  CHECK(m[0] == std::pair<Index, Index>{10, 11});
  CHECK(m[1] == std::pair<Index, Index>{8, 9});
  const Image c = center_crop(src, {208, 176});
  CHECK(c.shape == Shape{208, 176});
  CHECK(c[0] == src[10 * 193 + 8]);
  CHECK(c[c.size() - 1] == src[(10 + 207) * 193 + 8 + 175]);
  CHECK(center_crop(src, src.shape) == src);
  CHECK_THROWS(center_crop(src, {230, 10}));

  Image six({6, 6});
  for (Index i = 0; i < 36; ++i) six[i] = static_cast<float>(i) / 36.f;
  const Image four = center_crop(six, {4, 4});
  for (Index r = 0; r < 4; ++r)
    for (Index col = 0; col < 4; ++col) CHECK(four[r * 4 + col] == six[(r + 1) * 6 + col + 1]);
}

TEST_CASE("volume io") {
  const auto dir = testing::scratch_dir("io");
  std::mt19937_64 rng(2);
  const Image vol = testing::random_image({32, 48, 32}, rng);
  save_volume(vol, dir / "v.grid");
  const Image back = load_volume(dir / "v.grid");
  CHECK(back.shape == Shape{32, 48, 32});
  CHECK(back == vol);
  CHECK(read_raw_grid(dir / "v.grid") == vol);

  save_volume(Image({8, 8}, 0.4f), dir / "flat.grid");
  const Image flat = load_volume(dir / "flat.grid");
  CHECK((flat.data == 0.f).all());

  std::vector<float> wide(16);
  for (int i = 0; i < 16; ++i) wide[static_cast<std::size_t>(i)] = -3.f + static_cast<float>(i);
  write_raw_bytes(dir / "wide.grid", {4, 4}, wide);
  const Image norm = load_volume(dir / "wide.grid");
  CHECK(norm.data.minCoeff() == 0.f);
  CHECK(norm.data.maxCoeff() == 1.f);
  CHECK(norm[4] == doctest::Approx(4.f / 15.f));

  for (const char* name : {"v.nii", "v.nii.gz"}) {
    save_volume(vol, dir / name);
    const Image n = read_nifti(dir / name);
    CHECK(n == vol);
  }

  write_int16_nifti(dir / "h.nii", 5, 4, 3, [](Index i, Index j, Index k) { return static_cast<std::int16_t>(i + 10 * j + 100 * k); });
  const Image h = read_nifti(dir / "h.nii");
  REQUIRE(h.shape == Shape{5, 4, 3});
  CHECK(h.spacing == std::vector<double>{1.5, 2.0, 2.5});
  CHECK(h[(2 * 4 + 3) * 3 + 1] == 2.f * (2 + 30 + 100) + 1.f);
  const Image hn = load_volume(dir / "h.nii");
  CHECK(hn.data.minCoeff() == 0.f);
  CHECK(hn.data.maxCoeff() == 1.f);
  CHECK(hn.spacing == h.spacing);

  std::ofstream(dir / "junk.bin") << "not a volume at all, certainly not 348 bytes";
  CHECK_THROWS_AS(load_volume(dir / "junk.bin"), IoError);
  CHECK_THROWS_AS(load_volume(dir / "missing.grid"), IoError);

  std::vector<float> nan(16, 0.5f);
  nan[3] = std::numeric_limits<float>::quiet_NaN();
  write_raw_bytes(dir / "nan.grid", {4, 4}, nan);
  write_raw_bytes(dir / "short.grid", {4, 4}, std::vector<float>(15, 0.5f));
  CHECK_THROWS_AS(load_volume(dir / "short.grid"), IoError);
  CHECK_THROWS(save_raw_grid(Image({4, 4}, 2.f), dir / "bad.grid"));
  CHECK_THROWS(load_volume(dir / "nan.grid"));

  const Image slice = generate_phantom(PhantomIdentity::from_seed(1, 2), 60, {64, 64});
  save_png_gray(slice, dir / "s.png");
  const Image png = read_png_gray(dir / "s.png");
  CHECK(png.shape == slice.shape);
  CHECK(((png.data - slice.data).abs() <= 0.5f / 255.f + 1e-6f).all());
  CHECK_NOTHROW(save_png_diverging(difference_map(slice, generate_phantom(PhantomIdentity::from_seed(1, 2), 70, {64, 64})), dir / "d.png"));
}

TEST_CASE("dataset building") {
  const auto big = build_dataset(230, 48, 80, {64, 64}, 0);
  CHECK(big.records.size() == 7590);
  const auto small = build_dataset(2, 48, 49, {64, 64}, 0);
  CHECK(small.records.size() == 4);
  std::map<int, int> per_age;
  for (const auto& r : small.records) ++per_age[r.age];
  CHECK(per_age == std::map<int, int>{{48, 2}, {49, 2}});

  std::set<std::string> ids, subjects;
  std::set<std::uint64_t> seeds;
  for (const auto& r : big.records) {
    ids.insert(r.subject_id);
    subjects.insert(r.subject);
    seeds.insert(r.identity->seed);
  }
  CHECK(ids.size() == 7590);
  CHECK(subjects.size() == 7590);
  CHECK(seeds.size() == 7590);
  CHECK_THROWS(build_dataset(0, 48, 80, {64, 64}, 0));

  const auto lon = build_dataset(2, 48, 80, {64, 64}, 3, true, 5);
  std::map<std::string, std::vector<SubjectRecord>> by_subject;
  for (const auto& r : lon.records) by_subject[r.subject].push_back(r);
  CHECK(by_subject.size() == 2 * (80 - 5 - 48 + 1));
  for (const auto& [s, recs] : by_subject) {
    REQUIRE(recs.size() == 2);
    CHECK(recs[0].identity == recs[1].identity);
    CHECK(std::abs(recs[0].age - recs[1].age) >= 3);
  }
}

TEST_CASE("datasets are reproducible on disk") {
  const auto dir = testing::scratch_dir("dataset");
  auto m1 = build_dataset(1, 48, 52, {32, 32}, 7);
  auto m2 = build_dataset(1, 48, 52, {32, 32}, 7);
  write_dataset(m1, dir / "a");
  write_dataset(m2, dir / "b");
  CHECK(file_bytes(dir / "a" / "manifest.json") == file_bytes(dir / "b" / "manifest.json"));
  for (const auto& r : m1.records) {
    REQUIRE(r.image_path);
    CHECK(file_bytes(dir / "a" / *r.image_path) == file_bytes(dir / "b" / *r.image_path));
  }
  const auto loaded = load_manifest(dir / "a" / "manifest.json");
  CHECK(loaded.records.size() == 5);
  CHECK(loaded.seed == 7);
  const Dataset data(loaded, dir / "a");
  CHECK(data.image(2) == generate_phantom(*m1.records[2].identity, m1.records[2].age, {32, 32}));
  CHECK(data.indices_at_age(50).size() == 1);
}

}
