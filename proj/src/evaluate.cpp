#include "idenbat/evaluate.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "idenbat/io.hpp"
#include "idenbat/losses.hpp"
#include "idenbat/phantom.hpp"
#include "idenbat/train.hpp"

namespace idenbat {

namespace {

std::vector<const Image*> slice(const std::vector<Image>& v, std::size_t i, std::size_t n) {
  std::vector<const Image*> p;
  for (std::size_t j = i; j < std::min(v.size(), i + n); ++j) p.push_back(&v[j]);
  return p;
}

std::vector<float> flatten_sample(const Tensor<float>& t, Index n) {
  const Index per = t.sample_size();
  std::vector<float> out(static_cast<std::size_t>(per));
  std::copy(t.ptr() + n * per, t.ptr() + (n + 1) * per, out.begin());
  return out;
}

// feature_cosine restricted to sample n of each level.
FeatureStack<float> sample_stack(const FeatureStack<float>& f, Index n) {
  FeatureStack<float> out;
  for (const auto& level : f) {
    Shape s = level.shape();
    s[0] = 1;
    const Index per = level.value().sample_size();
    out.emplace_back(Tensor<float>(s, level.value().data().segment(n * per, per)));
  }
  return out;
}

}  // namespace

PadReport pad_from_predictions(const std::vector<double>& predicted, const std::vector<double>& targets) {
  if (predicted.size() != targets.size() || predicted.empty())
    throw std::invalid_argument("pad: need matching, non-empty prediction and target lists");
  PadReport r;
  std::map<std::string, double> sums;
  double total = 0;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    const double err = std::abs(predicted[i] - targets[i]);
    total += err;
    const long age = std::lround(targets[i]);
    for (const auto& c : kAgeClusters)
      if (age >= c.lo && age <= c.hi) {
        sums[c.name] += err;
        ++r.counts[c.name];
        break;
      }
  }
  r.overall = total / static_cast<double>(targets.size());
  for (const auto& [k, s] : sums) r.clusters[k] = s / static_cast<double>(r.counts[k]);
  return r;
}

std::vector<Image> transform_images(AgeTransformer<float>& model, const std::vector<Image>& images,
                                    const std::vector<double>& target_ages, std::size_t batch) {
  if (images.size() != target_ages.size()) throw std::invalid_argument("transform: one age per image");
  std::vector<Image> out;
  for (std::size_t i = 0; i < images.size(); i += batch) {
    const auto ptrs = slice(images, i, batch);
    std::vector<double> ages(target_ages.begin() + static_cast<std::ptrdiff_t>(i),
                             target_ages.begin() + static_cast<std::ptrdiff_t>(i + ptrs.size()));
    Var<float> y = model.transform(Var<float>(to_batch<float>(ptrs)), ages, false);
    for (Index n = 0; n < static_cast<Index>(ptrs.size()); ++n) {
      out.push_back(from_batch(y.value(), n));
      out.back().spacing = images[i + static_cast<std::size_t>(n)].spacing;
    }
  }
  return out;
}

PadReport pad(AgeTransformer<float>& model, const std::vector<Image>& images,
              const std::vector<double>& target_ages, Encoder<float>& regressor) {
  const auto generated = transform_images(model, images, target_ages);
  return pad_from_predictions(predict_ages(regressor, generated), target_ages);
}

nlohmann::json MetricReport::to_json() const {
  nlohmann::json j{{"psnr", psnr}, {"ssim", ssim}, {"mse", mse}, {"pairs", pairs}};
  if (pad) {
    nlohmann::json clusters;
    for (const auto& c : kAgeClusters) {
      auto it = pad->clusters.find(c.name);
      clusters[c.name] = it == pad->clusters.end() ? nlohmann::json(nullptr) : nlohmann::json(it->second);
    }
    j["pad"] = pad->overall;
    j["pad_clusters"] = clusters;
  } else {
    j["pad"] = nullptr;
  }
  return j;
}

std::string MetricReport::to_csv() const {
  std::ostringstream out;
  out << "metric,value\n";
  out.precision(9);
  out << "psnr," << psnr << "\nssim," << ssim << "\nmse," << mse << "\npairs," << pairs << '\n';
  if (pad) {
    out << "pad," << pad->overall << '\n';
    for (const auto& c : kAgeClusters) {
      out << "pad_" << c.name << ',';
      auto it = pad->clusters.find(c.name);
      if (it != pad->clusters.end()) out << it->second;
      out << '\n';
    }
  }
  return out.str();
}

MetricReport evaluate_pairs(AgeTransformer<float>& model, const Dataset& pairs, Encoder<float>* regressor) {
  std::map<std::string, std::vector<std::size_t>> by_subject;
  for (std::size_t i = 0; i < pairs.size(); ++i) by_subject[pairs.record(i).subject].push_back(i);
  std::vector<Image> sources, truths;
  std::vector<double> targets;
  for (const auto& [subject, idx] : by_subject) {
    if (idx.size() != 2) continue;
    auto young = idx[0], old = idx[1];
    if (pairs.record(young).age > pairs.record(old).age) std::swap(young, old);
    if (pairs.record(young).age == pairs.record(old).age) continue;
    sources.push_back(pairs.image(young));
    truths.push_back(pairs.image(old));
    targets.push_back(pairs.record(old).age);
  }
  if (sources.empty()) throw std::invalid_argument("evaluate: manifest has no longitudinal pairs");
  const auto generated = transform_images(model, sources, targets);
  MetricReport r;
  r.pairs = generated.size();
  for (std::size_t i = 0; i < generated.size(); ++i) {
    r.psnr += psnr(truths[i], generated[i]);
    r.ssim += ssim(truths[i], generated[i]);
    r.mse += mse(truths[i], generated[i]);
  }
  const double n = static_cast<double>(generated.size());
  r.psnr /= n;
  r.ssim /= n;
  r.mse /= n;
  if (regressor) r.pad = pad_from_predictions(predict_ages(*regressor, generated), targets);
  return r;
}

TrajectoryReport aging_trajectory(AgeTransformer<float>& model, const std::vector<PhantomIdentity>& ids,
                                  const Shape& resolution, int source_age, int age_min, int age_max) {
  TrajectoryReport r;
  std::vector<double> ages;
  for (int a = age_min; a <= age_max; ++a) ages.push_back(a);
  for (const auto& id : ids) {
    const Image src = generate_phantom(id, source_age, resolution);
    const auto out = transform_images(model, std::vector<Image>(ages.size(), src), ages);
    std::vector<double> area;
    for (const auto& img : out) area.push_back(static_cast<double>(ventricle_area(img, id)));
    r.rho.push_back(spearman(ages, area));
  }
  if (!r.rho.empty()) {
    auto s = r.rho;
    std::sort(s.begin(), s.end());
    const std::size_t m = s.size() / 2;
    r.median_rho = s.size() % 2 ? s[m] : 0.5 * (s[m - 1] + s[m]);
  }
  return r;
}

FeatureExport export_features(AgeTransformer<float>& model, const std::vector<Image>& images,
                              const std::vector<std::string>& subject_ids, const std::vector<int>& ages) {
  if (subject_ids.size() != images.size() || ages.size() != images.size())
    throw std::invalid_argument("export_features: one label per image");
  FeatureExport out;
  const std::size_t batch = 16;
  for (std::size_t i = 0; i < images.size(); i += batch) {
    const auto ptrs = slice(images, i, batch);
    auto enc = model.encode(Var<float>(to_batch<float>(ptrs)), false);
    auto iden = model.extract_identity(enc.levels, false);
    for (Index n = 0; n < static_cast<Index>(ptrs.size()); ++n) {
      FeatureRow row;
      row.subject_id = subject_ids[i + static_cast<std::size_t>(n)];
      row.age = ages[i + static_cast<std::size_t>(n)];
      row.f_age = flatten_sample(enc.levels.back().value(), n);
      row.f_iden = flatten_sample(iden.back().value(), n);
      row.cosine = feature_cosine(sample_stack(enc.levels, n), sample_stack(iden, n)).item();
      out.mean_abs_cosine += std::abs(row.cosine);
      out.rows.push_back(std::move(row));
    }
  }
  if (!out.rows.empty()) out.mean_abs_cosine /= static_cast<double>(out.rows.size());
  return out;
}

void write_feature_csv(const FeatureExport& f, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "subject_id,age,dim_age,dim_iden,cosine,f_age,f_iden\n";
  for (const auto& r : f.rows) {
    out << r.subject_id << ',' << r.age << ',' << r.f_age.size() << ',' << r.f_iden.size() << ','
        << r.cosine << ','
        << base64_encode(reinterpret_cast<const unsigned char*>(r.f_age.data()), r.f_age.size() * 4) << ','
        << base64_encode(reinterpret_cast<const unsigned char*>(r.f_iden.data()), r.f_iden.size() * 4)
        << '\n';
  }
  if (!out) throw IoError("write failed for " + path.string());
}

double identity_preservation(AgeTransformer<float>& model, const std::vector<Image>& images,
                             const std::vector<double>& target_ages) {
  const auto generated = transform_images(model, images, target_ages);
  double total = 0;
  const std::size_t batch = 16;
  for (std::size_t i = 0; i < images.size(); i += batch) {
    const auto a = slice(images, i, batch), b = slice(generated, i, batch);
    auto fa = model.extract_identity(model.encode(Var<float>(to_batch<float>(a)), false).levels, false);
    auto fb = model.extract_identity(model.encode(Var<float>(to_batch<float>(b)), false).levels, false);
    total += feature_cosine(fa, fb).item() * static_cast<double>(a.size());
  }
  return total / static_cast<double>(images.size());
}

std::string base64_encode(const unsigned char* data, std::size_t n) {
  static constexpr char table[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
  std::string out;
  out.reserve((n + 2) / 3 * 4);
  for (std::size_t i = 0; i < n; i += 3) {
    const std::uint32_t b = (std::uint32_t{data[i]} << 16) |
                            (i + 1 < n ? std::uint32_t{data[i + 1]} << 8 : 0) |
                            (i + 2 < n ? std::uint32_t{data[i + 2]} : 0);
    out += table[(b >> 18) & 63];
    out += table[(b >> 12) & 63];
    out += i + 1 < n ? table[(b >> 6) & 63] : '=';
    out += i + 2 < n ? table[b & 63] : '=';
  }
  return out;
}

}  // namespace idenbat
