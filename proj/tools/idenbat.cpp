#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "idenbat/config.hpp"
#include "idenbat/dataset.hpp"
#include "idenbat/evaluate.hpp"
#include "idenbat/io.hpp"
#include "idenbat/metrics.hpp"
#include "idenbat/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace idenbat;

namespace {

// Relative output paths live under $IDENBAT_OUT when it is set.
fs::path output_path(const std::string& p) {
  fs::path path(p);
  const char* root = std::getenv("IDENBAT_OUT");
  if (root && *root && path.is_relative()) return fs::path(root) / path;
  return path;
}

Shape parse_resolution(const std::string& s, int dims) {
  Shape out;
  std::stringstream ss(s);
  std::string part;
  while (std::getline(ss, part, 'x')) out.push_back(std::stol(part));
  if (out.size() == 1) out.assign(static_cast<std::size_t>(dims), out[0]);
  if (static_cast<int>(out.size()) != dims)
    throw std::invalid_argument("--res " + s + " does not match --dim " + std::to_string(dims));
  return out;
}

std::vector<double> parse_sweep(const std::string& s) {
  std::vector<double> v;
  std::stringstream ss(s);
  std::string part;
  while (std::getline(ss, part, ':')) v.push_back(std::stod(part));
  if (v.size() == 2) v.push_back(1);
  if (v.size() != 3 || !(v[2] > 0) || v[1] < v[0])
    throw std::invalid_argument("--age-sweep expects start:stop[:step] with stop >= start and step > 0");
  std::vector<double> ages;
  for (double a = v[0]; a <= v[1] + 1e-9; a += v[2]) ages.push_back(a);
  return ages;
}

Image read_input(const fs::path& p) {
  if (p.extension() == ".png") return read_png_gray(p);
  return load_volume(p);
}

std::string stem_of(const fs::path& p) {
  std::string name = p.filename().string();
  for (const char* ext : {".nii.gz", ".nii", ".grid", ".png"}) {
    const std::string e(ext);
    if (name.size() > e.size() && name.compare(name.size() - e.size(), e.size(), e) == 0)
      return name.substr(0, name.size() - e.size());
  }
  return p.stem().string();
}

std::string age_tag(double a) {
  std::ostringstream s;
  s << a;
  return s.str();
}

void write_json(const fs::path& p, const json& j) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p);
  out << j.dump(2) << '\n';
  if (!out) throw IoError("cannot write " + p.string());
}

std::vector<Image> manifest_images(const Dataset& d) {
  std::vector<Image> v;
  for (std::size_t i = 0; i < d.size(); ++i) v.push_back(d.image(i));
  return v;
}

struct GenData {
  int per_age = 10, dim = 2, age_min = 48, age_max = 80, gap = 5;
  std::string res = "64", out = "data";
  std::uint64_t seed = 0;
  bool longitudinal = false;

  void run() const {
    const Shape resolution = parse_resolution(res, dim);
    auto m = build_dataset(per_age, age_min, age_max, resolution, seed, longitudinal, gap);
    const fs::path dir = output_path(out);
    write_dataset(m, dir);
    std::cout << "wrote " << m.records.size() << " images and " << (dir / "manifest.json").string() << '\n';
  }
};

struct Train {
  std::string config, manifest, out = "run", ablation, resume;
  std::optional<int> epochs, batch;
  std::optional<long> max_steps;
  std::optional<std::uint64_t> seed;

  void run() const {
    json file = config.empty() ? json::object() : read_json_file(config);
    std::string manifest_path = manifest, out_dir = out;
    // Run-level keys sit beside the training keys in the same file.
    if (file.is_object()) {
      if (file.contains("manifest")) {
        if (manifest_path.empty()) manifest_path = file["manifest"].get<std::string>();
        file.erase("manifest");
      }
      if (file.contains("out")) {
        if (out_dir == "run") out_dir = file["out"].get<std::string>();
        file.erase("out");
      }
    }
    std::unique_ptr<TrainState> st;
    if (!resume.empty()) {
      st = TrainState::load(resume);
    } else {
      TrainConfig cfg = train_config_from_json(file);
      if (!ablation.empty()) cfg.ablation = parse_ablation_name(ablation);
      if (epochs) cfg.epochs = *epochs;
      if (batch) cfg.batch = *batch;
      if (seed) cfg.seed = *seed;
      if (max_steps) cfg.max_steps = *max_steps;
      st = std::make_unique<TrainState>(cfg);
    }
    if (resume.empty() == false) {
      if (epochs) st->cfg.epochs = *epochs;
      if (max_steps) st->cfg.max_steps = *max_steps;
    }
    if (manifest_path.empty()) throw std::invalid_argument("train: --manifest (or a manifest key in the config) is required");
    const fs::path mp(manifest_path);
    const Dataset data(load_manifest(mp), mp.parent_path());
    const fs::path dir = output_path(out_dir);
    const auto result = run_training(*st, data, dir, [](const LossReport& r) {
      if (r.step % 10 == 0)
        std::cout << "step " << r.step << " epoch " << r.epoch << " total " << r.total << '\n';
    });
    std::cout << "checkpoint " << result.final_checkpoint.string() << '\n';
  }
};

struct Transform {
  std::string checkpoint, input, sweep, out = "transform";
  std::optional<double> target_age;

  void run() const {
    if (!target_age && sweep.empty()) throw std::invalid_argument("transform: give --target-age or --age-sweep");
    if (target_age && !sweep.empty()) throw std::invalid_argument("transform: --target-age and --age-sweep are exclusive");
    auto st = TrainState::load(checkpoint);
    auto& T = st->transformer;
    const Image x = read_input(input);
    const int dims = T.config().dims;
    if (x.dims() != dims)
      throw ShapeError("transform: input is " + std::to_string(x.dims()) + "-D but the checkpoint is " +
                       std::to_string(dims) + "-D (dimensionality mismatch)");
    T.config().check_input(x.shape);
    const std::vector<double> ages = target_age ? std::vector<double>{*target_age} : parse_sweep(sweep);
    for (double a : ages) T.config().ages.require_in_range(a);
    const auto outputs = transform_images(T, std::vector<Image>(ages.size(), x), ages);
    const fs::path dir = output_path(out);
    fs::create_directories(dir);
    const std::string stem = stem_of(input);
    const bool nifti = input.ends_with(".nii") || input.ends_with(".nii.gz");
    for (std::size_t i = 0; i < ages.size(); ++i) {
      const std::string base = stem + "_age" + age_tag(ages[i]);
      const Image diff = difference_map(x, outputs[i]);
      save_volume(outputs[i], dir / (base + (nifti ? ".nii.gz" : ".grid")));
      if (dims == 2) {
        save_png_gray(outputs[i], dir / (base + ".png"));
        save_png_diverging(diff, dir / (base + "_diff.png"));
      } else {
        // Signed maps fall outside [0, 1], so they go to NIfTI rather than the raw grid.
        save_nifti(diff, dir / (base + "_diff.nii.gz"));
      }
      std::cout << base << " mean |diff| " << diff.data.abs().mean() << '\n';
    }
  }
};

struct Evaluate {
  std::string checkpoint, manifest, regressor, out = "eval";

  void run() const {
    auto st = TrainState::load(checkpoint);
    const fs::path mp(manifest);
    const Dataset pairs(load_manifest(mp), mp.parent_path());
    if (pairs.manifest().dimensionality != st->cfg.net.dims)
      throw ShapeError("evaluate: manifest is " + std::to_string(pairs.manifest().dimensionality) +
                       "-D but the checkpoint is " + std::to_string(st->cfg.net.dims) + "-D");
    std::optional<Encoder<float>> reg;
    if (regressor.empty())
      std::cerr << "warning: no --regressor given; PAD is disabled\n";
    else if (!fs::exists(CheckpointFiles::from(regressor).tensors))
      std::cerr << "warning: regressor " << regressor << " not found; PAD is disabled\n";
    else
      reg = load_regressor(regressor);
    const MetricReport r = evaluate_pairs(st->transformer, pairs, reg ? &*reg : nullptr);
    const fs::path dir = output_path(out);
    write_json(dir / "metrics.json", r.to_json());
    std::ofstream(dir / "metrics.csv") << r.to_csv();
    std::cout << r.to_json().dump(2) << '\n';
  }
};

struct ExportFeatures {
  std::string checkpoint, manifest, out = "features";

  void run() const {
    auto st = TrainState::load(checkpoint);
    const fs::path mp(manifest);
    const Dataset data(load_manifest(mp), mp.parent_path());
    std::vector<std::string> ids;
    std::vector<int> ages;
    for (std::size_t i = 0; i < data.size(); ++i) {
      ids.push_back(data.record(i).subject_id);
      ages.push_back(data.record(i).age);
    }
    const auto f = export_features(st->transformer, manifest_images(data), ids, ages);
    const fs::path dir = output_path(out);
    write_feature_csv(f, dir / "features.csv");
    write_json(dir / "summary.json", {{"rows", f.rows.size()}, {"mean_abs_cosine", f.mean_abs_cosine}});
    std::cout << f.rows.size() << " rows, mean |cos(F_age, F_iden)| " << f.mean_abs_cosine << '\n';
  }
};

struct TrainRegressor {
  std::string config, manifest, out = "regressor";
  std::optional<int> epochs;
  std::optional<std::uint64_t> seed;

  void run() const {
    RegressorConfig cfg;
    cfg.net = TrainConfig::desk().net;
    if (!config.empty()) cfg = regressor_config_from_json(read_json_file(config), cfg);
    if (epochs) cfg.epochs = *epochs;
    if (seed) cfg.seed = *seed;
    const fs::path mp(manifest);
    const Dataset data(load_manifest(mp), mp.parent_path());
    const auto reg = train_regressor(cfg, data);
    const fs::path dir = output_path(out);
    fs::create_directories(dir);
    save_regressor(reg, dir / "regressor");
    std::cout << "regressor " << (dir / "regressor.ckpt").string() << '\n';
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Identity-preserving brain age transformation on aging phantoms"};
  app.require_subcommand(1);

  GenData gen;
  auto* g = app.add_subcommand("gen-data", "Generate a phantom dataset and manifest");
  g->add_option("--per-age", gen.per_age, "Records per integer age")->check(CLI::PositiveNumber);
  g->add_option("--dim", gen.dim, "2 or 3")->check(CLI::IsMember({2, 3}));
  g->add_option("--res", gen.res, "Voxels per axis, e.g. 64 or 32x48x32");
  g->add_option("--seed", gen.seed);
  g->add_option("--age-min", gen.age_min);
  g->add_option("--age-max", gen.age_max);
  g->add_flag("--longitudinal", gen.longitudinal, "Render each identity at a and a + gap");
  g->add_option("--gap", gen.gap);
  g->add_option("--out", gen.out);

  Train train;
  auto* t = app.add_subcommand("train", "Train the age transformer");
  t->add_option("--config", train.config, "JSON config; flags override it");
  t->add_option("--manifest", train.manifest);
  t->add_option("--ablation", train.ablation, "case1..case4 or full");
  t->add_option("--epochs", train.epochs);
  t->add_option("--batch", train.batch);
  t->add_option("--seed", train.seed);
  t->add_option("--max-steps", train.max_steps);
  t->add_option("--resume", train.resume, "Checkpoint to continue from");
  t->add_option("--out", train.out);

  Transform tr;
  auto* x = app.add_subcommand("transform", "Age-transform one image");
  x->add_option("--checkpoint", tr.checkpoint)->required();
  x->add_option("--input", tr.input)->required();
  x->add_option("--target-age", tr.target_age);
  x->add_option("--age-sweep", tr.sweep, "start:stop:step");
  x->add_option("--out", tr.out);

  Evaluate ev;
  auto* e = app.add_subcommand("evaluate", "PSNR / SSIM / MSE / PAD on longitudinal pairs");
  e->add_option("--checkpoint", ev.checkpoint)->required();
  e->add_option("--manifest", ev.manifest)->required();
  e->add_option("--regressor", ev.regressor);
  e->add_option("--out", ev.out);

  ExportFeatures ex;
  auto* f = app.add_subcommand("export-features", "Write bottleneck age and identity features");
  f->add_option("--checkpoint", ex.checkpoint)->required();
  f->add_option("--manifest", ex.manifest)->required();
  f->add_option("--out", ex.out);

  TrainRegressor rg;
  auto* r = app.add_subcommand("train-regressor", "Train the standalone age regressor used by PAD");
  r->add_option("--config", rg.config);
  r->add_option("--manifest", rg.manifest)->required();
  r->add_option("--epochs", rg.epochs);
  r->add_option("--seed", rg.seed);
  r->add_option("--out", rg.out);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int rc = app.exit(err);
    return rc == 0 ? 0 : 2;
  }
  try {
    if (g->parsed()) gen.run();
    if (t->parsed()) train.run();
    if (x->parsed()) tr.run();
    if (e->parsed()) ev.run();
    if (f->parsed()) ex.run();
    if (r->parsed()) rg.run();
  } catch (const ConfigError& err) {
    for (const auto& p : err.problems()) std::cerr << "config error: " << p << '\n';
    return 2;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << '\n';
    return 1;
  }
  return 0;
}
