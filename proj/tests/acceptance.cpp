// Acceptance run: one PASS/FAIL line per criterion. Tolerances are fixed below.
// Usage: idenbat_acceptance [work_dir]
// IDENBAT_ACCEPTANCE_EPOCHS shortens the training criteria for quick local runs.

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "idenbat/config.hpp"
#include "idenbat/evaluate.hpp"
#include "idenbat/losses.hpp"
#include "idenbat/metrics.hpp"
#include "idenbat/nets.hpp"
#include "idenbat/train.hpp"
#include "ssim_reference.hpp"
#include "support.hpp"

using namespace idenbat;
namespace fs = std::filesystem;

namespace {

constexpr double kFormulaTol = 1e-6;
constexpr double kGradTol = 1e-3;
constexpr double kSsimRefTol = 1e-6;
constexpr double kFormulaSeconds = 10;
constexpr double kGradSeconds = 120;
constexpr double kTrainSeconds = 3 * 3600;
constexpr int kMaxEpochs = 30;
constexpr double kPadRatio = 0.5;
constexpr double kSelfSsim = 0.90;
constexpr double kMedianRho = 0.8;
constexpr double kMaxAbsCos = 0.1;
constexpr double kIdentityPreservation = 0.8;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

// Collects failed sub-checks for one criterion.
struct Checks {
  std::vector<std::string> failed;
  int total = 0;

  void expect(bool ok, const std::string& what) {
    ++total;
    if (!ok) failed.push_back(what);
  }
  void near(double got, double want, double tol, const std::string& what) {
    std::ostringstream s;
    s.precision(12);
    s << what << " (got " << got << ", want " << want << ")";
    expect(std::abs(got - want) <= tol, s.str());
  }
};

nlohmann::json summary;

void report(int id, const std::string& name, bool pass, const std::string& detail) {
  std::cout << (pass ? "PASS" : "FAIL") << " criterion " << id << ": " << name << " | " << detail << std::endl;
  summary["criteria"][std::to_string(id)] = {{"name", name}, {"pass", pass}, {"detail", detail}};
}

void report_checks(int id, const std::string& name, const Checks& c, const std::string& extra = {}) {
  std::ostringstream d;
  d << c.total - static_cast<int>(c.failed.size()) << "/" << c.total << " checks";
  if (!extra.empty()) d << ", " << extra;
  for (const auto& f : c.failed) d << "; failed: " << f;
  report(id, name, c.failed.empty(), d.str());
}

Var<double> filled(Shape s, double v) { return Var<double>(Tensor<double>(std::move(s), v)); }

FeatureStack<double> onehot(Index hot, double sign = 1) {
  Tensor<double> t({2, 3, 2});
  for (Index n = 0; n < 2; ++n) t[n * 6 + hot] = sign;
  return {Var<double>(t)};
}

NetworkConfig tiny_net() {
  NetworkConfig c;
  c.levels = 3;
  c.channels = {2, 3, 4};
  c.age_embed_dim = 4;
  c.mapping_depth = 2;
  return c;
}

TrainConfig small_train_config(std::uint64_t seed) {
  TrainConfig c = TrainConfig::desk();
  c.net.levels = 3;
  c.net.channels = {4, 8, 8};
  c.net.age_embed_dim = 8;
  c.net.mapping_depth = 2;
  c.critic.channels = {4, 8};
  c.critic.age_embed_dim = 8;
  c.critic.mapping_depth = 2;
  c.batch = 4;
  c.epochs = 100;
  c.seed = seed;
  return c;
}

template <typename S>
bool any_grad(const Registry<S>& reg, const std::string& prefix = "") {
  for (const auto& [name, v] : reg.params)
    if (name.rfind(prefix, 0) == 0 && v->has_grad() && (v->grad().data() != S(0)).any()) return true;
  return false;
}

template <typename S>
void clear_grads(Registry<S>& reg) {
  for (auto& [n, v] : reg.params) v->zero_grad();
}

// ---------------------------------------------------------------------------

void formula_suite() {
  const auto t0 = Clock::now();
  Checks c;
  const AgeCodeConfig ages;

  const double w = rec_weight(48, 80, 0.5, 33);
  c.near(w, 0.00226, 5e-6, "rec_weight(48, 80, 0.5, 33) ~ 0.00226");
  c.near(w, std::pow(std::sin(std::numbers::pi / 66), 2), 1e-12, "rec_weight closed form sin^2(pi/66)");
  c.near(rec_weight(60, 60, 0.5, 33), 1.0, kFormulaTol, "rec_weight at zero gap");
  c.near(rec_weight(50, 66.5, 0.5, 33), 0.5, kFormulaTol, "rec_weight at half range");

  const auto p = soft_label(60, ages), q = soft_label(62, ages), mid = soft_label(64, ages);
  c.near(p.probs.sum(), 1.0, kFormulaTol, "soft label sums to one");
  c.near(mid.probs[16] / mid.probs[17], std::exp(0.5), kFormulaTol, "neighbour ratio exp(1/2)");
  c.near(kl_age_loss(p, p), 0.0, kFormulaTol, "KL(p||p) = 0");
  double brute = 0;
  for (int k = 0; k < ages.bins(); ++k) brute += p.probs[k] * std::log(p.probs[k] / std::max(q.probs[k], 1e-12));
  c.near(kl_age_loss(q, p), brute, kFormulaTol, "KL against direct sum");
  c.expect(kl_age_loss(q, p) > 0, "KL positive for distinct distributions");
  c.near(expected_age(mid, ages), 64.0, kFormulaTol, "expected age of a centred label");
  c.near(normalize_age(64, ages), 0.5, kFormulaTol, "normalize_age(64)");

  const Shape s{2, 1, 4, 4};
  c.near(adv_d_loss(filled(s, 1), filled(s, 0)).item(), 0.0, kFormulaTol, "LSGAN critic optimum");
  c.near(adv_g_loss(filled(s, 1)).item(), 0.0, kFormulaTol, "LSGAN generator optimum");
  c.near(adv_d_loss(filled(s, 0.5), filled(s, 0.5)).item(), 0.25, kFormulaTol, "LSGAN critic at 1/2");
  c.near(adv_g_loss(filled(s, 0)).item(), 1.0, kFormulaTol, "LSGAN generator at 0");

  const auto a = onehot(0), b = onehot(1);
  c.near(identity_loss(a, a, b).item(), -1.0, kFormulaTol, "identity loss: aligned and orthogonal");
  c.near(identity_loss(a, b, a).item(), 1.0, kFormulaTol, "identity loss: orthogonal and collinear");
  c.near(identity_loss(a, onehot(0, -1), a).item(), 2.0, kFormulaTol, "identity loss: opposed and collinear");
  c.near(identity_loss(a, a, a).item(), 0.0, kFormulaTol, "identity loss: aligned and collinear");

  c.near(cycle_loss(filled(s, 0.0), filled(s, 1.0)).item(), 1.0, kFormulaTol, "L1 cycle loss");
  c.near(rec_loss(filled(s, 0.5), filled(s, 0.7), {60, 61}, {60, 61}, LossWeights{}).item(), 0.04, kFormulaTol,
         "rec loss at zero gap");

  GeneratorTerms<double> ones;
  ones.adv = ones.age1 = ones.age2 = ones.cyc = ones.rec = filled({1}, 1);
  ones.iden = filled({1}, 1);
  c.near(total_generator_loss(ones, LossWeights{}).item(), 2.30, kFormulaTol, "weighted total at unit terms");

  c.near(psnr(Image({8, 8}, 0.f), Image({8, 8}, 0.1f)), 20.0, 1e-5, "PSNR at MSE 0.01");
  c.near(spearman({1, 2, 3, 4}, {10, 20, 30, 40}), 1.0, kFormulaTol, "spearman of a monotone pair");
  c.near(pad_from_predictions({64, 64}, {60, 70}).overall, 5.0, kFormulaTol, "PAD of fixed predictions");

  const double t = seconds_since(t0);
  c.expect(t < kFormulaSeconds, "runtime under 10 s");
  std::ostringstream d;
  d << "runtime " << t << " s";
  report_checks(1, "formula suite", c, d.str());
}

void gradient_suite() {
  const auto t0 = Clock::now();
  Checks c;
  std::mt19937_64 rng(101);
  auto rnd = [&](Shape s, double lo = -1, double hi = 1) {
    return Var<double>(testing::random_tensor(std::move(s), rng, lo, hi), true);
  };
  auto record = [&](const std::string& what, const testing::GradResult& r) {
    std::ostringstream s;
    s << what << " rel error " << r.rel_error;
    c.expect(r.rel_error <= kGradTol && r.norm > 0, s.str());
  };

  const AgeCodeConfig ages;
  const Tensor<double> target = soft_label_batch<double>({55.5, 71}, ages);
  record("kl_age_loss", testing::gradcheck({rnd({2, ages.bins()})},
                                           [&](const auto& in) { return kl_from_logits(in[0], target); }));

  auto a0 = rnd({2, 3, 4}), a1 = rnd({2, 2, 2}), b0 = rnd({2, 3, 4}), b1 = rnd({2, 2, 2});
  auto f0 = rnd({2, 3, 4}), f1 = rnd({2, 2, 2});
  record("identity_loss", testing::gradcheck({b0, b1, f0, f1}, [&](const auto& in) {
           return identity_loss<double>({a0, a1}, {in[0], in[1]}, {in[2], in[3]});
         }));

  auto x = rnd({2, 1, 4, 4}, 0, 1), y = rnd({2, 1, 4, 4}, 0, 1);
  record("cycle_loss", testing::gradcheck({x, y}, [](const auto& in) { return cycle_loss(in[0], in[1]); }));
  record("rec_loss", testing::gradcheck({x, y}, [](const auto& in) {
           return rec_loss(in[0], in[1], {50, 60}, {72, 61}, LossWeights{});
         }));
  auto real = rnd({2, 1, 3, 3}), fake = rnd({2, 1, 3, 3});
  record("adv_d_loss", testing::gradcheck({real, fake}, [](const auto& in) { return adv_d_loss(in[0], in[1]); }));
  record("adv_g_loss", testing::gradcheck({fake}, [](const auto& in) { return adv_g_loss(in[0]); }));

  // End to end through T, with the zero-initialized output layer and one denorm map moved
  // off their initial values so every branch carries gradient.
  Rng init(17);
  AgeTransformer<double> T(tiny_net(), init);
  Registry<double> reg;
  T.collect(reg);
  std::normal_distribution<double> g(0, 1);
  for (auto& [name, v] : reg.params)
    if (name == "generator.out.weight")
      for (Index i = 0; i < v->value().size(); ++i) v->value()[i] += 0.05 * g(rng);
  auto& gamma = T.aim().block(1, 1).denorm().gamma_map().weight();
  for (Index i = 0; i < gamma.value().size(); ++i) gamma.value()[i] += 0.3 * g(rng);
  Var<double> img(testing::random_tensor({2, 1, 8, 8}, rng, 0.3, 0.7), true);
  const Tensor<double> wts = testing::random_tensor({2, 1, 8, 8}, rng);
  std::vector<Var<double>> inputs{img};
  for (auto& [n, v] : reg.params) inputs.push_back(*v);
  record("transform on 8x8", testing::gradcheck(inputs, [&](const auto& in) {
           return sum(mul(T.transform(in[0], {52, 71}, true), Var<double>(wts)));
         }));

  const double t = seconds_since(t0);
  c.expect(t < kGradSeconds, "runtime under 2 min");
  std::ostringstream d;
  d << "runtime " << t << " s";
  report_checks(2, "gradient suite", c, d.str());
}

void identity_at_init() {
  Checks c;
  Rng init(12);
  AgeTransformer<float> T(NetworkConfig{}, init);
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> age(48, 80);
  for (int trial = 0; trial < 10; ++trial) {
    Var<float> x(testing::random_tensor({1, 1, 64, 64}, rng, 0, 1).cast<float>());
    const double a = age(rng);
    const bool same = (T.transform(x, {a}, trial % 2 == 0).value().data() == x.value().data()).all();
    c.expect(same, "T(X, a_t) == X for trial " + std::to_string(trial));
  }
  const Dataset data(build_dataset(1, 48, 80, {32, 32}, 3));
  TrainState st(small_train_config(5));
  const auto r = train_step(st, data, prepare_step(st.cfg, data, {0, 5, 10, 20}, 0));
  c.expect(r.cyc == 0.0, "L_cyc = 0 on the first forward");
  c.expect(r.rec == 0.0, "L_rec = 0 on the first forward");
  report_checks(3, "identity at init", c);
}

void frozen_encoder_contract() {
  Checks c;
  const Dataset data(build_dataset(1, 48, 80, {32, 32}, 3));
  TrainConfig cfg = small_train_config(5);
  TrainState st(cfg);
  // Move off the identity init so every pathway is live.
  for (long k = 0; k < 3; ++k) train_step(st, data, prepare_step(cfg, data, {0, 5, 10, 20}, k));
  const StepInputs in = prepare_step(cfg, data, {1, 6, 11, 21}, 3);

  auto g = generator_pass(st, in);
  clear_grads(st.gen_registry);
  // The age2 term seen through E*: its image argument is held fixed so only the
  // snapshot's own parameters could carry gradient back into the encoder.
  Encoder<float> frozen = freeze_snapshot(st.transformer.encoder());
  const Tensor<float> label = soft_label_batch<float>(in.targets.ages, cfg.net.ages);
  kl_from_logits(frozen(g.x_hat.detach(), false).age_logits, label).backward();
  c.expect(!any_grad(st.gen_registry, "encoder."), "L_age2 through E* leaves every encoder gradient zero");
  clear_grads(st.gen_registry);
  // The same term through the live encoder does reach it, so the check above can fail.
  kl_from_logits(st.transformer.encoder()(g.x_hat.detach(), false).age_logits, label).backward();
  c.expect(any_grad(st.gen_registry, "encoder."), "control: the live encoder receives gradient");
  clear_grads(st.gen_registry);

  // Eq. 14 never touches the critic; Eq. 15 never touches T.
  g = generator_pass(st, in);
  g.total.backward();
  c.expect(!any_grad(st.disc_registry), "generator objective leaves every critic gradient zero");
  c.expect(any_grad(st.gen_registry), "generator objective reaches T");
  clear_grads(st.gen_registry);
  discriminator_loss(st, data, in, g.x_hat).backward();
  c.expect(!any_grad(st.gen_registry), "critic objective leaves every T gradient zero");
  c.expect(any_grad(st.disc_registry, "disc."), "critic objective reaches the critic");
  report_checks(4, "frozen-encoder contract", c);
}

void metric_fidelity() {
  Checks c;
  double worst = 0;
  for (int k = 0; k < 20; ++k) {
    auto [x, y] = testing::reference_pair(k);
    const double err = std::abs(ssim(x, y) - testing::kReferenceSsim[k]);
    worst = std::max(worst, err);
    c.expect(err <= kSsimRefTol, "SSIM pair " + std::to_string(k));
  }
  std::mt19937_64 rng(7);
  for (int k = 0; k < 5; ++k) {
    const Image x = testing::random_image({20, 24}, rng), y = testing::random_image({20, 24}, rng);
    double sq = 0;
    for (Index i = 0; i < x.size(); ++i) sq += std::pow(static_cast<double>(x[i]) - y[i], 2);
    const double m = sq / static_cast<double>(x.size());
    c.near(mse(x, y), m, 1e-12, "MSE direct");
    c.near(psnr(x, y), 10 * std::log10(1.0 / m), 1e-9, "PSNR direct");
  }
  std::ostringstream d;
  d << "worst SSIM deviation " << worst;
  report_checks(8, "metric fidelity", c, d.str());
}

std::string file_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

void reproducibility(const fs::path& work) {
  Checks c;
  const Dataset data(build_dataset(1, 48, 80, {32, 32}, 3));
  auto run = [&](std::uint64_t seed) {
    TrainConfig cfg = small_train_config(seed);
    cfg.max_steps = 3;
    TrainState st(cfg);
    return run_training(st, data, {}).log;
  };
  const auto a = run(9), b = run(9);
  c.expect(a.size() == 3 && a == b, "first 3 loss reports identical");
  c.expect(!(a == run(10)), "control: another seed differs");

  auto m1 = build_dataset(1, 48, 60, {64, 64}, 21), m2 = build_dataset(1, 48, 60, {64, 64}, 21);
  write_dataset(m1, work / "repro_a");
  write_dataset(m2, work / "repro_b");
  bool same = file_bytes(work / "repro_a" / "manifest.json") == file_bytes(work / "repro_b" / "manifest.json");
  for (const auto& r : m1.records)
    same = same && file_bytes(work / "repro_a" / *r.image_path) == file_bytes(work / "repro_b" / *r.image_path);
  c.expect(same, "regenerated dataset is bit-identical");
  report_checks(9, "reproducibility", c);
}

// ---------------------------------------------------------------------------

struct Evaluation {
  double pad = 0, self_ssim = 0, median_rho = 0, abs_cos = 0, id_preservation = 0, cf_ssim = 0;
  double train_seconds = 0;
  int epochs = 0;
};

struct HeldOut {
  std::vector<Image> images;
  std::vector<double> ages, targets;
  std::vector<std::string> ids;
  std::vector<int> int_ages;
  std::vector<PhantomIdentity> trajectory_ids;
  std::vector<Image> cf_sources, cf_truths;
  std::vector<double> cf_targets;
};

HeldOut held_out_set(const Shape& res) {
  HeldOut h;
  const Dataset test(build_dataset(2, 48, 80, res, 99));
  Rng rng(5);
  std::uniform_int_distribution<int> target(48, 80);
  for (std::size_t i = 0; i < test.size(); ++i) {
    const auto& r = test.record(i);
    h.images.push_back(test.image(i));
    h.ages.push_back(r.age);
    h.int_ages.push_back(r.age);
    h.ids.push_back(r.subject_id);
    h.targets.push_back(target(rng));
    if (r.age + 10 <= 80) {
      h.cf_sources.push_back(test.image(i));
      h.cf_targets.push_back(r.age + 10);
      h.cf_truths.push_back(generate_phantom(*r.identity, r.age + 10, res));
    }
  }
  for (std::size_t i = 0; i < 10; ++i) h.trajectory_ids.push_back(*test.record(i * 6).identity);
  return h;
}

Evaluation evaluate_model(AgeTransformer<float>& T, Encoder<float>& reg, const HeldOut& h, const Shape& res) {
  Evaluation e;
  e.pad = pad(T, h.images, h.targets, reg).overall;
  const auto self = transform_images(T, h.images, h.ages);
  for (std::size_t i = 0; i < self.size(); ++i) e.self_ssim += ssim(h.images[i], self[i]);
  e.self_ssim /= static_cast<double>(self.size());
  e.median_rho = aging_trajectory(T, h.trajectory_ids, res, 64).median_rho;
  e.abs_cos = export_features(T, h.images, h.ids, h.int_ages).mean_abs_cosine;
  e.id_preservation = identity_preservation(T, h.images, h.targets);
  const auto cf = transform_images(T, h.cf_sources, h.cf_targets);
  for (std::size_t i = 0; i < cf.size(); ++i) e.cf_ssim += ssim(h.cf_truths[i], cf[i]);
  e.cf_ssim /= static_cast<double>(cf.size());
  return e;
}

nlohmann::json to_json(const Evaluation& e) {
  return {{"pad", e.pad}, {"self_ssim", e.self_ssim}, {"median_rho", e.median_rho},
          {"mean_abs_cosine", e.abs_cos}, {"identity_preservation", e.id_preservation},
          {"counterfactual_ssim_10y", e.cf_ssim}, {"train_seconds", e.train_seconds}, {"epochs", e.epochs}};
}

TrainConfig desk_run_config(int epochs, int ablation_case) {
  TrainConfig cfg = TrainConfig::desk();
  cfg.epochs = epochs;
  cfg.seed = 1;
  cfg.ablation = Ablation::from_case(ablation_case);
  return cfg;
}

Evaluation train_and_evaluate(const TrainConfig& cfg, const Dataset& train, Encoder<float>& reg,
                              const HeldOut& h, const fs::path& out) {
  TrainState st(cfg);
  const auto t0 = Clock::now();
  run_training(st, train, out, [&](const LossReport& r) {
    if (r.step % 200 == 0) std::cout << "  step " << r.step << " epoch " << r.epoch << " total " << r.total << std::endl;
  });
  Evaluation e = evaluate_model(st.transformer, reg, h, train.manifest().resolution);
  e.train_seconds = seconds_since(t0);
  e.epochs = cfg.epochs;
  return e;
}

void training_criteria(const fs::path& work) {
  int epochs = kMaxEpochs;
  if (const char* env = std::getenv("IDENBAT_ACCEPTANCE_EPOCHS")) epochs = std::atoi(env);
  const Shape res{64, 64};
  const Dataset train(build_dataset(20, 48, 80, res, 11));
  const Dataset reg_data(build_dataset(20, 48, 80, res, 12));
  const HeldOut h = held_out_set(res);

  RegressorConfig rc;
  rc.net = TrainConfig::desk().net;
  rc.epochs = 15;
  rc.seed = 3;
  std::cout << "training the age regressor on " << reg_data.size() << " separate phantoms" << std::endl;
  Encoder<float> reg = train_regressor(rc, reg_data);
  save_regressor(reg, work / "regressor");
  const double reg_mae = pad_from_predictions(predict_ages(reg, h.images), h.ages).overall;
  const double baseline = pad_from_predictions(predict_ages(reg, h.images), h.targets).overall;

  std::cout << "training the full model, " << epochs << " epochs on " << train.size() << " phantoms" << std::endl;
  const Evaluation full = train_and_evaluate(desk_run_config(epochs, 0), train, reg, h, work / "full");
  std::cout << "training ablation case 1 with the same seeds" << std::endl;
  const Evaluation case1 = train_and_evaluate(desk_run_config(epochs, 1), train, reg, h, work / "case1");

  summary["regressor_mae"] = reg_mae;
  summary["baseline_pad"] = baseline;
  summary["full"] = to_json(full);
  summary["case1"] = to_json(case1);

  std::ostringstream d5;
  const bool a = full.pad <= kPadRatio * baseline, b = full.self_ssim >= kSelfSsim, c = full.median_rho >= kMedianRho;
  const bool budget = epochs <= kMaxEpochs && full.train_seconds <= kTrainSeconds;
  d5 << "(a) PAD " << full.pad << " vs baseline " << baseline << " (limit " << kPadRatio * baseline << ") "
     << (a ? "ok" : "missed") << "; (b) self SSIM " << full.self_ssim << " " << (b ? "ok" : "missed")
     << "; (c) median rho " << full.median_rho << " " << (c ? "ok" : "missed") << "; " << epochs
     << " epochs in " << full.train_seconds << " s" << (budget ? "" : " over budget")
     << "; regressor MAE " << reg_mae;
  report(5, "desk-scale training", a && b && c && budget, d5.str());

  std::ostringstream d6;
  const bool cos_ok = full.abs_cos <= kMaxAbsCos, id_ok = full.id_preservation >= kIdentityPreservation;
  d6 << "mean |cos(F_age, F_iden)| " << full.abs_cos << " " << (cos_ok ? "ok" : "missed")
     << "; identity preservation " << full.id_preservation << " " << (id_ok ? "ok" : "missed");
  report(6, "disentanglement", cos_ok && id_ok, d6.str());

  std::ostringstream d7;
  d7 << "counterfactual SSIM at +10 y: full " << full.cf_ssim << ", case 1 " << case1.cf_ssim;
  report(7, "ablation direction", case1.cf_ssim < full.cf_ssim, d7.str());
}

void guarded(int id, const std::string& name, const std::function<void()>& f) {
  try {
    f();
  } catch (const std::exception& e) {
    report(id, name, false, std::string("error: ") + e.what());
  }
}

}  // namespace

int main(int argc, char** argv) {
  const fs::path work = argc > 1 ? fs::path(argv[1]) : fs::temp_directory_path() / "idenbat_acceptance";
  fs::remove_all(work);
  fs::create_directories(work);

  guarded(1, "formula suite", formula_suite);
  guarded(2, "gradient suite", gradient_suite);
  guarded(3, "identity at init", identity_at_init);
  guarded(4, "frozen-encoder contract", frozen_encoder_contract);
  guarded(8, "metric fidelity", metric_fidelity);
  guarded(9, "reproducibility", [&] { reproducibility(work); });
  try {
    training_criteria(work);
  } catch (const std::exception& e) {
    for (int id : {5, 6, 7}) report(id, "training criteria", false, std::string("error: ") + e.what());
  }

  int passed = 0;
  for (const auto& [k, v] : summary["criteria"].items()) passed += v["pass"].get<bool>() ? 1 : 0;
  std::cout << passed << " of " << summary["criteria"].size() << " criteria passed" << std::endl;
  std::ofstream(work / "acceptance.json") << summary.dump(2) << '\n';
  // Criterion outcomes are reported above; the exit status only flags a broken harness.
  return 0;
}
