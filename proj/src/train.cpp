#include "idenbat/train.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <numeric>

#include "idenbat/checkpoint.hpp"
#include "idenbat/config.hpp"
#include "idenbat/io.hpp"

namespace idenbat {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// RNG stream ids.
constexpr std::uint64_t kInitStream = 7;
constexpr std::uint64_t kOrderStream = 1;
constexpr std::uint64_t kStepStream = 2;

std::vector<const Image*> pointers(const std::vector<Image>& v) {
  std::vector<const Image*> p;
  for (const auto& i : v) p.push_back(&i);
  return p;
}

TrainConfig normalized(TrainConfig cfg) {
  cfg.critic.dims = cfg.net.dims;
  cfg.critic.ages = cfg.net.ages;
  cfg.critic.conditional = !cfg.ablation.unconditional_disc;
  cfg.validate();
  return cfg;
}

std::vector<std::vector<std::size_t>> epoch_batches(const TrainConfig& cfg, std::size_t n, int epoch,
                                                    std::size_t batch) {
  const auto order = epoch_order(cfg.seed, epoch, n);
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < order.size(); i += batch) {
    const std::size_t end = std::min(order.size(), i + batch);
    if (end - i < 2 && !out.empty()) break;  // batch-norm needs more than one sample
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                     order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return out;
}

}  // namespace

Ablation Ablation::from_case(int c) {
  Ablation a;
  switch (c) {
    case 0: break;
    case 1: a.disable_iden_loss = true; break;
    case 2: a.disable_cos_term = true; break;
    case 3: a.disable_ortho_term = true; break;
    case 4: a.unconditional_disc = true; break;
    default: throw std::invalid_argument("ablation case must be 0..4");
  }
  return a;
}

TrainConfig TrainConfig::desk() {
  TrainConfig c;
  c.epochs = 30;
  c.batch = 32;
  c.net.channels = {8, 16, 32, 64};
  c.net.age_embed_dim = 32;
  c.critic.channels = {16, 32, 64, 128};
  c.critic.age_embed_dim = 32;
  return c;
}

void TrainConfig::validate() const {
  for (double lr : {lr_encoder, lr_generator_aim_disc, lr_mapping_iem})
    if (!(lr > 0)) throw std::invalid_argument("learning rates must be positive");
  if (batch < 1) throw std::invalid_argument("batch must be >= 1");
  if (epochs < 0) throw std::invalid_argument("epochs must be >= 0");
  if (scheduler.step_size < 1 || !(scheduler.gamma > 0))
    throw std::invalid_argument("scheduler needs step_size >= 1 and gamma > 0");
  if (!(blur_max_sigma >= 0)) throw std::invalid_argument("blur_max_sigma must be >= 0");
  weights.validate();
  net.validate();
  critic.validate();
}

void write_loss_row(std::ostream& out, const LossReport& r) {
  out << r.step << ',' << r.epoch << std::setprecision(9) << ',' << r.adv_g << ',' << r.adv_d << ','
      << r.age1 << ',' << r.age2 << ',';
  if (r.iden) out << *r.iden;
  out << ',' << r.cyc << ',' << r.rec << ',' << r.total << '\n';
}

TrainState::TrainState(const TrainConfig& c) : cfg(normalized(c)) {
  Rng rng(derive_seed(cfg.seed, kInitStream));
  transformer = AgeTransformer<float>(cfg.net, rng);
  critic = Critic<float>(cfg.critic, rng);
  transformer.collect(gen_registry);
  critic.collect(disc_registry);
  gen_opt = Adam<float>(group_by_prefix(gen_registry, {{"encoder", cfg.lr_encoder},
                                                       {"generator", cfg.lr_generator_aim_disc},
                                                       {"aim", cfg.lr_generator_aim_disc},
                                                       {"mapping", cfg.lr_mapping_iem},
                                                       {"iem", cfg.lr_mapping_iem}}),
                        cfg.adam);
  // The critic's own mapping network trains with the rest of the critic.
  std::map<std::string, double> disc_lr{{"disc", cfg.lr_generator_aim_disc}};
  if (cfg.critic.conditional) disc_lr["disc_mapping"] = cfg.lr_generator_aim_disc;
  disc_opt = Adam<float>(group_by_prefix(disc_registry, disc_lr), cfg.adam);
}

TensorMap TrainState::tensors() const {
  TensorMap t;
  export_registry(gen_registry, t);
  export_registry(disc_registry, t);
  for (auto& [k, v] : gen_opt.state()) t["opt_g." + k] = v;
  for (auto& [k, v] : disc_opt.state()) t["opt_d." + k] = v;
  return t;
}

json TrainState::metadata() const {
  return {{"kind", "transformer"},
          {"config", to_json(cfg)},
          {"epoch", epoch},
          {"step", step},
          {"epoch_step", epoch_step},
          {"seed", cfg.seed},
          {"rng", {{"scheme", "splitmix64(seed, stream) per step"}, {"seed", cfg.seed}, {"next_step", step}}}};
}

void TrainState::save(const fs::path& path) const { write_checkpoint(path, tensors(), metadata()); }

std::unique_ptr<TrainState> TrainState::load(const fs::path& path) {
  auto [tensors, meta] = read_checkpoint(path);
  if (meta.value("kind", "") != "transformer")
    throw IoError(path.string() + ": not an age-transformer checkpoint");
  auto st = std::make_unique<TrainState>(train_config_from_json(meta.at("config"), TrainConfig{}));
  import_registry(st->gen_registry, tensors);
  import_registry(st->disc_registry, tensors);
  st->gen_opt.load_state(tensors, "opt_g.");
  st->disc_opt.load_state(tensors, "opt_d.");
  st->epoch = meta.at("epoch").get<int>();
  st->step = meta.at("step").get<long>();
  st->epoch_step = meta.at("epoch_step").get<long>();
  return st;
}

TargetDraw sample_targets(std::size_t batch_size, const Dataset& data, Rng& rng) {
  if (data.size() == 0) throw std::invalid_argument("sample_targets: empty dataset");
  const auto& m = data.manifest();
  for (int a = m.age_min; a <= m.age_max; ++a)
    if (data.indices_at_age(a).empty())
      throw std::invalid_argument("sample_targets: no real record at age " + std::to_string(a));
  std::uniform_int_distribution<std::size_t> pick(0, data.size() - 1);
  TargetDraw d;
  for (std::size_t i = 0; i < batch_size; ++i) {
    const std::size_t r = pick(rng);
    d.records.push_back(r);
    d.ages.push_back(data.record(r).age);
  }
  return d;
}

Encoder<float> freeze_snapshot(const Encoder<float>& encoder) { return frozen_copy(encoder); }

std::vector<std::size_t> epoch_order(std::uint64_t seed, int epoch, std::size_t n) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(derive_seed(derive_seed(seed, kOrderStream), static_cast<std::uint64_t>(epoch)));
  std::shuffle(order.begin(), order.end(), rng);
  return order;
}

StepInputs prepare_step(const TrainConfig& cfg, const Dataset& data,
                        const std::vector<std::size_t>& records, long step) {
  Rng rng(derive_seed(derive_seed(cfg.seed, kStepStream), static_cast<std::uint64_t>(step)));
  std::bernoulli_distribution coin(0.5);
  std::uniform_real_distribution<double> sigma(0.0, cfg.blur_max_sigma);
  StepInputs in;
  for (std::size_t r : records) {
    const bool f = cfg.flip && coin(rng);
    const double s = cfg.blur_max_sigma > 0 ? sigma(rng) : 0.0;
    in.images.push_back(augment(data.image(r), f, 0.0));
    in.encoder_view.push_back(augment(in.images.back(), false, s));
    in.ages.push_back(data.record(r).age);
  }
  in.targets = sample_targets(records.size(), data, rng);
  return in;
}

GeneratorPass generator_pass(TrainState& st, const StepInputs& in) {
  const auto& cfg = st.cfg;
  const auto& ages_cfg = cfg.net.ages;
  auto& T = st.transformer;
  const auto& a_i = in.ages;
  const auto& a_t = in.targets.ages;

  Var<float> x(to_batch<float>(pointers(in.images)));
  Var<float> x_enc(to_batch<float>(pointers(in.encoder_view)));
  const Tensor<float> label_i = soft_label_batch<float>(a_i, ages_cfg);
  const Tensor<float> label_t = soft_label_batch<float>(a_t, ages_cfg);

  GeneratorPass p;
  auto& terms = p.terms;
  terms.age1 = kl_from_logits(T.encode(x_enc, true).age_logits, label_i);

  auto tr = T.trace(x, a_t, true);
  p.x_hat = tr.output;

  Encoder<float> frozen_encoder = freeze_snapshot(T.encoder());
  terms.age2 = kl_from_logits(frozen_encoder(p.x_hat, false).age_logits, label_t);

  auto enc_hat = T.encode(p.x_hat, true);
  auto iden_hat = T.extract_identity(enc_hat.levels, true);
  if (cfg.ablation.identity_enabled())
    terms.iden = identity_loss(tr.identity, iden_hat, tr.encoded.levels, cfg.ablation.identity_terms());

  terms.cyc = cycle_loss(x, T.transform_from_identity(iden_hat, p.x_hat, a_i, true));
  terms.rec = rec_loss(x, p.x_hat, a_i, a_t, cfg.weights);

  Critic<float> frozen_critic = frozen_copy(st.critic);
  terms.adv = adv_g_loss(frozen_critic(p.x_hat, a_t, true));

  p.total = total_generator_loss(terms, cfg.weights);
  return p;
}

Var<float> discriminator_loss(TrainState& st, const Dataset& data, const StepInputs& in,
                              const Var<float>& x_hat) {
  std::vector<const Image*> real_ptrs;
  for (std::size_t r : in.targets.records) real_ptrs.push_back(&data.image(r));
  Var<float> x_real(to_batch<float>(real_ptrs));
  const auto& a_t = in.targets.ages;
  Var<float> adv_d = adv_d_loss(st.critic(x_real, a_t, true), st.critic(x_hat.detach(), a_t, true));
  if (!std::isfinite(adv_d.item())) throw NonFiniteLoss("L_advD", adv_d.item());
  return adv_d;
}

LossReport train_step(TrainState& st, const Dataset& data, const StepInputs& in) {
  const double factor = st.lr_factor();
  GeneratorPass g = generator_pass(st, in);
  g.total.backward();
  st.gen_opt.step(factor);

  Var<float> adv_d = discriminator_loss(st, data, in, g.x_hat);
  adv_d.backward();
  st.disc_opt.step(factor);

  const auto& terms = g.terms;
  const auto& total = g.total;
  LossReport r;
  r.step = st.step;
  r.epoch = st.epoch;
  r.adv_g = terms.adv.item();
  r.adv_d = adv_d.item();
  r.age1 = terms.age1.item();
  r.age2 = terms.age2.item();
  if (terms.iden) r.iden = terms.iden->item();
  r.cyc = terms.cyc.item();
  r.rec = terms.rec.item();
  r.total = total.item();
  ++st.step;
  ++st.epoch_step;
  return r;
}

TrainResult run_training(TrainState& st, const Dataset& data, const fs::path& out_dir,
                         const StepCallback& on_step) {
  const auto& cfg = st.cfg;
  if (data.size() < 2) throw std::invalid_argument("run_training: need at least two records");
  if (data.manifest().dimensionality != cfg.net.dims)
    throw ShapeError("run_training: dataset is " + std::to_string(data.manifest().dimensionality) +
                     "-D but the network is " + std::to_string(cfg.net.dims) + "-D");
  TrainResult result;
  std::ofstream log;
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    std::ofstream(out_dir / "config.json") << to_json(cfg).dump(2) << '\n';
    const fs::path log_path = out_dir / "loss_log.csv";
    const bool fresh = st.step == 0 || !fs::exists(log_path);
    log.open(log_path, fresh ? std::ios::trunc : std::ios::app);
    if (!log) throw IoError("cannot write " + log_path.string());
    if (fresh) log << kLossLogHeader << '\n';
  }
  auto checkpoint = [&](const std::string& name) {
    if (out_dir.empty()) return;
    st.save(out_dir / name);
    result.final_checkpoint = out_dir / (name + ".ckpt");
  };

  const auto batch = static_cast<std::size_t>(cfg.batch);
  while (st.epoch < cfg.epochs) {
    const auto batches = epoch_batches(cfg, data.size(), st.epoch, batch);
    while (st.epoch_step < static_cast<long>(batches.size())) {
      if (cfg.max_steps >= 0 && st.step >= cfg.max_steps) {
        checkpoint("checkpoint_stopped");
        return result;
      }
      const auto& b = batches[static_cast<std::size_t>(st.epoch_step)];
      const LossReport r = train_step(st, data, prepare_step(cfg, data, b, st.step));
      result.log.push_back(r);
      if (log.is_open()) {
        write_loss_row(log, r);
        log.flush();
      }
      if (on_step) on_step(r);
    }
    ++st.epoch;
    st.epoch_step = 0;
    checkpoint("checkpoint_latest");
    if (st.epoch % 10 == 0) checkpoint("checkpoint_epoch" + std::to_string(st.epoch));
  }
  checkpoint("final");
  return result;
}

Encoder<float> train_regressor(const RegressorConfig& cfg, const Dataset& data,
                               const StepCallback& on_step) {
  cfg.net.validate();
  Rng init(derive_seed(cfg.seed, kInitStream));
  Encoder<float> enc(cfg.net, init);
  Registry<float> reg;
  enc.collect(reg, "encoder.");
  Adam<float> opt(group_by_prefix(reg, {{"encoder", cfg.lr}}));
  TrainConfig order_cfg;
  order_cfg.seed = cfg.seed;
  long step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (const auto& b : epoch_batches(order_cfg, data.size(), epoch, static_cast<std::size_t>(cfg.batch))) {
      Rng rng(derive_seed(derive_seed(cfg.seed, kStepStream), static_cast<std::uint64_t>(step)));
      std::bernoulli_distribution coin(0.5);
      std::uniform_real_distribution<double> sigma(0.0, cfg.blur_max_sigma);
      std::vector<Image> imgs;
      std::vector<double> ages;
      for (std::size_t r : b) {
        const bool f = cfg.flip && coin(rng);
        imgs.push_back(augment(data.image(r), f, cfg.blur_max_sigma > 0 ? sigma(rng) : 0.0));
        ages.push_back(data.record(r).age);
      }
      Var<float> x(to_batch<float>(pointers(imgs)));
      Var<float> loss = kl_from_logits(enc(x, true).age_logits, soft_label_batch<float>(ages, cfg.net.ages));
      if (!std::isfinite(loss.item())) throw NonFiniteLoss("L_age", loss.item());
      loss.backward();
      opt.step();
      if (on_step) {
        LossReport r;
        r.step = step;
        r.epoch = epoch;
        r.age1 = r.total = loss.item();
        on_step(r);
      }
      ++step;
    }
  }
  return enc;
}

void save_regressor(const Encoder<float>& reg, const fs::path& path) {
  Encoder<float> copy = reg;
  Registry<float> r;
  copy.collect(r, "encoder.");
  TensorMap t;
  export_registry(r, t);
  write_checkpoint(path, t, {{"kind", "regressor"}, {"net", to_json(reg.config())}});
}

Encoder<float> load_regressor(const fs::path& path) {
  auto [tensors, meta] = read_checkpoint(path);
  if (meta.value("kind", "") != "regressor") throw IoError(path.string() + ": not a regressor checkpoint");
  Rng rng(0);
  Encoder<float> enc(network_config_from_json(meta.at("net")), rng);
  Registry<float> r;
  enc.collect(r, "encoder.");
  import_registry(r, tensors);
  return enc;
}

std::vector<double> predict_ages(Encoder<float>& reg, const std::vector<Image>& images, std::size_t batch) {
  std::vector<double> out;
  for (std::size_t i = 0; i < images.size(); i += batch) {
    std::vector<const Image*> ptrs;
    for (std::size_t j = i; j < std::min(images.size(), i + batch); ++j) ptrs.push_back(&images[j]);
    Var<float> x(to_batch<float>(ptrs));
    const auto ages = expected_ages(reg(x, false).age_logits.value(), reg.config().ages);
    out.insert(out.end(), ages.begin(), ages.end());
  }
  return out;
}

}  // namespace idenbat
