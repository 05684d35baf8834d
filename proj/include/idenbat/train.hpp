#pragma once

#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "json.hpp"

#include "idenbat/checkpoint.hpp"
#include "idenbat/critic.hpp"
#include "idenbat/dataset.hpp"
#include "idenbat/losses.hpp"
#include "idenbat/nets.hpp"
#include "idenbat/optim.hpp"

namespace idenbat {

struct Ablation {
  bool disable_iden_loss = false;   // case 1
  bool disable_cos_term = false;    // case 2
  bool disable_ortho_term = false;  // case 3
  bool unconditional_disc = false;  // case 4

  // 0 is the full model.
  static Ablation from_case(int case_number);
  IdentityTerms identity_terms() const {
    return {!disable_cos_term, !disable_ortho_term};
  }
  bool identity_enabled() const {
    return !disable_iden_loss && !(disable_cos_term && disable_ortho_term);
  }
};

struct TrainConfig {
  double lr_encoder = 1e-3;
  double lr_generator_aim_disc = 5e-4;
  double lr_mapping_iem = 1e-5;
  StepLR scheduler{30, 0.3};
  AdamConfig adam;
  int epochs = 200;
  int batch = 64;
  LossWeights weights;
  Ablation ablation;
  std::uint64_t seed = 0;
  bool flip = true;
  double blur_max_sigma = 1.0;  // encoder-input blur, sigma ~ U[0, max]
  long max_steps = -1;          // stop early after this many total steps (-1: run all epochs)
  NetworkConfig net;
  CriticConfig critic;

  // Scaled-down defaults for 64x64 phantoms on a CPU.
  static TrainConfig desk();
  void validate() const;
};

struct LossReport {
  long step = 0;
  int epoch = 0;
  double adv_g = 0, adv_d = 0, age1 = 0, age2 = 0;
  std::optional<double> iden;
  double cyc = 0, rec = 0, total = 0;

  bool operator==(const LossReport&) const = default;
};

inline constexpr const char* kLossLogHeader = "step,epoch,L_advG,L_advD,L_age1,L_age2,L_iden,L_cyc,L_rec,total";
void write_loss_row(std::ostream& out, const LossReport& r);

// Everything the optimization loop mutates. Not movable: the optimizers hold pointers
// into the networks.
struct TrainState {
  explicit TrainState(const TrainConfig& cfg);
  TrainState(const TrainState&) = delete;
  TrainState& operator=(const TrainState&) = delete;

  TrainConfig cfg;
  AgeTransformer<float> transformer;
  Critic<float> critic;
  Registry<float> gen_registry;   // encoder, iem, mapping, aim, generator
  Registry<float> disc_registry;  // disc, disc_mapping
  Adam<float> gen_opt;
  Adam<float> disc_opt;
  int epoch = 0;         // current (0-based) epoch
  long step = 0;         // total optimizer steps taken
  long epoch_step = 0;   // steps taken inside the current epoch

  double lr_factor() const { return cfg.scheduler.factor(epoch); }
  TensorMap tensors() const;
  nlohmann::json metadata() const;
  void save(const std::filesystem::path& path) const;
  // Restores a checkpoint written by save(); the config comes from its metadata.
  static std::unique_ptr<TrainState> load(const std::filesystem::path& path);
};

struct TargetDraw {
  std::vector<double> ages;
  std::vector<std::size_t> records;  // dataset index of the real sample for each age
};

// One random real record per batch element; its age becomes the target age.
TargetDraw sample_targets(std::size_t batch_size, const Dataset& data, Rng& rng);

// Gradient-blocked copy of the encoder (parameters detached, running stats copied).
Encoder<float> freeze_snapshot(const Encoder<float>& encoder);

struct StepInputs {
  std::vector<Image> images;        // flipped X
  std::vector<Image> encoder_view;  // flipped and blurred X for L_age1
  std::vector<double> ages;
  TargetDraw targets;
};

// Augments the records and draws targets using the step's own RNG stream.
StepInputs prepare_step(const TrainConfig& cfg, const Dataset& data,
                        const std::vector<std::size_t>& records, long step);

struct GeneratorPass {
  GeneratorTerms<float> terms;
  Var<float> total;  // the weighted generator objective
  Var<float> x_hat;
};

// Forward pass of every generator-side term; no gradients are taken yet.
GeneratorPass generator_pass(TrainState& st, const StepInputs& in);
// LSGAN critic objective on real samples for the drawn targets and the detached x_hat.
Var<float> discriminator_loss(TrainState& st, const Dataset& data, const StepInputs& in,
                              const Var<float>& x_hat);

// Generator step, then critic step.
LossReport train_step(TrainState& st, const Dataset& data, const StepInputs& in);

// Record order of one epoch (a pure function of seed and epoch).
std::vector<std::size_t> epoch_order(std::uint64_t seed, int epoch, std::size_t n);

struct TrainResult {
  std::vector<LossReport> log;
  std::filesystem::path final_checkpoint;
};

using StepCallback = std::function<void(const LossReport&)>;

// Runs (or resumes) training. With a non-empty out_dir, writes checkpoint_epoch<k> files,
// final checkpoint, loss_log.csv and config.json there.
TrainResult run_training(TrainState& st, const Dataset& data, const std::filesystem::path& out_dir,
                         const StepCallback& on_step = {});

// Standalone age regressor: the encoder trained only on the soft-label KL loss.
struct RegressorConfig {
  NetworkConfig net;
  int epochs = 20;
  int batch = 16;
  double lr = 1e-3;
  std::uint64_t seed = 0;
  bool flip = true;
  double blur_max_sigma = 0.0;
};

Encoder<float> train_regressor(const RegressorConfig& cfg, const Dataset& data,
                               const StepCallback& on_step = {});
void save_regressor(const Encoder<float>& reg, const std::filesystem::path& path);
Encoder<float> load_regressor(const std::filesystem::path& path);

// Expected ages predicted in eval mode, in batches.
std::vector<double> predict_ages(Encoder<float>& reg, const std::vector<Image>& images,
                                 std::size_t batch = 32);

}  // namespace idenbat
