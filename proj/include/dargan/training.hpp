// Copyright 2026 The dargan-cpp Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// LS-GAN training of the generator against the discriminator.
//
//   D:  mean (D(clean) - 1)^2 + mean D(G(noisy))^2
//   G:  mean (D(G(noisy)) - 1)^2 + lambda_g * masked L1(G(noisy), clean)
//
// One D step, then one G step, per mini-batch of whole utterances padded to
// the longest one.

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "dargan/archive.hpp"
#include "dargan/discriminator.hpp"
#include "dargan/dsp.hpp"
#include "dargan/generator.hpp"
#include "dargan/nn.hpp"

namespace dargan::train {

struct GanTrainConfig {
  double lambda_g = 1.0;
  double lr_g = 5e-4;
  double lr_d = 1e-4;
  int epochs = 100;
  int batch = 4;
  int halve_patience = 3;
  int stop_patience = 10;
  std::uint64_t seed = 7;

  void Validate() const;
  nlohmann::json ToJson() const;
  static GanTrainConfig FromJson(const nlohmann::json& j);
};

// --- losses -------------------------------------------------------------------

nn::Var DLoss(const std::vector<nn::Var>& d_real, const std::vector<nn::Var>& d_fake);

struct GLossParts {
  nn::Var total, adv, l1;
};

/// est: [N,1,T,F]; target: same shape; mask: N*T frame flags.
GLossParts GLoss(const std::vector<nn::Var>& d_fake, const nn::Var& est,
                 const nn::Tensor& target, const std::vector<double>& mask,
                 double lambda_g);

double DLossValue(const std::vector<double>& d_real, const std::vector<double>& d_fake);

// --- schedule -------------------------------------------------------------------

enum class LrAction { kContinue, kHalve, kStop };
std::string ActionName(LrAction a);

struct LrScheduleState {
  std::optional<double> prev_val;
  double best_val = std::numeric_limits<double>::infinity();
  int consec_increments = 0;
  double lr_g = 5e-4;
  double lr_d = 1e-4;

  nlohmann::json ToJson() const;
  static LrScheduleState FromJson(const nlohmann::json& j);
};

LrScheduleState InitialSchedule(const GanTrainConfig& cfg);

/// Counts strict increases over the previous epoch; halves both rates at
/// every multiple of halve_patience, stops at stop_patience.
LrAction LrScheduleUpdate(LrScheduleState& state, double new_val_loss,
                          const GanTrainConfig& cfg);

// --- batching -------------------------------------------------------------------

struct Utterance {
  std::string id;
  dsp::MagnitudeSpectrogram noisy;
  dsp::MagnitudeSpectrogram clean;
};

struct PaddedBatch {
  nn::Tensor mags;     // [B,1,T_max,F]
  nn::Tensor targets;  // [B,1,T_max,F]
  std::vector<double> mask;  // B*T_max, 1 on real frames
  std::vector<int> lengths;
};

PaddedBatch PadAndMask(const std::vector<const Utterance*>& utts);

// --- loop -----------------------------------------------------------------------

struct StepRecord {
  int epoch = 0;
  long step = 0;
  double d_loss = 0.0;
  double g_adv = 0.0;
  double g_l1 = 0.0;
  double lr_g = 0.0;
  double lr_d = 0.0;
};

struct EpochRecord {
  int epoch = 0;
  long step = 0;
  double val_loss = 0.0;
  LrAction action = LrAction::kContinue;
  double lr_g = 0.0;
  double lr_d = 0.0;
};

struct LossValues {
  double d_loss = 0.0, g_adv = 0.0, g_l1 = 0.0, g_total = 0.0;
};

class GanTrainer {
 public:
  GanTrainer(gen::Generator& g, disc::Discriminator& d, GanTrainConfig cfg);

  /// One D update then one G update.
  StepRecord Step(const PaddedBatch& batch);

  /// Both losses at the current parameters, without updating anything.
  LossValues Evaluate(const PaddedBatch& batch) const;

  /// Mean over utterances of the final-stage L1 to the clean magnitude.
  double ValidationLoss(const std::vector<Utterance>& val) const;

  const LrScheduleState& schedule() const { return schedule_; }
  LrScheduleState& schedule() { return schedule_; }
  long steps() const { return step_; }
  void set_epoch(int epoch) { epoch_ = epoch; }

  void SaveState(Archive& ar) const;
  void LoadState(const Archive& ar);

 private:
  gen::Generator& g_;
  disc::Discriminator& d_;
  GanTrainConfig cfg_;
  nn::Adam adam_g_;
  nn::Adam adam_d_;
  LrScheduleState schedule_;
  long step_ = 0;
  int epoch_ = 0;
};

struct GanTrainResult {
  std::vector<StepRecord> steps;
  std::vector<EpochRecord> epochs;
  int best_epoch = -1;
  double best_val = 0.0;
};

struct TrainIo {
  std::filesystem::path run_dir;  // checkpoints/, train_log.jsonl
  bool resume = false;
};

/// Full loop: per-epoch shuffle, validation, schedule, best-model selection.
/// On return the generator holds the best-validation parameters. With `io`,
/// writes a checkpoint per epoch, a best-pointer file and a JSONL log, and can
/// resume from the newest checkpoint.
GanTrainResult TrainGan(gen::Generator& g, disc::Discriminator& d,
                        const std::vector<Utterance>& train,
                        const std::vector<Utterance>& val, const GanTrainConfig& cfg,
                        const TrainIo* io = nullptr,
                        const std::function<void(const StepRecord&)>& on_step = {},
                        const std::function<void(const EpochRecord&)>& on_epoch = {});

nlohmann::json ToJson(const StepRecord& r);
nlohmann::json ToJson(const EpochRecord& r);

/// Saves / loads a standalone generator archive (config header + params).
void SaveGenerator(const std::filesystem::path& path, const gen::Generator& g);
gen::Generator LoadGenerator(const std::filesystem::path& path);

}  // namespace dargan::train
