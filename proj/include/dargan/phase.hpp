// Copyright 2026 The dargan-cpp Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// Phase post-processing: amplitude/consistency projections, deep Griffin-Lim
// with a trainable denoiser Phi, and the final amplitude/phase recombination.
//
//   R      = P_A(X_prev)          keep phase, impose reference amplitude A
//   Z      = P_C(R)               stft(istft(R))
//   X_next = Z - Phi(X_prev, R, Z)
//
// Complex spectrograms enter the autodiff graph as [1, 2, T, F] tensors
// (channel 0 real, channel 1 imaginary).

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <vector>

#include <json.hpp>

#include "dargan/dsp.hpp"
#include "dargan/nn.hpp"

namespace dargan::phase {

struct PppConfig {
  int iterations = 5;
  std::vector<int> phi_channels{32, 32, 2};
  int epochs = 60;
  double lr = 2e-4;
  int batch = 4;
  std::uint64_t seed = 5;

  void Validate() const;
  nlohmann::json ToJson() const;
  static PppConfig FromJson(const nlohmann::json& j);
};

// --- plain projections ------------------------------------------------------

dsp::ComplexSpectrogram ProjAmplitude(const dsp::ComplexSpectrogram& x,
                                      const dsp::RealGrid& amplitude);

/// stft(istft(X)) with synthesis length (T - 1) * hop. Needs T >= 3.
dsp::ComplexSpectrogram ProjConsistency(const dsp::ComplexSpectrogram& x);

/// A * X / |X|; A where |X| <= 1e-12.
dsp::ComplexSpectrogram ApplyPhase(const dsp::RealGrid& amplitude,
                                   const dsp::ComplexSpectrogram& x);

/// Frobenius norm over the full (Hermitian) spectrum of a half spectrum:
/// interior bins count twice, DC and Nyquist once.
double FullSpectrumNorm(const dsp::ComplexGrid& x);

/// d = ||P_A(X) - X|| in the full-spectrum norm.
double AmplitudeResidual(const dsp::ComplexSpectrogram& x,
                         const dsp::RealGrid& amplitude);

// --- graph ops ----------------------------------------------------------------

nn::Tensor ToTensor(const dsp::ComplexGrid& x);
dsp::ComplexGrid ToGrid(const nn::Tensor& t);

nn::Var ProjAmplitudeOp(const nn::Var& x, const dsp::RealGrid& amplitude);
nn::Var ProjConsistencyOp(const nn::Var& x, const dsp::StftConfig& cfg);

/// Three-layer 3x3 conv denoiser on the 6-channel stack (X_prev, R, Z).
class Phi {
 public:
  explicit Phi(const PppConfig& cfg);

  nn::ParamSet& params() { return params_; }
  const nn::ParamSet& params() const { return params_; }

  nn::Var Forward(const nn::Var& x_prev, const nn::Var& r, const nn::Var& z) const;

  const PppConfig& config() const { return cfg_; }

 private:
  PppConfig cfg_;
  int layers_ = 0;
  nn::ParamSet params_;
};

struct DglaStepResult {
  nn::Var x_next, r, z;
};

/// One iteration. A null `phi` gives the classical Griffin-Lim step.
DglaStepResult DglaStep(const nn::Var& x_prev, const dsp::RealGrid& amplitude,
                        const Phi* phi, const dsp::StftConfig& cfg);

struct DglaTrace {
  std::vector<nn::Var> iterates;   // X^[1] .. X^[M]
  std::vector<const Phi*> phi_used;  // denoiser instance applied at each step
};

DglaTrace RunDgla(const nn::Var& x0, const dsp::RealGrid& amplitude,
                  const Phi* phi, int iterations, const dsp::StftConfig& cfg);

/// X^[0] = A with the phase of `noisy`, M steps, then ApplyPhase.
dsp::ComplexSpectrogram EnhancePhase(const dsp::RealGrid& amplitude,
                                     const dsp::ComplexSpectrogram& noisy,
                                     const Phi* phi, int iterations);

// --- training -------------------------------------------------------------------

struct PppPair {
  dsp::ComplexSpectrogram enhanced;  // generator amplitude with noisy phase
  dsp::ComplexSpectrogram clean;
};

/// MAE over real and imaginary parts of X^[M] against the clean spectrum.
nn::Var PairLoss(const PppPair& pair, const Phi& phi, int iterations);

struct PppStepRecord {
  int epoch = 0;
  long step = 0;
  double mae = 0.0;
};

struct PppTrainResult {
  std::vector<PppStepRecord> steps;
  std::vector<double> val_mae;  // per epoch, empty without a validation set
  int best_epoch = -1;
};

/// Adam on Phi over shuffled mini-batches; keeps the parameters of the best
/// validation epoch when `val` is non-empty. Non-finite losses throw
/// DivergenceError.
PppTrainResult TrainPpp(Phi& phi, const std::vector<PppPair>& train,
                        const std::vector<PppPair>& val, const PppConfig& cfg,
                        const std::function<void(const PppStepRecord&)>& on_step = {});

/// Archive with header {kind: phi, ppp: config}.
void SavePhi(const std::filesystem::path& path, const Phi& phi);
Phi LoadPhi(const std::filesystem::path& path);

}  // namespace dargan::phase
