// Copyright 2026 The dargan-cpp Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// Recurrent convolutional discriminator: spectrally normalized conv encoder,
// bidirectional LSTM, per-frame FC(16) -> FC(1), mean over frames.

#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include <json.hpp>

#include "dargan/nn.hpp"

namespace dargan::disc {

struct DiscriminatorConfig {
  std::vector<int> conv_channels{16, 16, 32, 32, 64, 64};
  int kernel_t = 2;
  int kernel_f = 5;
  int stride_f = 2;
  int blstm_units = 128;
  std::vector<int> fc_units{16, 1};
  int sn_power_iters = 1;
  int input_bins = 161;
  std::uint64_t seed = 2;

  void Validate() const;
  nlohmann::json ToJson() const;
  static DiscriminatorConfig FromJson(const nlohmann::json& j);
};

struct SpectralNormResult {
  Eigen::MatrixXd normalized;
  Eigen::VectorXd u;
  Eigen::VectorXd v;
  double sigma = 0.0;
};

/// Power iteration on W (rows x cols) warm-started from unit vector u.
/// sigma = u^T W v, floored at 1e-12.
SpectralNormResult SpectralNormalizeMatrix(const Eigen::MatrixXd& weight,
                                           const Eigen::VectorXd& u, int iters);

/// Minimum frame count fed to the encoder; shorter inputs are zero-padded.
inline constexpr int kMinFrames = 7;

class Discriminator {
 public:
  explicit Discriminator(DiscriminatorConfig cfg);

  const DiscriminatorConfig& config() const { return cfg_; }
  nn::ParamSet& params() { return params_; }
  const nn::ParamSet& params() const { return params_; }

  /// Advances every stored (u, v) pair by `iters` power iterations.
  void PowerIterate(int iters);

  /// mag: [1,1,T,F]. Returns a [1] score.
  nn::Var Forward(const nn::Var& mag) const;

  /// Scores each batch entry n over its first lengths[n] frames.
  std::vector<nn::Var> ScoreBatch(const nn::Var& mags,
                                  const std::vector<int>& lengths) const;

  /// Frequency width after the conv encoder for `bins` input bins.
  int EncoderWidth(int bins) const;

  /// Largest singular value of conv layer k's normalized weight (dense SVD).
  double NormalizedSigma(int layer) const;

 private:
  nn::Var Lstm(const nn::Var& seq, const std::string& dir, bool reverse) const;
  nn::ConvSpec Spec() const;

  DiscriminatorConfig cfg_;
  nn::ParamSet params_;
};

}  // namespace dargan::disc
