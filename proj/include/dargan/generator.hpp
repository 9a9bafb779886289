// Copyright 2026 The dargan-cpp Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// Recursive dynamic-attention generator.
//
// One set of weights is unrolled over `num_stages` stages. Each stage:
//   h      = SRNN(noisy, prev_est, h_prev)         conv-GRU over stages
//   gates  = AGM(noisy, prev_est)                  sigmoid gate per block
//   est    = NRM(noisy, prev_est, h, gates)        gated encoder/decoder
// Stage 1 starts from prev_est = noisy and h = 0.

#pragma once

#include <cstdint>
#include <vector>

#include <json.hpp>

#include "dargan/dsp.hpp"
#include "dargan/nn.hpp"

namespace dargan::gen {

struct GeneratorConfig {
  int num_stages = 3;
  std::vector<int> feature_channels{16, 32, 64, 64, 64};
  std::vector<int> attention_channels{16, 16, 16};
  int srnn_hidden = 16;
  std::uint64_t seed = 1;

  void Validate() const;
  nlohmann::json ToJson() const;
  static GeneratorConfig FromJson(const nlohmann::json& j);
};

/// SRNN memory h: [N, srnn_hidden, T, F].
struct StageState {
  nn::Var h;
};

/// One sigmoid gate map per gated noise-removal block (encoder blocks first,
/// then decoder blocks), each shaped like that block's output.
struct AttentionVector {
  std::vector<nn::Var> gates;
};

struct StageOutput {
  nn::Var estimate;  // [N, 1, T, F]
  StageState state;
};

class Generator {
 public:
  explicit Generator(GeneratorConfig cfg);

  const GeneratorConfig& config() const { return cfg_; }
  nn::ParamSet& params() { return params_; }
  const nn::ParamSet& params() const { return params_; }

  int num_blocks() const { return static_cast<int>(cfg_.feature_channels.size()); }
  int num_gated_layers() const { return 2 * num_blocks(); }

  StageState InitialState(int batch, int frames, int bins) const;

  /// Conv-GRU update of the stage memory.
  StageState SrnnStep(const nn::Var& noisy, const nn::Var& prev_est,
                      const StageState& prev) const;

  AttentionVector Attention(const nn::Var& noisy,
                            const nn::Var& prev_est) const;

  nn::Var NoiseRemoval(const nn::Var& noisy, const nn::Var& prev_est,
                       const StageState& state,
                       const AttentionVector& gates) const;

  StageOutput Stage(const nn::Var& noisy, const nn::Var& prev_est,
                    const StageState& prev) const;

  /// All stage estimates |S^1| ... |S^Q|; the last one is the output.
  std::vector<nn::Var> Forward(const nn::Var& noisy) const;

  /// Convenience wrapper over a single magnitude spectrogram.
  std::vector<dsp::MagnitudeSpectrogram> Enhance(
      const dsp::MagnitudeSpectrogram& noisy) const;

  /// Channel counts and widths of the gate map for gated layer l at input
  /// width `bins`.
  std::pair<int, int> GateGeometry(int layer, int bins) const;

 private:
  int DecoderOutChannels(int k) const;
  std::vector<int> EncoderWidths(int bins) const;

  GeneratorConfig cfg_;
  nn::ParamSet params_;
};

/// Packs a magnitude spectrogram as a [1,1,T,F] tensor.
nn::Tensor ToTensor(const dsp::MagnitudeSpectrogram& mag);
dsp::MagnitudeSpectrogram FromTensor(const nn::Tensor& t, int batch_index = 0);

}  // namespace dargan::gen
