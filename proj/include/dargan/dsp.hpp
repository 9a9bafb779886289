// Copyright 2026 The dargan-cpp Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <Eigen/Core>
#include <complex>
#include <cstddef>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "dargan/common.hpp"

namespace dargan::dsp {

using Complex = std::complex<double>;
using RealGrid =
    Eigen::Array<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ComplexGrid =
    Eigen::Array<Complex, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline constexpr int kSampleRate = 16000;

struct Waveform {
  std::vector<double> samples;
  int sample_rate = kSampleRate;

  std::size_t size() const { return samples.size(); }
};

struct StftConfig {
  int win_length = 320;
  int hop_length = 160;
  int fft_size = 320;
  std::string window = "hamming";

  int bins() const { return fft_size / 2 + 1; }
  int pad() const { return win_length / 2; }
  /// Throws InvalidInput when the config breaks the 50%-overlap contract.
  void Validate() const;
  nlohmann::json ToJson() const;
  static StftConfig FromJson(const nlohmann::json& j);
};

/// T x F grid of complex coefficients (rows are frames).
struct ComplexSpectrogram {
  ComplexGrid data;
  StftConfig config;

  int frames() const { return static_cast<int>(data.rows()); }
  int bins() const { return static_cast<int>(data.cols()); }
};

/// T x F grid of nonnegative magnitudes.
struct MagnitudeSpectrogram {
  RealGrid data;

  int frames() const { return static_cast<int>(data.rows()); }
  int bins() const { return static_cast<int>(data.cols()); }
};

/// Periodic analysis window of length cfg.win_length.
std::vector<double> AnalysisWindow(const StftConfig& cfg);

/// Number of frames Stft produces for a signal of `num_samples` samples.
int FrameCount(std::size_t num_samples, const StftConfig& cfg);

/// Analysis STFT. Signals shorter than one window are zero-padded to one
/// window, then reflect-padded by win_length/2 at both ends.
ComplexSpectrogram Stft(const Waveform& wave, const StftConfig& cfg);

/// Least-squares weighted overlap-add synthesis. Contributions landing in the
/// reflected margins are folded back onto their source samples, so
/// Istft(Stft(x)) == x and Stft(Istft(.)) is an orthogonal projection.
Waveform Istft(const ComplexSpectrogram& spec, const StftConfig& cfg,
               std::size_t target_len);

/// Inverts one analysis frame: irfft followed by division by the window.
std::vector<double> InverseFrame(const Eigen::Ref<const Eigen::Array<
                                     Complex, 1, Eigen::Dynamic>>& row,
                                 const StftConfig& cfg);

/// Adjoint of Stft viewed as a real-linear map R^len -> C^{TxF}. `grad` holds
/// dL/dRe + i dL/dIm per bin.
std::vector<double> StftAdjoint(const ComplexGrid& grad, const StftConfig& cfg,
                                std::size_t len);

/// Adjoint of Istft viewed as a real-linear map C^{TxF} -> R^target_len.
ComplexGrid IstftAdjoint(const std::vector<double>& grad,
                         const StftConfig& cfg, int frames,
                         std::size_t target_len);

/// Magnitude and unit phasors; phasor is exactly 1+0i where |X| <= 1e-12.
std::pair<MagnitudeSpectrogram, ComplexSpectrogram> SplitMagPhase(
    const ComplexSpectrogram& spec);

MagnitudeSpectrogram Magnitude(const ComplexSpectrogram& spec);

/// RIFF / 16-bit PCM / mono / 16 kHz only.
Waveform ReadWav(const std::filesystem::path& path);
void WriteWav(const std::filesystem::path& path, const Waveform& wave);

}  // namespace dargan::dsp
