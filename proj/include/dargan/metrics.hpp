// Copyright 2026 The dargan-cpp Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// Objective quality measures on 16 kHz waveforms.
//
// All three sub-measures frame both signals with the same Hann window
// w[n] = 0.5 (1 - cos(2 pi (n+1) / (L+1))), n = 0..L-1, and drop the tail that
// does not fill a frame.

#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "dargan/dsp.hpp"

namespace dargan::metrics {

struct MetricsConfig {
  int frame = 512;
  int hop = 256;
  int lpc_order = 10;
  double keep_fraction = 0.95;     // llr / wss: mean of the smallest frames
  double active_floor_db = -60.0;  // segsnr: frames this far below the loudest are inactive
  std::string pesq_cmd;            // "{clean}" / "{est}" placeholders; empty = no PESQ

  void Validate() const;
  nlohmann::json ToJson() const;
  static MetricsConfig FromJson(const nlohmann::json& j);
};

inline constexpr double kSegSnrMin = -10.0;
inline constexpr double kSegSnrMax = 35.0;

std::vector<double> HannWindow(int length);

/// Number of full frames in `n` samples.
int FrameCount(std::size_t n, const MetricsConfig& cfg);

double SegSnr(const dsp::Waveform& clean, const dsp::Waveform& est,
              const MetricsConfig& cfg = {});
double Llr(const dsp::Waveform& clean, const dsp::Waveform& est,
           const MetricsConfig& cfg = {});
double Wss(const dsp::Waveform& clean, const dsp::Waveform& est,
           const MetricsConfig& cfg = {});

/// Autocorrelation lags 0..order and Levinson-Durbin predictor [1, a1..ap].
std::pair<std::vector<double>, std::vector<double>> LpcFromFrame(
    const std::vector<double>& frame, int order);

/// Mean of the smallest round(keep * n) values (at least one).
double TrimmedMean(std::vector<double> values, double keep);

struct CompositeScores {
  double csig = 0.0, cbak = 0.0, covl = 0.0;
};

CompositeScores Composite(double pesq, double llr, double wss, double segsnr);

/// Runs the PESQ command template and parses the last number it prints.
double RunPesq(const std::string& cmd_template, const std::filesystem::path& clean,
               const std::filesystem::path& est);

struct UtteranceMetrics {
  std::string file;
  double segsnr = 0.0, llr = 0.0, wss = 0.0;
  std::optional<double> pesq, csig, cbak, covl;
  std::string error;  // non-empty when the file could not be scored
};

struct MetricsReport {
  std::vector<UtteranceMetrics> rows;
  UtteranceMetrics mean;  // file = "mean"; over rows without error
  int failures = 0;

  void Aggregate();
  std::string ToCsv() const;
  static MetricsReport FromCsv(const std::string& text);
  std::string Summary() const;
};

struct FilePair {
  std::filesystem::path clean, est;
};

/// Scores every pair; per-file failures are recorded and the run continues.
MetricsReport EvaluateCorpus(const std::vector<FilePair>& pairs, const MetricsConfig& cfg,
                             const std::function<void(const std::string&)>& warn = {});

}  // namespace dargan::metrics
