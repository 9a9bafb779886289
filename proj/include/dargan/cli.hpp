// Copyright 2026 The dargan-cpp Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// Run configuration and the mix / train / enhance / evaluate commands.
//
// Run directory layout:
//   config.json            resolved configuration of the last command
//   <command>.log          plain-text log of the last run of each command
//   corpus/                clean/, noisy/, manifest_{train,val,test}.jsonl
//   gan/                   checkpoints/, train_log.jsonl, generator_best.arc
//   ppp/                   pairs/, train_log.jsonl, phi_best.arc
//   enhanced/              default enhance output
//   eval/                  metrics.csv, summary.txt, plots/

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "dargan/data.hpp"
#include "dargan/discriminator.hpp"
#include "dargan/dsp.hpp"
#include "dargan/generator.hpp"
#include "dargan/metrics.hpp"
#include "dargan/phase.hpp"
#include "dargan/training.hpp"

namespace dargan::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitValidation = 2;

inline constexpr const char* kRunDirEnv = "DARGAN_RUN_DIR";

struct RunConfig {
  dsp::StftConfig dsp;
  gen::GeneratorConfig generator;
  disc::DiscriminatorConfig discriminator;
  train::GanTrainConfig training;
  std::optional<phase::PppConfig> ppp;  // PPP training runs only when present
  data::CorpusConfig data;
  metrics::MetricsConfig metrics;
  std::filesystem::path run_dir = "run";
  std::uint64_t seed = 1;

  void Validate() const;
  nlohmann::json ToJson() const;
};

/// Every accepted key with its default value; "ppp" included.
nlohmann::json DefaultTree();

/// Applies "a.b.c=value" to `tree`. The value is parsed as JSON and falls
/// back to a plain string.
void ApplyOverride(nlohmann::json& tree, const std::string& assignment);

/// Checks `user` against the default tree (unknown keys, value types), fills
/// in defaults, derives module seeds the user left unset from the master
/// seed, applies the run-directory environment override and validates every
/// section. Throws ConfigError naming the offending dotted key.
RunConfig ResolveConfig(const nlohmann::json& user, const char* env_run_dir = nullptr);

/// Writes a log-magnitude spectrogram comparison (panels stacked top to
/// bottom, low frequencies at the bottom of each panel) as a binary PPM.
void WriteSpectrogramPpm(const std::filesystem::path& path,
                         const std::vector<dsp::MagnitudeSpectrogram>& panels);

/// Entry point of the dargan tool; returns the process exit code.
int Main(int argc, const char* const* argv);

}  // namespace dargan::cli
