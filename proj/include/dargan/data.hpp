// Copyright 2026 The dargan-cpp Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// Corpus construction: synthetic speech and noise, SNR-exact mixing,
// line-oriented manifests and the (enhanced, clean) spectrum pairs used to
// train the phase denoiser.
//
// Corpus layout under a corpus directory:
//   clean/<id>.wav  noisy/<id>.wav  manifest_<split>.jsonl
// Manifest paths are relative to the manifest's own directory.

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "dargan/dsp.hpp"
#include "dargan/generator.hpp"
#include "dargan/phase.hpp"
#include "dargan/training.hpp"

namespace dargan::data {

using Warn = std::function<void(const std::string&)>;

const std::vector<double>& TrainSnrs();  // 15, 10, 5, 0 dB
const std::vector<double>& TestSnrs();   // 17.5, 12.5, 7.5, 2.5 dB

double Power(const dsp::Waveform& x);

/// 10 log10(P(clean) / P(noisy - clean)) over the whole utterance.
double MeasureSnr(const dsp::Waveform& clean, const dsp::Waveform& noisy);

struct MixResult {
  dsp::Waveform mixed;
  double gain = 0.0;
  std::size_t offset = 0;  // noise crop start
  int clipped = 0;         // samples clipped to [-1, 1]
};

/// Crops `noise` at an offset drawn from `rng`, scales it so the requested SNR
/// holds exactly, and adds it to `speech`.
MixResult MixAtSnr(const dsp::Waveform& speech, const dsp::Waveform& noise, double snr_db,
                   Rng& rng, const Warn& warn = {});

/// Rounds to the 16-bit PCM grid, so the result survives a WAV round trip.
dsp::Waveform QuantizePcm16(const dsp::Waveform& x);

/// Voiced harmonic source with a seeded pitch contour, shaped by moving
/// formant resonators and a syllabic envelope with pauses. Peak 0.5.
dsp::Waveform SynthSpeech(double seconds, std::uint64_t seed);

enum class NoiseKind { kWhite, kPink, kBabble };
std::string NoiseName(NoiseKind k);
NoiseKind ParseNoise(const std::string& name);

/// Unit-RMS noise of `samples` samples.
dsp::Waveform SynthNoise(NoiseKind kind, std::size_t samples, std::uint64_t seed);

// --- manifests ---

struct ManifestEntry {
  std::string id;
  std::string noisy;  // relative to the manifest directory
  std::string clean;
  double duration = 0.0;
  double snr_db = 0.0;
  double measured_snr_db = 0.0;  // before PCM quantization of the mixture
  std::string noise;
  std::uint64_t seed = 0;

  nlohmann::json ToJson() const;
  static ManifestEntry FromJson(const nlohmann::json& j);
};

struct Manifest {
  std::string split;  // train | val | test
  std::filesystem::path root;
  std::vector<ManifestEntry> entries;

  std::filesystem::path NoisyPath(const ManifestEntry& e) const { return root / e.noisy; }
  std::filesystem::path CleanPath(const ManifestEntry& e) const { return root / e.clean; }

  void Write(const std::filesystem::path& path) const;
  static Manifest Read(const std::filesystem::path& path, const std::string& split);
};

struct CorpusConfig {
  int n_utts = 8;  // train profile, before the validation split
  int n_test = 4;
  int val_count = 1;
  double duration_s = 1.0;
  std::vector<std::string> noises{"white", "pink", "babble"};
  std::vector<double> train_snrs = TrainSnrs();
  std::vector<double> test_snrs = TestSnrs();
  std::uint64_t seed = 3;

  void Validate() const;
  nlohmann::json ToJson() const;
  static CorpusConfig FromJson(const nlohmann::json& j);
};

/// Writes clean/ and noisy/ WAVs for `profile` ("train": n_utts utterances,
/// "test": n_test) and returns the manifest (split = profile, root = out_dir).
/// Utterance i draws SNR level i mod |snrs| and noise kind i mod |noises|.
Manifest SynthCorpus(const CorpusConfig& cfg, const std::string& profile,
                     const std::filesystem::path& out_dir, const Warn& warn = {});

/// Seeded disjoint split into (train, val).
std::pair<Manifest, Manifest> SplitManifest(const Manifest& m, int val_count,
                                            std::uint64_t seed);

/// Loads noisy/clean magnitudes for GAN training.
std::vector<train::Utterance> LoadUtterances(const Manifest& m, const dsp::StftConfig& stft);

// --- phase post-processing pairs ---

struct PppPairRecord {
  std::string id;
  std::string file;  // archive, relative to the pair directory
};

/// Enhances every entry with `g` and stores (generator amplitude with noisy
/// phase, clean spectrum) as <out_dir>/<split>/<id>.arc plus
/// <out_dir>/ppp_<split>.jsonl.
std::vector<PppPairRecord> BuildPppPairs(const Manifest& m, const gen::Generator& g,
                                         const std::filesystem::path& out_dir,
                                         const dsp::StftConfig& stft = {});

void SavePppPair(const std::filesystem::path& path, const phase::PppPair& pair);
phase::PppPair LoadPppPair(const std::filesystem::path& path);

/// Reads a ppp_<split>.jsonl index and every pair it lists.
std::vector<phase::PppPair> LoadPppPairs(const std::filesystem::path& index);

}  // namespace dargan::data
