// Copyright 2026 The dargan-cpp Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "dargan/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "dargan/archive.hpp"

namespace dargan::data {
namespace {

using dsp::Waveform;

constexpr double kFs = dsp::kSampleRate;

// Two-pole resonator with unity gain at its centre frequency.
struct Resonator {
  double y1 = 0.0, y2 = 0.0;
  double Step(double x, double freq, double bw) {
    const double r = std::exp(-M_PI * bw / kFs);
    const double a1 = -2.0 * r * std::cos(2.0 * M_PI * freq / kFs);
    const double a2 = r * r;
    const double y = (1.0 - r) * x - a1 * y1 - a2 * y2;
    y2 = y1;
    y1 = y;
    return y;
  }
};

struct Segment {
  std::size_t start = 0, end = 0;
  bool voiced = true;
  double f1 = 0, f2 = 0, f3 = 0;
  double pitch = 1.0;
};

void Normalize(Waveform& w, double peak) {
  double m = 0.0;
  for (double v : w.samples) m = std::max(m, std::abs(v));
  if (m > 0.0)
    for (double& v : w.samples) v *= peak / m;
}

void ScaleToUnitRms(Waveform& w) {
  const double p = Power(w);
  if (p > 0.0)
    for (double& v : w.samples) v /= std::sqrt(p);
}

void PutComplex(Archive& ar, const std::string& name, const dsp::ComplexGrid& g) {
  nn::Tensor re({static_cast<int>(g.rows()), static_cast<int>(g.cols())});
  nn::Tensor im = re;
  for (Eigen::Index i = 0; i < g.size(); ++i) {
    re[i] = g.data()[i].real();
    im[i] = g.data()[i].imag();
  }
  ar.arrays[name + "_re"] = std::move(re);
  ar.arrays[name + "_im"] = std::move(im);
}

dsp::ComplexGrid GetComplex(const Archive& ar, const std::string& name,
                            const std::filesystem::path& path) {
  const auto re = ar.arrays.find(name + "_re"), im = ar.arrays.find(name + "_im");
  if (re == ar.arrays.end() || im == ar.arrays.end() || re->second.rank() != 2 ||
      re->second.shape != im->second.shape)
    throw FormatError(path.string() + ": missing or malformed " + name + " spectrum");
  dsp::ComplexGrid g(re->second.shape[0], re->second.shape[1]);
  for (Eigen::Index i = 0; i < g.size(); ++i)
    g.data()[i] = {re->second[i], im->second[i]};
  return g;
}

}  // namespace

const std::vector<double>& TrainSnrs() {
  static const std::vector<double> v{15.0, 10.0, 5.0, 0.0};
  return v;
}

const std::vector<double>& TestSnrs() {
  static const std::vector<double> v{17.5, 12.5, 7.5, 2.5};
  return v;
}

double Power(const Waveform& x) {
  if (x.samples.empty()) return 0.0;
  double acc = 0.0;
  for (double v : x.samples) acc += v * v;
  return acc / static_cast<double>(x.size());
}

double MeasureSnr(const Waveform& clean, const Waveform& noisy) {
  if (clean.size() != noisy.size()) throw InvalidInput("measure_snr: length mismatch");
  Waveform diff = noisy;
  for (std::size_t i = 0; i < diff.size(); ++i) diff.samples[i] -= clean.samples[i];
  return 10.0 * std::log10(Power(clean) / Power(diff));
}

MixResult MixAtSnr(const Waveform& speech, const Waveform& noise, double snr_db, Rng& rng,
                   const Warn& warn) {
  if (!std::isfinite(snr_db)) throw InvalidInput("mix: snr must be finite");
  if (noise.size() < speech.size())
    throw InvalidInput("mix: noise (" + std::to_string(noise.size()) +
                       " samples) shorter than speech (" + std::to_string(speech.size()) + ")");
  const double ps = Power(speech);
  if (!(ps > 0.0)) throw InvalidInput("mix: speech has zero power");
  MixResult r;
  r.offset = rng.Below(noise.size() - speech.size() + 1);
  std::vector<double> crop(noise.samples.begin() + r.offset,
                           noise.samples.begin() + r.offset + speech.size());
  double pn = 0.0;
  for (double v : crop) pn += v * v;
  pn /= static_cast<double>(crop.size());
  if (!(pn > 0.0)) throw InvalidInput("mix: noise segment has zero power");
  r.gain = std::sqrt(ps / (pn * std::pow(10.0, snr_db / 10.0)));
  r.mixed = speech;
  for (std::size_t i = 0; i < crop.size(); ++i) {
    double& v = r.mixed.samples[i];
    v += r.gain * crop[i];
    if (std::abs(v) > 1.0) {
      v = std::clamp(v, -1.0, 1.0);
      ++r.clipped;
    }
  }
  if (r.clipped > 0 && warn)
    warn("mix: clipped " + std::to_string(r.clipped) + " samples at " +
         std::to_string(snr_db) + " dB");
  return r;
}

Waveform QuantizePcm16(const Waveform& x) {
  Waveform q = x;
  for (double& v : q.samples) v = std::round(std::clamp(v, -1.0, 1.0) * 32767.0) / 32767.0;
  return q;
}

Waveform SynthSpeech(double seconds, std::uint64_t seed) {
  if (!(seconds > 0.0)) throw InvalidInput("synth_speech: duration must be > 0");
  Rng rng(seed);
  const std::size_t n = static_cast<std::size_t>(std::llround(seconds * kFs));
  const double base_f0 = rng.Uniform(95.0, 220.0);
  const double vib_rate = rng.Uniform(0.3, 1.2), vib_phase = rng.Uniform(0.0, 2.0 * M_PI);

  std::vector<Segment> segs;
  for (std::size_t t = static_cast<std::size_t>(rng.Uniform(0.02, 0.08) * kFs); t < n;) {
    Segment s;
    s.voiced = rng.Uniform() > 0.2;
    const double dur = s.voiced ? rng.Uniform(0.12, 0.26) : rng.Uniform(0.06, 0.12);
    s.start = t;
    s.end = std::min(n, t + static_cast<std::size_t>(dur * kFs));
    s.f1 = rng.Uniform(300.0, 800.0);
    s.f2 = rng.Uniform(900.0, 2300.0);
    s.f3 = rng.Uniform(2400.0, 3300.0);
    s.pitch = rng.Uniform(0.85, 1.15);
    segs.push_back(s);
    t = s.end + static_cast<std::size_t>(rng.Uniform(0.03, 0.14) * kFs);
  }

  Waveform w;
  w.samples.assign(n, 0.0);
  Resonator r1, r2, r3;
  double phase = 0.0;
  for (const auto& s : segs) {
    const double len = static_cast<double>(s.end - s.start);
    for (std::size_t i = s.start; i < s.end; ++i) {
      const double u = (i - s.start) / len;
      const double env = std::pow(std::sin(M_PI * u), 1.5);
      double src;
      if (s.voiced) {
        const double f0 = base_f0 * s.pitch * (1.0 - 0.1 * u) *
                          (1.0 + 0.08 * std::sin(2.0 * M_PI * vib_rate * i / kFs + vib_phase));
        phase += 2.0 * M_PI * f0 / kFs;
        src = 0.0;
        for (int k = 1; k * f0 < 3800.0; ++k) src += std::cos(k * phase) / k;
      } else {
        src = 0.3 * rng.Normal();
      }
      // formants glide by 15% over the segment
      const double glide = 1.0 + 0.15 * (u - 0.5);
      double y = r1.Step(src, s.f1 * glide, 90.0) + 0.7 * r2.Step(src, s.f2 / glide, 120.0) +
                 0.4 * r3.Step(src, s.f3, 180.0);
      if (!s.voiced) y = src - 0.9 * y;
      w.samples[i] = env * y;
    }
  }
  Normalize(w, 0.5);
  return w;
}

std::string NoiseName(NoiseKind k) {
  switch (k) {
    case NoiseKind::kWhite: return "white";
    case NoiseKind::kPink: return "pink";
    case NoiseKind::kBabble: return "babble";
  }
  return "?";
}

NoiseKind ParseNoise(const std::string& name) {
  if (name == "white") return NoiseKind::kWhite;
  if (name == "pink") return NoiseKind::kPink;
  if (name == "babble") return NoiseKind::kBabble;
  throw InvalidInput("unknown noise kind '" + name + "' (white, pink, babble)");
}

Waveform SynthNoise(NoiseKind kind, std::size_t samples, std::uint64_t seed) {
  Waveform w;
  w.samples.assign(samples, 0.0);
  Rng rng(seed);
  switch (kind) {
    case NoiseKind::kWhite:
      for (double& v : w.samples) v = rng.Normal();
      break;
    case NoiseKind::kPink: {
      // Kellet's 1/f approximation
      double b[7] = {};
      for (double& v : w.samples) {
        const double x = rng.Normal();
        b[0] = 0.99886 * b[0] + x * 0.0555179;
        b[1] = 0.99332 * b[1] + x * 0.0750759;
        b[2] = 0.96900 * b[2] + x * 0.1538520;
        b[3] = 0.86650 * b[3] + x * 0.3104856;
        b[4] = 0.55000 * b[4] + x * 0.5329522;
        b[5] = -0.7616 * b[5] - x * 0.0168980;
        v = b[0] + b[1] + b[2] + b[3] + b[4] + b[5] + b[6] + x * 0.5362;
        b[6] = x * 0.115926;
      }
      break;
    }
    case NoiseKind::kBabble: {
      const double seconds = static_cast<double>(samples) / kFs;
      for (int talker = 0; talker < 6; ++talker) {
        const auto s = SynthSpeech(seconds, DeriveSeed(seed, talker));
        for (std::size_t i = 0; i < samples && i < s.size(); ++i) w.samples[i] += s.samples[i];
      }
      for (double& v : w.samples) v += 0.01 * rng.Normal();
      break;
    }
  }
  ScaleToUnitRms(w);
  return w;
}

nlohmann::json ManifestEntry::ToJson() const {
  return {{"id", id},
          {"noisy", noisy},
          {"clean", clean},
          {"duration", duration},
          {"snr_db", snr_db},
          {"measured_snr_db", measured_snr_db},
          {"noise", noise},
          {"seed", seed}};
}

ManifestEntry ManifestEntry::FromJson(const nlohmann::json& j) {
  ManifestEntry e;
  e.id = j.at("id").get<std::string>();
  e.noisy = j.at("noisy").get<std::string>();
  e.clean = j.at("clean").get<std::string>();
  e.duration = j.at("duration").get<double>();
  e.snr_db = j.at("snr_db").get<double>();
  e.measured_snr_db = j.value("measured_snr_db", e.snr_db);
  e.noise = j.at("noise").get<std::string>();
  e.seed = j.at("seed").get<std::uint64_t>();
  return e;
}

void Manifest::Write(const std::filesystem::path& path) const {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("cannot write manifest " + path.string());
  for (const auto& e : entries) os << e.ToJson().dump() << '\n';
  if (!os) throw IoError("failed writing manifest " + path.string());
}

Manifest Manifest::Read(const std::filesystem::path& path, const std::string& split) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot read manifest " + path.string());
  Manifest m;
  m.split = split;
  m.root = path.parent_path();
  std::string line;
  for (int no = 1; std::getline(is, line); ++no) {
    if (line.empty()) continue;
    try {
      m.entries.push_back(ManifestEntry::FromJson(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(path.string() + ":" + std::to_string(no) + ": " + e.what());
    }
  }
  return m;
}

void CorpusConfig::Validate() const {
  if (n_utts < 2) throw InvalidInput("data.n_utts must be >= 2");
  if (n_test < 0) throw InvalidInput("data.n_test must be >= 0");
  if (val_count < 0 || val_count >= n_utts)
    throw InvalidInput("data.val_count must be in [0, n_utts)");
  for (const auto* snrs : {&train_snrs, &test_snrs}) {
    if (snrs->empty()) throw InvalidInput("data: snr lists must not be empty");
    for (double v : *snrs)
      if (!std::isfinite(v)) throw InvalidInput("data: snr levels must be finite");
  }
  if (!(duration_s >= 0.1 && duration_s <= 30.0))
    throw InvalidInput("data.duration_s must be in [0.1, 30]");
  if (noises.empty()) throw InvalidInput("data.noises must not be empty");
  for (const auto& n : noises) ParseNoise(n);
}

nlohmann::json CorpusConfig::ToJson() const {
  return {{"n_utts", n_utts},         {"n_test", n_test},
          {"val_count", val_count},   {"duration_s", duration_s},
          {"noises", noises},         {"train_snrs", train_snrs},
          {"test_snrs", test_snrs},   {"seed", seed}};
}

CorpusConfig CorpusConfig::FromJson(const nlohmann::json& j) {
  CorpusConfig c;
  c.n_utts = j.at("n_utts").get<int>();
  c.n_test = j.at("n_test").get<int>();
  c.val_count = j.at("val_count").get<int>();
  c.train_snrs = j.at("train_snrs").get<std::vector<double>>();
  c.test_snrs = j.at("test_snrs").get<std::vector<double>>();
  c.duration_s = j.at("duration_s").get<double>();
  c.noises = j.at("noises").get<std::vector<std::string>>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.Validate();
  return c;
}

Manifest SynthCorpus(const CorpusConfig& cfg, const std::string& profile,
                     const std::filesystem::path& out_dir, const Warn& warn) {
  cfg.Validate();
  if (profile != "train" && profile != "test")
    throw InvalidInput("synth_corpus: profile must be train or test");
  const auto& snrs = profile == "train" ? cfg.train_snrs : cfg.test_snrs;
  const int count = profile == "train" ? cfg.n_utts : cfg.n_test;
  std::error_code ec;
  std::filesystem::create_directories(out_dir / "clean", ec);
  std::filesystem::create_directories(out_dir / "noisy", ec);
  if (ec || !std::filesystem::is_directory(out_dir / "noisy"))
    throw IoError("cannot create corpus directory " + out_dir.string());

  Manifest m;
  m.split = profile;
  m.root = out_dir;
  const std::uint64_t profile_seed = DeriveSeed(cfg.seed, profile == "train" ? 0 : 1);
  for (int i = 0; i < count; ++i) {
    ManifestEntry e;
    char id[32];
    std::snprintf(id, sizeof id, "%s_%04d", profile.c_str(), i);
    e.id = id;
    e.seed = DeriveSeed(profile_seed, static_cast<std::uint64_t>(i));
    e.snr_db = snrs[i % snrs.size()];
    e.noise = cfg.noises[i % cfg.noises.size()];
    const auto clean = QuantizePcm16(SynthSpeech(cfg.duration_s, DeriveSeed(e.seed, 0)));
    const auto noise = SynthNoise(ParseNoise(e.noise), clean.size() + kFs / 2,
                                  DeriveSeed(e.seed, 1));
    Rng mix_rng(DeriveSeed(e.seed, 2));
    const auto mix = MixAtSnr(clean, noise, e.snr_db, mix_rng,
                              [&](const std::string& w) { if (warn) warn(e.id + ": " + w); });
    e.measured_snr_db = MeasureSnr(clean, mix.mixed);
    e.duration = static_cast<double>(clean.size()) / kFs;
    e.clean = "clean/" + e.id + ".wav";
    e.noisy = "noisy/" + e.id + ".wav";
    dsp::WriteWav(out_dir / e.clean, clean);
    dsp::WriteWav(out_dir / e.noisy, mix.mixed);
    m.entries.push_back(std::move(e));
  }
  return m;
}

std::pair<Manifest, Manifest> SplitManifest(const Manifest& m, int val_count,
                                            std::uint64_t seed) {
  const int total = static_cast<int>(m.entries.size());
  if (val_count < 0 || val_count >= total)
    throw InvalidInput("split: val_count " + std::to_string(val_count) +
                       " must be in [0, " + std::to_string(total) + ")");
  std::vector<int> order(total);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  for (int i = total - 1; i > 0; --i) std::swap(order[i], order[rng.Below(i + 1)]);
  std::vector<int> val_idx(order.begin(), order.begin() + val_count);
  std::sort(val_idx.begin(), val_idx.end());
  std::vector<bool> in_val(total, false);
  for (int i : val_idx) in_val[i] = true;
  Manifest train{"train", m.root, {}}, val{"val", m.root, {}};
  for (int i = 0; i < total; ++i) (in_val[i] ? val : train).entries.push_back(m.entries[i]);
  return {train, val};
}

std::vector<train::Utterance> LoadUtterances(const Manifest& m, const dsp::StftConfig& stft) {
  std::vector<train::Utterance> out;
  for (const auto& e : m.entries) {
    train::Utterance u;
    u.id = e.id;
    u.noisy = dsp::Magnitude(dsp::Stft(dsp::ReadWav(m.NoisyPath(e)), stft));
    u.clean = dsp::Magnitude(dsp::Stft(dsp::ReadWav(m.CleanPath(e)), stft));
    out.push_back(std::move(u));
  }
  return out;
}

void SavePppPair(const std::filesystem::path& path, const phase::PppPair& pair) {
  Archive ar;
  ar.header = {{"kind", "ppp_pair"}, {"stft", pair.enhanced.config.ToJson()}};
  PutComplex(ar, "enhanced", pair.enhanced.data);
  PutComplex(ar, "clean", pair.clean.data);
  SaveArchive(path, ar);
}

phase::PppPair LoadPppPair(const std::filesystem::path& path) {
  const Archive ar = LoadArchive(path);
  if (ar.header.value("kind", "") != "ppp_pair")
    throw FormatError(path.string() + ": not a ppp pair archive");
  phase::PppPair p;
  p.enhanced.config = p.clean.config = dsp::StftConfig::FromJson(ar.header.at("stft"));
  p.enhanced.data = GetComplex(ar, "enhanced", path);
  p.clean.data = GetComplex(ar, "clean", path);
  if (p.enhanced.data.rows() != p.clean.data.rows() ||
      p.enhanced.data.cols() != p.clean.data.cols())
    throw FormatError(path.string() + ": enhanced and clean spectra differ in shape");
  return p;
}

std::vector<PppPairRecord> BuildPppPairs(const Manifest& m, const gen::Generator& g,
                                         const std::filesystem::path& out_dir,
                                         const dsp::StftConfig& stft) {
  std::filesystem::create_directories(out_dir / m.split);
  std::vector<PppPairRecord> records;
  std::ofstream index(out_dir / ("ppp_" + m.split + ".jsonl"), std::ios::trunc);
  if (!index) throw IoError("cannot write pair index in " + out_dir.string());
  for (const auto& e : m.entries) {
    const auto noisy = dsp::Stft(dsp::ReadWav(m.NoisyPath(e)), stft);
    const auto amp = g.Enhance(dsp::Magnitude(noisy)).back();
    phase::PppPair pair;
    pair.enhanced = phase::ApplyPhase(amp.data, noisy);
    pair.clean = dsp::Stft(dsp::ReadWav(m.CleanPath(e)), stft);
    PppPairRecord rec{e.id, m.split + "/" + e.id + ".arc"};
    SavePppPair(out_dir / rec.file, pair);
    index << nlohmann::json{{"id", rec.id}, {"file", rec.file}}.dump() << '\n';
    records.push_back(std::move(rec));
  }
  return records;
}

std::vector<phase::PppPair> LoadPppPairs(const std::filesystem::path& index) {
  std::ifstream is(index);
  if (!is) throw IoError("cannot read pair index " + index.string());
  std::vector<phase::PppPair> pairs;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line);
    pairs.push_back(LoadPppPair(index.parent_path() / j.at("file").get<std::string>()));
  }
  return pairs;
}

}  // namespace dargan::data
