// Copyright 2026 The dargan-cpp Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <set>

#include "dargan/data.hpp"
#include "test_util.hpp"

namespace dargan::data {
namespace {

using dsp::Waveform;

Waveform RandomWave(std::size_t n, std::uint64_t seed, double scale) {
  Waveform w;
  w.samples = testing::RandomVector(n, seed, scale);
  return w;
}

std::string ReadAll(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), {}};
}

// Re-measure written directly from the definition.
double OracleSnr(const Waveform& s, const Waveform& y) {
  long double ps = 0.0L, pn = 0.0L;
  for (std::size_t i = 0; i < s.size(); ++i) {
    ps += static_cast<long double>(s.samples[i]) * s.samples[i];
    const long double d = static_cast<long double>(y.samples[i]) - s.samples[i];
    pn += d * d;
  }
  return static_cast<double>(10.0L * std::log10(ps / pn));
}

CorpusConfig SmallCorpus() {
  CorpusConfig c;
  c.n_utts = 4;
  c.duration_s = 0.5;
  c.seed = 21;
  return c;
}

TEST(Mix, EqualPowerAtZeroDbHasUnitGain) {
  Waveform s = RandomWave(4000, 1, 0.3);
  Waveform n = s;
  std::reverse(n.samples.begin(), n.samples.end());
  Rng rng(1);
  const auto r = MixAtSnr(s, n, 0.0, rng);
  EXPECT_EQ(r.offset, 0u);
  EXPECT_NEAR(r.gain, 1.0, 1e-12);
}

TEST(Mix, MeasuredSnrExactAtAllLevels) {
  std::vector<double> levels = TrainSnrs();
  levels.insert(levels.end(), TestSnrs().begin(), TestSnrs().end());
  ASSERT_EQ(levels.size(), 8u);
  for (std::uint64_t seed = 1; seed <= 5; ++seed)
    for (double snr : levels) {
      const auto s = RandomWave(3000, seed, 0.2);
      const auto n = RandomWave(5000, seed + 99, 1.0);
      Rng rng(seed);
      const auto r = MixAtSnr(s, n, snr, rng);
      EXPECT_EQ(r.clipped, 0);
      EXPECT_NEAR(OracleSnr(s, r.mixed), snr, 1e-9);
      EXPECT_NEAR(MeasureSnr(s, r.mixed), snr, 1e-9);
    }
}

TEST(Mix, Errors) {
  Rng rng(1);
  const auto s = RandomWave(100, 1, 0.1);
  Waveform zero;
  zero.samples.assign(200, 0.0);
  EXPECT_THROW(MixAtSnr(s, RandomWave(50, 2, 1.0), 5.0, rng), InvalidInput);
  EXPECT_THROW(MixAtSnr(zero, RandomWave(300, 2, 1.0), 5.0, rng), InvalidInput);
  EXPECT_THROW(MixAtSnr(s, zero, 5.0, rng), InvalidInput);
  EXPECT_THROW(MixAtSnr(s, RandomWave(300, 2, 1.0), NAN, rng), InvalidInput);
}

TEST(Mix, ClippingIsCountedAndReported) {
  const auto s = RandomWave(1000, 3, 0.9);
  Rng rng(1);
  int warnings = 0;
  const auto r = MixAtSnr(s, RandomWave(1000, 4, 1.0), -10.0, rng,
                          [&](const std::string&) { ++warnings; });
  EXPECT_GT(r.clipped, 0);
  EXPECT_EQ(warnings, 1);
  for (double v : r.mixed.samples) EXPECT_LE(std::abs(v), 1.0);
}

TEST(Mix, SnrLevels) {
  EXPECT_EQ(TrainSnrs(), (std::vector<double>{15, 10, 5, 0}));
  EXPECT_EQ(TestSnrs(), (std::vector<double>{17.5, 12.5, 7.5, 2.5}));
}

TEST(Synth, SpeechIsDeterministicAndBounded) {
  const auto a = SynthSpeech(0.7, 5), b = SynthSpeech(0.7, 5), c = SynthSpeech(0.7, 6);
  EXPECT_EQ(a.samples, b.samples);
  EXPECT_NE(a.samples, c.samples);
  EXPECT_EQ(a.size(), 11200u);
  double peak = 0.0;
  for (double v : a.samples) peak = std::max(peak, std::abs(v));
  EXPECT_NEAR(peak, 0.5, 1e-12);
  // pauses between syllables
  int silent = 0;
  for (double v : a.samples) silent += v == 0.0;
  EXPECT_GT(silent, 400);
}

TEST(Synth, NoiseKinds) {
  for (auto k : {NoiseKind::kWhite, NoiseKind::kPink, NoiseKind::kBabble}) {
    const auto n = SynthNoise(k, 8000, 3);
    EXPECT_NEAR(Power(n), 1.0, 1e-12) << NoiseName(k);
    EXPECT_EQ(ParseNoise(NoiseName(k)), k);
  }
  EXPECT_THROW(ParseNoise("brown"), InvalidInput);
  // pink: adjacent samples strongly correlated, white: not
  auto lag1 = [](const Waveform& w) {
    double acc = 0.0;
    for (std::size_t i = 1; i < w.size(); ++i) acc += w.samples[i] * w.samples[i - 1];
    return acc / (w.size() - 1);
  };
  EXPECT_GT(lag1(SynthNoise(NoiseKind::kPink, 16000, 1)), 0.5);
  EXPECT_LT(std::abs(lag1(SynthNoise(NoiseKind::kWhite, 16000, 1))), 0.05);
}

TEST(Synth, QuantizeSurvivesWavRoundTrip) {
  const auto dir = testing::TempDir("quant");
  const auto q = QuantizePcm16(SynthSpeech(0.2, 1));
  dsp::WriteWav(dir / "q.wav", q);
  EXPECT_EQ(dsp::ReadWav(dir / "q.wav").samples, q.samples);
}

TEST(Corpus, DeterministicAcrossRuns) {
  const auto a = testing::TempDir("corpus_a"), b = testing::TempDir("corpus_b");
  const auto ma = SynthCorpus(SmallCorpus(), "train", a);
  const auto mb = SynthCorpus(SmallCorpus(), "train", b);
  ma.Write(a / "manifest_train.jsonl");
  mb.Write(b / "manifest_train.jsonl");
  EXPECT_EQ(ReadAll(a / "manifest_train.jsonl"), ReadAll(b / "manifest_train.jsonl"));
  for (const auto& e : ma.entries) {
    EXPECT_EQ(ReadAll(ma.NoisyPath(e)), ReadAll(b / e.noisy));
    EXPECT_EQ(ReadAll(ma.CleanPath(e)), ReadAll(b / e.clean));
  }
}

TEST(Corpus, ProfilesUseTheirSnrLevels) {
  const auto dir = testing::TempDir("corpus_profiles");
  auto cfg = SmallCorpus();
  cfg.n_utts = 8;
  const auto train = SynthCorpus(cfg, "train", dir / "train");
  const auto test = SynthCorpus(cfg, "test", dir / "test");
  std::set<double> tr, te;
  for (const auto& e : train.entries) tr.insert(e.snr_db);
  for (const auto& e : test.entries) te.insert(e.snr_db);
  EXPECT_EQ(tr, (std::set<double>{15, 10, 5, 0}));
  EXPECT_EQ(te, (std::set<double>{17.5, 12.5, 7.5, 2.5}));
  EXPECT_THROW(SynthCorpus(cfg, "dev", dir / "dev"), InvalidInput);
}

TEST(Corpus, EveryPairPassesTheRemeasureCheck) {
  const auto dir = testing::TempDir("corpus_remeasure");
  auto cfg = SmallCorpus();
  cfg.n_utts = 6;
  const auto m = SynthCorpus(cfg, "train", dir);
  for (const auto& e : m.entries) {
    EXPECT_NEAR(e.measured_snr_db, e.snr_db, 1e-9) << e.id;
    // regenerate the in-memory mixture from the recorded seed
    const auto clean = dsp::ReadWav(m.CleanPath(e));
    EXPECT_EQ(clean.samples,
              QuantizePcm16(SynthSpeech(cfg.duration_s, DeriveSeed(e.seed, 0))).samples);
    const auto noise = SynthNoise(ParseNoise(e.noise), clean.size() + 8000, DeriveSeed(e.seed, 1));
    Rng rng(DeriveSeed(e.seed, 2));
    const auto mix = MixAtSnr(clean, noise, e.snr_db, rng);
    EXPECT_NEAR(OracleSnr(clean, mix.mixed), e.snr_db, 1e-9);
    // the written mixture differs only by PCM rounding
    EXPECT_NEAR(MeasureSnr(clean, dsp::ReadWav(m.NoisyPath(e))), e.snr_db, 0.05);
  }
}

TEST(Corpus, ManifestReferentialIntegrity) {
  const auto dir = testing::TempDir("corpus_refs");
  const auto m = SynthCorpus(SmallCorpus(), "test", dir);
  m.Write(dir / "manifest_test.jsonl");
  const auto back = Manifest::Read(dir / "manifest_test.jsonl", "test");
  ASSERT_EQ(back.entries.size(), m.entries.size());
  for (const auto& e : back.entries) {
    EXPECT_EQ(dsp::ReadWav(back.NoisyPath(e)).size(), dsp::ReadWav(back.CleanPath(e)).size());
    EXPECT_DOUBLE_EQ(e.duration, 0.5);
  }
  EXPECT_EQ(back.entries[1].ToJson(), m.entries[1].ToJson());
}

TEST(Corpus, Errors) {
  auto cfg = SmallCorpus();
  cfg.n_utts = 1;
  EXPECT_THROW(cfg.Validate(), InvalidInput);
  cfg = SmallCorpus();
  cfg.noises = {"pink", "hum"};
  EXPECT_THROW(cfg.Validate(), InvalidInput);
  const auto dir = testing::TempDir("corpus_blocked");
  std::ofstream(dir / "blocker") << "x";
  EXPECT_THROW(SynthCorpus(SmallCorpus(), "train", dir / "blocker" / "sub"), IoError);
}

Manifest Numbered(int n) {
  Manifest m;
  m.split = "train";
  for (int i = 0; i < n; ++i) {
    ManifestEntry e;
    e.id = "u" + std::to_string(i);
    e.noisy = "noisy/" + e.id + ".wav";
    e.clean = "clean/" + e.id + ".wav";
    m.entries.push_back(e);
  }
  return m;
}

TEST(Split, DisjointAndSized) {
  const auto [train, val] = SplitManifest(Numbered(10), 2, 7);
  EXPECT_EQ(train.entries.size(), 8u);
  EXPECT_EQ(val.entries.size(), 2u);
  EXPECT_EQ(val.split, "val");
  std::set<std::string> seen;
  for (const auto* m : {&train, &val})
    for (const auto& e : m->entries) {
      EXPECT_TRUE(seen.insert(e.noisy).second) << e.noisy;
      EXPECT_TRUE(seen.insert(e.clean).second) << e.clean;
    }
  EXPECT_EQ(seen.size(), 20u);
}

TEST(Split, SeedDeterminism) {
  const auto a = SplitManifest(Numbered(30), 5, 3).second;
  const auto b = SplitManifest(Numbered(30), 5, 3).second;
  const auto c = SplitManifest(Numbered(30), 5, 4).second;
  std::vector<std::string> ia, ib, ic;
  for (const auto& e : a.entries) ia.push_back(e.id);
  for (const auto& e : b.entries) ib.push_back(e.id);
  for (const auto& e : c.entries) ic.push_back(e.id);
  EXPECT_EQ(ia, ib);
  EXPECT_NE(ia, ic);
}

TEST(Split, Errors) {
  EXPECT_THROW(SplitManifest(Numbered(4), 4, 1), InvalidInput);
  EXPECT_THROW(SplitManifest(Numbered(4), -1, 1), InvalidInput);
}

TEST(Split, FullScaleCounts) {
  const auto dir = testing::TempDir("full_scale");
  const auto [train, val] = SplitManifest(Numbered(11000), 572, 1);
  EXPECT_EQ(train.entries.size(), 11000u - 572u);
  EXPECT_EQ(val.entries.size(), 572u);
  auto test = Numbered(824);
  test.Write(dir / "manifest_test.jsonl");
  EXPECT_EQ(Manifest::Read(dir / "manifest_test.jsonl", "test").entries.size(), 824u);
}

gen::GeneratorConfig TinyGen() {
  gen::GeneratorConfig c;
  c.num_stages = 2;
  c.feature_channels = {2, 2};
  c.attention_channels = {2};
  c.srnn_hidden = 2;
  c.seed = 3;
  return c;
}

TEST(PppPairs, BuildReloadAndRecompute) {
  const auto dir = testing::TempDir("ppp_pairs");
  auto cfg = SmallCorpus();
  cfg.duration_s = 0.3;
  cfg.n_utts = 3;
  const auto m = SynthCorpus(cfg, "train", dir / "corpus");
  const gen::Generator g(TinyGen());
  const auto recs = BuildPppPairs(m, g, dir / "pairs");
  ASSERT_EQ(recs.size(), m.entries.size());
  const auto pairs = LoadPppPairs(dir / "pairs" / "ppp_train.jsonl");
  ASSERT_EQ(pairs.size(), m.entries.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto& e = m.entries[i];
    const auto noisy = dsp::Stft(dsp::ReadWav(m.NoisyPath(e)), {});
    const auto amp = g.Enhance(dsp::Magnitude(noisy)).back();
    EXPECT_LT((dsp::Magnitude(pairs[i].enhanced).data - amp.data).abs().maxCoeff(), 1e-9);
    const auto clean = dsp::Stft(dsp::ReadWav(m.CleanPath(e)), {});
    EXPECT_TRUE((pairs[i].clean.data == clean.data).all());
    // stored bits reload exactly
    SavePppPair(dir / "again.arc", pairs[i]);
    const auto again = LoadPppPair(dir / "again.arc");
    EXPECT_TRUE((again.enhanced.data == pairs[i].enhanced.data).all());
  }
  Archive junk;
  SaveArchive(dir / "junk.arc", junk);
  EXPECT_THROW(LoadPppPair(dir / "junk.arc"), FormatError);
}

TEST(Utterances, LoadMagnitudes) {
  const auto dir = testing::TempDir("utts");
  const auto m = SynthCorpus(SmallCorpus(), "train", dir);
  const auto utts = LoadUtterances(m, {});
  ASSERT_EQ(utts.size(), 4u);
  EXPECT_EQ(utts[0].noisy.bins(), 161);
  EXPECT_EQ(utts[0].noisy.frames(), dsp::FrameCount(8000, {}));
  EXPECT_EQ(utts[0].clean.frames(), utts[0].noisy.frames());
}

}  // namespace
}  // namespace dargan::data
