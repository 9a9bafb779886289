// Copyright 2026 The dargan-cpp Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <cmath>
#include <complex>
#include <fstream>
#include <sstream>

#include "dargan/metrics.hpp"
#include "metrics_oracles.hpp"
#include "test_util.hpp"

namespace dargan::metrics {
namespace {

using dsp::Waveform;

const std::filesystem::path kFixtures = std::filesystem::path(DARGAN_TEST_DATA) / "metrics";

Waveform Load(int pair, const char* which) {
  return dsp::ReadWav(kFixtures / ("pair" + std::to_string(pair) + "_" + which + ".wav"));
}

Waveform Noise(std::size_t n, std::uint64_t seed, double scale) {
  Waveform w;
  w.samples = testing::RandomVector(n, seed, scale);
  return w;
}

Waveform Fir(const Waveform& x, double b1) {
  Waveform y = x;
  for (std::size_t i = 1; i < x.size(); ++i) y.samples[i] = x.samples[i] + b1 * x.samples[i - 1];
  return y;
}

using namespace testing::oracle;

// --- fixture oracles ---

TEST(Fixtures, SegSnrMatchesOracle) {
  for (int k = 0; k < 5; ++k) {
    const auto c = Load(k, "clean"), e = Load(k, "est");
    EXPECT_NEAR(SegSnr(c, e), OracleSegSnr(c, e), 1e-6) << k;
  }
}

TEST(Fixtures, LlrMatchesOracle) {
  for (int k = 0; k < 5; ++k) {
    const auto c = Load(k, "clean"), e = Load(k, "est");
    EXPECT_NEAR(Llr(c, e), OracleLlr(c, e), 1e-4) << k;
  }
}

TEST(Fixtures, WssMatchesOracle) {
  for (int k = 0; k < 5; ++k) {
    const auto c = Load(k, "clean"), e = Load(k, "est");
    EXPECT_NEAR(Wss(c, e), OracleWss(c, e), 1e-3) << k;
  }
}

TEST(Fixtures, CompositeCoefficientsMatchReferenceToolkit) {
  std::ifstream is(kFixtures / "composite_reference.json");
  const auto refs = nlohmann::json::parse(is);
  ASSERT_EQ(refs.size(), 5u);
  int unclamped = 0;
  for (const auto& r : refs) {
    const auto s = Composite(r["pesq"], r["llr"], r["wss"], r["segsnr"]);
    EXPECT_NEAR(s.csig, r["csig"].get<double>(), 1e-3);
    EXPECT_NEAR(s.cbak, r["cbak"].get<double>(), 1e-3);
    EXPECT_NEAR(s.covl, r["covl"].get<double>(), 1e-3);
    for (double v : {s.csig, s.cbak, s.covl}) unclamped += v > 1.0 && v < 5.0;
  }
  EXPECT_GE(unclamped, 9);
}

// --- identity and sanity ---

TEST(SegSnr, IdentityHitsUpperClamp) {
  const auto c = Load(0, "clean");
  EXPECT_EQ(SegSnr(c, c), 35.0);
}

TEST(SegSnr, ZeroDbPerFrame) {
  const auto c = Load(1, "clean");
  Waveform doubled = c, silent = c;
  for (auto& v : doubled.samples) v *= 2.0;
  for (auto& v : silent.samples) v = 0.0;
  EXPECT_NEAR(SegSnr(c, doubled), 0.0, 1e-12);
  EXPECT_NEAR(SegSnr(c, silent), 0.0, 1e-12);
}

TEST(SegSnr, ReferenceOrderMatters) {
  const auto c = Load(2, "clean");
  Waveform e = c;
  for (std::size_t i = 0; i < e.size(); ++i) e.samples[i] = 0.5 * c.samples[i];
  EXPECT_NE(SegSnr(c, e), SegSnr(e, c));
}

TEST(SegSnr, Errors) {
  Waveform a = Noise(1000, 1, 0.1), b = Noise(999, 2, 0.1);
  EXPECT_THROW(SegSnr(a, b), InvalidInput);
  Waveform s = Noise(100, 1, 0.1);
  EXPECT_THROW(SegSnr(s, s), InvalidInput);
  Waveform z;
  z.samples.assign(2000, 0.0);
  EXPECT_THROW(SegSnr(z, a.samples.size() == 2000 ? a : z), InvalidInput);
}

TEST(Llr, IdentityIsZero) {
  const auto c = Load(3, "clean");
  EXPECT_EQ(Llr(c, c), 0.0);
}

TEST(Llr, TiltedCopyIsPositive) {
  const auto c = Load(3, "clean");
  EXPECT_GT(Llr(c, Fir(c, -0.9)), 0.0);
}

TEST(Llr, DegenerateFramesSkipped) {
  auto c = Load(0, "clean");
  auto e = Load(0, "est");
  for (int i = 0; i < 4000; ++i) c.samples[i] = e.samples[i] = 0.0;
  EXPECT_TRUE(std::isfinite(Llr(c, e)));
  Waveform z;
  z.samples.assign(4000, 0.0);
  EXPECT_THROW(Llr(z, z), InvalidInput);
  EXPECT_THROW(Wss(z, z), InvalidInput);
}

TEST(Llr, LevinsonMatchesDenseSolve) {
  const auto x = testing::RandomVector(512, 9);
  const auto [a, r] = LpcFromFrame(x, 10);
  const auto ref = Predictor(Autocorr(x, 10), 10);
  for (int k = 0; k <= 10; ++k) EXPECT_NEAR(a[k], ref[k], 1e-10);
}

TEST(Wss, IdentityIsZero) {
  const auto c = Load(4, "clean");
  EXPECT_EQ(Wss(c, c), 0.0);
}

TEST(Wss, NoiseScoresWorseThanMildFilter) {
  const auto c = Load(1, "clean");
  const double noise = Wss(c, Noise(c.size(), 5, 0.3));
  const double mild = Wss(c, Fir(c, 0.1));
  EXPECT_GT(noise, mild);
  EXPECT_GT(noise, 10.0);
}

TEST(TrimmedMean, KeepsSmallest) {
  std::vector<double> v(20);
  for (int i = 0; i < 20; ++i) v[i] = 20 - i;
  EXPECT_DOUBLE_EQ(TrimmedMean(v, 0.95), 10.0);  // mean of 1..19
  EXPECT_DOUBLE_EQ(TrimmedMean({7.0}, 0.95), 7.0);
}

// --- composite ---

TEST(Composite, ClampsAbove) {
  const auto s = Composite(4.5, 0.0, 0.0, 35.0);
  EXPECT_EQ(s.csig, 5.0);
  EXPECT_EQ(s.cbak, 5.0);
  EXPECT_EQ(s.covl, 5.0);
  const auto low = Composite(-0.5, 3.0, 100.0, -10.0);
  EXPECT_EQ(low.csig, 1.0);
  EXPECT_EQ(low.cbak, 1.0);
  EXPECT_EQ(low.covl, 1.0);
}

TEST(Composite, MonotoneInPesq) {
  for (double llr : {0.2, 0.8})
    for (double wss : {5.0, 40.0}) {
      CompositeScores prev = Composite(-0.5, llr, wss, 5.0);
      for (double p = -0.4; p <= 4.5; p += 0.1) {
        const auto s = Composite(p, llr, wss, 5.0);
        EXPECT_GE(s.csig, prev.csig);
        EXPECT_GE(s.cbak, prev.cbak);
        EXPECT_GE(s.covl, prev.covl);
        prev = s;
      }
    }
}

TEST(Composite, Arithmetic) {
  const auto s = Composite(2.0, 0.5, 20.0, 10.0);
  EXPECT_NEAR(s.csig, 3.093 - 0.5145 + 1.206 - 0.18, 1e-12);
  EXPECT_NEAR(s.cbak, 1.634 + 0.956 - 0.14 + 0.63, 1e-12);
  EXPECT_NEAR(s.covl, 1.594 + 1.61 - 0.256 - 0.14, 1e-12);
}

// --- pesq adapter ---

TEST(Pesq, ParsesLastNumber) {
  EXPECT_DOUBLE_EQ(RunPesq("echo 'score for {clean} {est}: 3.25'", "/a b/c.wav", "e.wav"), 3.25);
}

TEST(Pesq, Failures) {
  EXPECT_THROW(RunPesq("false", "a", "b"), Error);
  EXPECT_THROW(RunPesq("echo none", "a", "b"), Error);
  EXPECT_THROW(RunPesq("echo 7.0", "a", "b"), Error);
}

// --- corpus ---

std::vector<FilePair> FixturePairs(bool identity) {
  std::vector<FilePair> p;
  for (int k = 0; k < 5; ++k) {
    const auto c = kFixtures / ("pair" + std::to_string(k) + "_clean.wav");
    p.push_back({c, identity ? c : kFixtures / ("pair" + std::to_string(k) + "_est.wav")});
  }
  return p;
}

TEST(Corpus, EmptyIsError) { EXPECT_THROW(EvaluateCorpus({}, {}), InvalidInput); }

TEST(Corpus, IdentityCorpus) {
  const auto rep = EvaluateCorpus(FixturePairs(true), {});
  ASSERT_EQ(rep.rows.size(), 5u);
  for (const auto& r : rep.rows) {
    EXPECT_EQ(r.llr, 0.0);
    EXPECT_EQ(r.wss, 0.0);
    EXPECT_EQ(r.segsnr, 35.0);
    EXPECT_FALSE(r.pesq.has_value());
  }
}

TEST(Corpus, AdapterAddsCompositesOnly) {
  MetricsConfig with;
  with.pesq_cmd = "echo 2.5";
  const auto a = EvaluateCorpus(FixturePairs(false), {});
  const auto b = EvaluateCorpus(FixturePairs(false), with);
  for (std::size_t i = 0; i < a.rows.size(); ++i) {
    EXPECT_EQ(a.rows[i].segsnr, b.rows[i].segsnr);
    EXPECT_EQ(a.rows[i].llr, b.rows[i].llr);
    EXPECT_EQ(a.rows[i].wss, b.rows[i].wss);
    EXPECT_FALSE(a.rows[i].csig.has_value());
    ASSERT_TRUE(b.rows[i].csig.has_value());
    const auto s = Composite(2.5, b.rows[i].llr, b.rows[i].wss, b.rows[i].segsnr);
    EXPECT_EQ(*b.rows[i].covl, s.covl);
  }
}

TEST(Corpus, PerFileErrorsDoNotStopTheRun) {
  auto pairs = FixturePairs(false);
  pairs.insert(pairs.begin() + 2, FilePair{kFixtures / "missing.wav", kFixtures / "missing.wav"});
  std::vector<std::string> warnings;
  const auto rep = EvaluateCorpus(pairs, {}, [&](const std::string& w) { warnings.push_back(w); });
  EXPECT_EQ(rep.rows.size(), 6u);
  EXPECT_EQ(rep.failures, 1);
  EXPECT_FALSE(rep.rows[2].error.empty());
  EXPECT_FALSE(warnings.empty());
  EXPECT_TRUE(rep.rows[3].error.empty());
}

TEST(Corpus, TrimsToShorter) {
  const auto dir = testing::TempDir("metrics_trim");
  auto c = Load(0, "clean");
  auto e = c;
  e.samples.resize(c.size() - 1000);
  dsp::WriteWav(dir / "c.wav", c);
  dsp::WriteWav(dir / "e.wav", e);
  int warned = 0;
  const auto rep = EvaluateCorpus({{dir / "c.wav", dir / "e.wav"}}, {},
                                  [&](const std::string&) { ++warned; });
  EXPECT_TRUE(rep.rows[0].error.empty());
  EXPECT_EQ(rep.rows[0].segsnr, 35.0);
  EXPECT_EQ(warned, 1);
}

TEST(Corpus, CsvReloadReaggregates) {
  MetricsConfig with;
  with.pesq_cmd = "echo 3.1";
  auto pairs = FixturePairs(false);
  pairs.push_back({kFixtures / "missing.wav", kFixtures / "missing.wav"});
  const auto rep = EvaluateCorpus(pairs, with);
  auto back = MetricsReport::FromCsv(rep.ToCsv());
  const auto printed = back.mean;
  back.Aggregate();
  EXPECT_EQ(back.failures, 1);
  EXPECT_NEAR(back.mean.segsnr, printed.segsnr, 1e-9);
  EXPECT_NEAR(back.mean.llr, printed.llr, 1e-9);
  EXPECT_NEAR(back.mean.wss, printed.wss, 1e-9);
  EXPECT_NEAR(*back.mean.csig, *printed.csig, 1e-9);
  EXPECT_NEAR(*back.mean.covl, *printed.covl, 1e-9);
  EXPECT_NE(rep.Summary().find("csig"), std::string::npos);
}

TEST(Config, Validation) {
  MetricsConfig c;
  EXPECT_NO_THROW(c.Validate());
  c.hop = 0;
  EXPECT_THROW(c.Validate(), InvalidInput);
  c = {};
  c.keep_fraction = 1.5;
  EXPECT_THROW(c.Validate(), InvalidInput);
  c = {};
  EXPECT_EQ(MetricsConfig::FromJson(c.ToJson()).ToJson(), c.ToJson());
}

}  // namespace
}  // namespace dargan::metrics
