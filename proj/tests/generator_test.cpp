// Copyright 2026 The dargan-cpp Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "dargan/generator.hpp"

#include <gtest/gtest.h>

#include <cmath>

#include "test_util.hpp"

namespace dargan::gen {
namespace {

using nn::Constant;
using nn::Tensor;
using nn::Var;
using testing::RandomTensor;

GeneratorConfig TinyConfig(int stages = 2) {
  GeneratorConfig c;
  c.num_stages = stages;
  c.feature_channels = {2, 2};
  c.attention_channels = {2};
  c.srnn_hidden = 2;
  c.seed = 3;
  return c;
}

Var Mag(int t, int f, std::uint64_t seed, int batch = 1) {
  return Constant(RandomTensor({batch, 1, t, f}, seed, 0.0, 2.0));
}

void ZeroParams(Generator& g) {
  for (std::size_t i = 0; i < g.params().size(); ++i) {
    Var p = g.params().At(i);
    std::fill(p.mutable_value().data.begin(), p.mutable_value().data.end(), 0.0);
  }
}

double MaxAbsDiff(const Tensor& a, const Tensor& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

TEST(GeneratorConfig, RejectsInvalidValues) {
  auto c = TinyConfig();
  c.num_stages = 0;
  EXPECT_THROW(c.Validate(), InvalidInput);
  c = TinyConfig();
  c.feature_channels = {2, 0};
  EXPECT_THROW(c.Validate(), InvalidInput);
  c = TinyConfig();
  c.srnn_hidden = 0;
  EXPECT_THROW(c.Validate(), InvalidInput);
  const auto j = TinyConfig().ToJson();
  EXPECT_EQ(GeneratorConfig::FromJson(j).ToJson(), j);
}

TEST(Srnn, FirstStageStateHasHiddenShape) {
  Generator g(TinyConfig());
  const Var y = Mag(6, 9, 1);
  const auto s0 = g.InitialState(1, 6, 9);
  const auto s1 = g.SrnnStep(y, y, s0);
  EXPECT_EQ(s1.h.shape(), (nn::Shape{1, 2, 6, 9}));
  for (double v : s1.h.value().data) EXPECT_TRUE(std::isfinite(v));
}

TEST(Srnn, Deterministic) {
  Generator g(TinyConfig());
  const Var y = Mag(6, 9, 1), e = Mag(6, 9, 2);
  const auto s0 = g.InitialState(1, 6, 9);
  EXPECT_EQ(g.SrnnStep(y, e, s0).h.value().data, g.SrnnStep(y, e, s0).h.value().data);
}

// With every weight zero the gated update reduces to one cell:
// h' = (1 - sigmoid(bz)) h + sigmoid(bz) tanh(bn).
TEST(Srnn, ZeroWeightsMatchSingleCellOracle) {
  Generator g(TinyConfig());
  ZeroParams(g);
  const Var zero = Constant(Tensor({1, 1, 3, 5}));
  const Var h = Constant(RandomTensor({1, 2, 3, 5}, 9));
  auto s = g.SrnnStep(zero, zero, StageState{h});
  for (std::size_t i = 0; i < h.value().numel(); ++i)
    EXPECT_DOUBLE_EQ(s.h.value()[i], 0.5 * h.value()[i]);

  const double bz = 0.7, bn = -0.4;
  Var b_update = g.params().Get("gen/srnn/update/b");
  Var b_cand = g.params().Get("gen/srnn/cand/b");
  b_update.mutable_value().data = {bz, bz};
  b_cand.mutable_value().data = {bn, bn};
  s = g.SrnnStep(zero, zero, StageState{h});
  const double z = 1.0 / (1.0 + std::exp(-bz));
  for (std::size_t i = 0; i < h.value().numel(); ++i)
    EXPECT_NEAR(s.h.value()[i], (1 - z) * h.value()[i] + z * std::tanh(bn), 1e-15);
}

TEST(Srnn, ShapeMismatchIsRejected) {
  Generator g(TinyConfig());
  const auto s0 = g.InitialState(1, 6, 9);
  EXPECT_THROW(g.SrnnStep(Mag(6, 9, 1), Mag(5, 9, 1), s0), InvalidInput);
  EXPECT_THROW(g.SrnnStep(Mag(6, 9, 1), Mag(6, 9, 1), g.InitialState(1, 5, 9)),
               InvalidInput);
}

TEST(Attention, ZeroParamsGiveHalf) {
  Generator g(TinyConfig());
  ZeroParams(g);
  const auto a = g.Attention(Mag(5, 9, 1), Mag(5, 9, 2));
  ASSERT_EQ(static_cast<int>(a.gates.size()), g.num_gated_layers());
  for (const auto& gate : a.gates)
    for (double v : gate.value().data) EXPECT_EQ(v, 0.5);
}

TEST(Attention, GatesInOpenUnitIntervalWithBlockShapes) {
  Generator g(GeneratorConfig{});
  const Var y = Mag(12, 161, 4);
  const auto a = g.Attention(y, y);
  ASSERT_EQ(a.gates.size(), 10u);
  const std::vector<int> widths = {81, 41, 21, 11, 6, 11, 21, 41, 81, 161};
  const std::vector<int> chans = {16, 32, 64, 64, 64, 64, 64, 32, 16, 16};
  for (std::size_t l = 0; l < a.gates.size(); ++l) {
    EXPECT_EQ(a.gates[l].shape(), (nn::Shape{1, chans[l], 12, widths[l]}));
    for (double v : a.gates[l].value().data) {
      ASSERT_GT(v, 0.0);
      ASSERT_LT(v, 1.0);
    }
  }
}

TEST(Attention, SensitiveToInputPerturbation) {
  Generator g(TinyConfig());
  Tensor y = RandomTensor({1, 1, 5, 9}, 5, 0.0, 2.0);
  const auto a = g.Attention(Constant(y), Constant(y));
  y[17] += 0.5;
  const auto b = g.Attention(Constant(y), Constant(y));
  double diff = 0.0;
  for (std::size_t l = 0; l < a.gates.size(); ++l)
    diff = std::max(diff, MaxAbsDiff(a.gates[l].value(), b.gates[l].value()));
  EXPECT_GT(diff, 0.0);
}

TEST(NoiseRemoval, ShapeAndNonnegativityAcrossLengths) {
  Generator g(GeneratorConfig{});
  for (int t : {10, 50, 123}) {
    SCOPED_TRACE(t);
    const Var y = Mag(t, 161, t);
    const auto s = g.SrnnStep(y, y, g.InitialState(1, t, 161));
    const Var out = g.NoiseRemoval(y, y, s, g.Attention(y, y));
    EXPECT_EQ(out.shape(), y.shape());
    for (double v : out.value().data) ASSERT_GE(v, 0.0);
  }
}

TEST(NoiseRemoval, GatesChangeTheOutput) {
  Generator g(TinyConfig());
  const Var y = Mag(6, 9, 7);
  const auto s = g.SrnnStep(y, y, g.InitialState(1, 6, 9));
  const auto gates = g.Attention(y, y);
  AttentionVector ones;
  for (const auto& gate : gates.gates)
    ones.gates.push_back(Constant(Tensor(gate.shape(), 1.0)));
  const Var a = g.NoiseRemoval(y, y, s, gates);
  const Var b = g.NoiseRemoval(y, y, s, ones);
  EXPECT_GT(MaxAbsDiff(a.value(), b.value()), 0.0);
}

TEST(NoiseRemoval, WrongGateCountIsRejected) {
  Generator g(TinyConfig());
  const Var y = Mag(6, 9, 7);
  const auto s = g.SrnnStep(y, y, g.InitialState(1, 6, 9));
  auto gates = g.Attention(y, y);
  gates.gates.pop_back();
  EXPECT_THROW(g.NoiseRemoval(y, y, s, gates), InvalidInput);
}

TEST(Generator, DefaultProducesThreeEstimates) {
  Generator g(GeneratorConfig{});
  const auto outs = g.Forward(Mag(9, 161, 2));
  ASSERT_EQ(outs.size(), 3u);
  for (const auto& o : outs) EXPECT_EQ(o.shape(), (nn::Shape{1, 1, 9, 161}));
}

TEST(Generator, SingleStageEqualsOneManualPass) {
  Generator g(TinyConfig(1));
  const Var y = Mag(6, 9, 3);
  const auto outs = g.Forward(y);
  ASSERT_EQ(outs.size(), 1u);
  const auto s = g.SrnnStep(y, y, g.InitialState(1, 6, 9));
  const Var manual = g.NoiseRemoval(y, y, s, g.Attention(y, y));
  EXPECT_EQ(outs[0].value().data, manual.value().data);
}

TEST(Generator, BitIdenticalAcrossInstances) {
  Generator a(TinyConfig(3)), b(TinyConfig(3));
  const Var y = Mag(8, 9, 4);
  const auto oa = a.Forward(y), ob = b.Forward(y);
  for (std::size_t q = 0; q < oa.size(); ++q)
    EXPECT_EQ(oa[q].value().data, ob[q].value().data);
}

TEST(Generator, RecursionMemoryMatters) {
  Generator g(TinyConfig(2));
  const Var y = Mag(6, 9, 5);
  const auto s1 = g.Stage(y, y, g.InitialState(1, 6, 9));
  const auto with_memory = g.Stage(y, s1.estimate, s1.state);
  const auto without = g.Stage(y, s1.estimate, g.InitialState(1, 6, 9));
  EXPECT_GT(MaxAbsDiff(with_memory.estimate.value(), without.estimate.value()), 0.0);
}

TEST(Generator, GradientsMatchFiniteDifferences) {
  Generator g(TinyConfig(2));
  const Var y = Mag(4, 9, 6);
  auto loss = [&] { return testing::WeightedSquares(g.Forward(y).back(), 11); };
  const auto res = testing::CheckParamGradients(g.params(), loss, 1e-4, 8);
  EXPECT_GT(res.checked, 50);
  EXPECT_LT(res.max_rel_error, 1e-3) << res.worst;
}

TEST(Generator, EnhanceMatchesForward) {
  Generator g(TinyConfig());
  dsp::MagnitudeSpectrogram m;
  m.data = dsp::RealGrid::Random(7, 9).abs();
  const auto mags = g.Enhance(m);
  const auto outs = g.Forward(Constant(ToTensor(m)));
  ASSERT_EQ(mags.size(), outs.size());
  const auto back = FromTensor(outs.back().value());
  EXPECT_TRUE((mags.back().data == back.data).all());
}

TEST(Generator, GateGeometryFollowsStride2Widths) {
  Generator g(GeneratorConfig{});
  std::vector<int> widths;
  for (int l = 0; l < 5; ++l) widths.push_back(g.GateGeometry(l, 161).second);
  EXPECT_EQ(widths, (std::vector<int>{81, 41, 21, 11, 6}));
}

}  // namespace
}  // namespace dargan::gen
