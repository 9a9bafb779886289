// Copyright 2026 The dargan-cpp Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "dargan/nn.hpp"

#include <gtest/gtest.h>

#include <cmath>

#include "dargan/archive.hpp"
#include "test_util.hpp"

namespace dargan::nn {
namespace {

using testing::CheckParamGradients;
using testing::RandomTensor;
using testing::WeightedSquares;

// Direct-loop convolution with zero padding.
Tensor NaiveConv(const Tensor& x, const Tensor& w, const Tensor& b,
                 const ConvSpec& s) {
  const int n = x.dim(0), c = x.dim(1), t = x.dim(2), f = x.dim(3);
  const int o = w.dim(0), kt = w.dim(2), kf = w.dim(3);
  const int tout = t + s.pad_t_front + s.pad_t_back - kt + 1;
  const int fout = (f + 2 * s.pad_f - kf) / s.stride_f + 1;
  Tensor y({n, o, tout, fout});
  for (int b0 = 0; b0 < n; ++b0)
    for (int oc = 0; oc < o; ++oc)
      for (int tt = 0; tt < tout; ++tt)
        for (int ff = 0; ff < fout; ++ff) {
          double acc = b.numel() ? b[oc] : 0.0;
          for (int ic = 0; ic < c; ++ic)
            for (int a = 0; a < kt; ++a)
              for (int k = 0; k < kf; ++k) {
                const int ti = tt + a - s.pad_t_front;
                const int fi = ff * s.stride_f + k - s.pad_f;
                if (ti < 0 || ti >= t || fi < 0 || fi >= f) continue;
                acc += w[((oc * c + ic) * kt + a) * kf + k] *
                       x[((b0 * c + ic) * t + ti) * f + fi];
              }
          y[((b0 * o + oc) * tout + tt) * fout + ff] = acc;
        }
  return y;
}

TEST(Conv2d, MatchesNaiveLoop) {
  const std::vector<ConvSpec> specs = {
      {1, 0, 0, 0}, {2, 1, 0, 1}, {1, 1, 0, 1}, {2, 1, 0, 2}, {1, 1, 1, 1}};
  for (std::size_t i = 0; i < specs.size(); ++i) {
    SCOPED_TRACE(i);
    const auto& s = specs[i];
    const int kt = 1 + s.pad_t_front + s.pad_t_back;
    const int kf = 2 * s.pad_f + 1;
    const Tensor x = RandomTensor({2, 3, 5, 11}, 1 + i);
    const Tensor w = RandomTensor({4, 3, kt, kf}, 10 + i);
    const Tensor b = RandomTensor({4}, 20 + i);
    const Var y = Conv2d(Constant(x), Constant(w), Constant(b), s);
    const Tensor ref = NaiveConv(x, w, b, s);
    ASSERT_EQ(y.shape(), ref.shape);
    for (std::size_t k = 0; k < ref.numel(); ++k)
      ASSERT_NEAR(y.value()[k], ref[k], 1e-12);
  }
}

TEST(Conv2d, OutputWidthFormula) {
  EXPECT_EQ(ConvOutWidth(161, 3, 2, 1), 81);
  EXPECT_EQ(ConvOutWidth(161, 5, 2, 2), 81);
  EXPECT_EQ(ConvOutWidth(6, 5, 2, 2), 3);
  EXPECT_EQ(ConvOutWidth(9, 3, 1, 1), 9);
}

TEST(Conv2d, RejectsChannelMismatch) {
  EXPECT_THROW(Conv2d(Constant(Tensor({1, 2, 3, 4})), Constant(Tensor({1, 3, 1, 1})),
                      Var(), ConvSpec{}),
               InvalidInput);
}

TEST(Gradients, ConvolutionAndShapeOps) {
  ParamSet ps;
  ps.Add("x", RandomTensor({2, 2, 4, 9}, 1));
  ps.Add("w1", RandomTensor({3, 2, 2, 3}, 2));
  ps.Add("b1", RandomTensor({3}, 3));
  ps.Add("w2", RandomTensor({2, 5, 2, 3}, 4));
  auto loss = [&] {
    const Var x = ps.Get("x");
    const Var h = Elu(Conv2d(x, ps.Get("w1"), ps.Get("b1"), {2, 1, 0, 1}));
    const Var up = UpsampleFreq(h, 9);
    const Var cat = ConcatChannels({up, x});
    const Var y = Conv2d(cat, ps.Get("w2"), Var(), {1, 1, 0, 1});
    const Var r = ResampleFreq(Sigmoid(y), 5);
    const Var s = SliceBatch(PadTime(r, 6), 1, 5);
    return Add(WeightedSquares(s, 7), WeightedSquares(Tanh(ToSequence(s)), 8));
  };
  const auto res = CheckParamGradients(ps, loss, 1e-4, 40);
  EXPECT_LT(res.max_rel_error, 1e-5) << res.worst;
}

TEST(Gradients, MatrixOps) {
  ParamSet ps;
  ps.Add("a", RandomTensor({4, 3}, 1));
  ps.Add("w", RandomTensor({3, 5}, 2));
  ps.Add("b", RandomTensor({5}, 3));
  ps.Add("m", RandomTensor({5, 2}, 4));
  auto loss = [&] {
    const Var y = Linear(ps.Get("a"), ps.Get("w"), ps.Get("b"));
    const Var z = MatMul(Softplus(y), ps.Get("m"));
    const Var rows = StackRows({Row(z, 3), Row(z, 0)});
    const Var cols = ConcatCols({SliceCols(y, 1, 3), z});
    return Add(Mean(Square(Sub(rows, Scale(AddScalar(rows, 0.5), 0.3)))),
               WeightedSquares(cols, 5));
  };
  const auto res = CheckParamGradients(ps, loss, 1e-4, 40);
  EXPECT_LT(res.max_rel_error, 1e-5) << res.worst;
}

TEST(Gradients, SpectralNormalizeWithFixedVectors) {
  ParamSet ps;
  ps.Add("w", RandomTensor({3, 2, 1, 2}, 1));
  const auto u = RandomTensor({3}, 2).data, v = RandomTensor({4}, 3).data;
  auto loss = [&] { return WeightedSquares(SpectralNormalize(ps.Get("w"), u, v), 4); };
  const auto res = CheckParamGradients(ps, loss, 1e-5, 12);
  EXPECT_LT(res.max_rel_error, 1e-5) << res.worst;
}

TEST(MaskedL1, IgnoresPaddedFrames) {
  Tensor est = RandomTensor({2, 1, 3, 4}, 1), target = RandomTensor({2, 1, 3, 4}, 2);
  const std::vector<double> mask = {1, 1, 1, 1, 0, 0};
  const double base = MaskedL1(Constant(est), target, mask).item();
  for (int t = 1; t < 3; ++t)
    for (int f = 0; f < 4; ++f) {
      est[((1 * 3) + t) * 4 + f] = 100.0;
      target[((1 * 3) + t) * 4 + f] = -50.0;
    }
  EXPECT_DOUBLE_EQ(MaskedL1(Constant(est), target, mask).item(), base);
  double oracle = 0.0;
  for (int r = 0; r < 4; ++r)
    for (int f = 0; f < 4; ++f) oracle += std::abs(est[r * 4 + f] - target[r * 4 + f]);
  EXPECT_NEAR(base, oracle / 16.0, 1e-12);
  EXPECT_THROW(MaskedL1(Constant(est), target, std::vector<double>(6, 0.0)), InvalidInput);
}

TEST(Adam, MatchesScalarOracle) {
  ParamSet ps;
  ps.Add("p", Tensor({2}, 0.0));
  AdamOptions o;
  o.lr = 0.1;
  Adam opt(ps, o);
  double p0 = 0.0, p1 = 0.0, m0 = 0, v0 = 0, m1 = 0, v1 = 0;
  for (int step = 1; step <= 5; ++step) {
    ps.ZeroGrad();
    // loss = (p0 - 3)^2 + 2 p1
    Var p = ps.Get("p");
    p.mutable_grad() = {2 * (p0 - 3.0), 2.0};
    opt.Step();
    const double g0 = 2 * (p0 - 3.0), g1 = 2.0;
    m0 = 0.9 * m0 + 0.1 * g0;
    v0 = 0.999 * v0 + 0.001 * g0 * g0;
    m1 = 0.9 * m1 + 0.1 * g1;
    v1 = 0.999 * v1 + 0.001 * g1 * g1;
    const double bc1 = 1 - std::pow(0.9, step), bc2 = 1 - std::pow(0.999, step);
    p0 -= 0.1 * (m0 / bc1) / (std::sqrt(v0 / bc2) + 1e-8);
    p1 -= 0.1 * (m1 / bc1) / (std::sqrt(v1 / bc2) + 1e-8);
    EXPECT_NEAR(ps.Get("p").value()[0], p0, 1e-12);
    EXPECT_NEAR(ps.Get("p").value()[1], p1, 1e-12);
  }
}

TEST(Adam, StateRoundTrip) {
  ParamSet a;
  a.Add("p", RandomTensor({3}, 1));
  Adam oa(a, AdamOptions{});
  for (int i = 0; i < 3; ++i) {
    Var p = a.Get("p");
    p.mutable_grad() = {0.1 * i, -0.2, 0.3};
    oa.Step();
  }
  ParamSet b;
  b.Add("p", a.Get("p").value());
  Adam ob(b, AdamOptions{});
  ob.LoadState(oa.State());
  EXPECT_EQ(ob.steps(), 3);
  for (ParamSet* ps : {&a, &b}) {
    Var p = ps->Get("p");
    p.mutable_grad() = {1.0, 2.0, 3.0};
  }
  oa.Step();
  ob.Step();
  EXPECT_EQ(a.Get("p").value().data, b.Get("p").value().data);
}

TEST(Archive, RoundTripIsExactAndDeterministic) {
  const auto dir = testing::TempDir("archive");
  ParamSet ps;
  ps.Add("z/last", RandomTensor({2, 3}, 1));
  ps.Add("a/first", RandomTensor({4}, 2));
  ps.buffers()["a/buf"] = RandomTensor({5}, 3);
  Archive ar;
  ar.header = {{"kind", "test"}, {"n", 3}};
  ar.PutParams(ps);
  ar.PutGroup("opt", {{"step", Tensor({1}, 7.0)}});
  SaveArchive(dir / "a.arc", ar);
  SaveArchive(dir / "b.arc", ar);
  const auto back = LoadArchive(dir / "a.arc");
  EXPECT_EQ(back.header, ar.header);
  EXPECT_EQ(back.GetGroup("opt").at("step")[0], 7.0);

  ParamSet other;
  other.Add("z/last", Tensor({2, 3}));
  other.Add("a/first", Tensor({4}));
  other.buffers()["a/buf"] = Tensor({5});
  back.GetParams(other);
  EXPECT_EQ(other.Get("z/last").value().data, ps.Get("z/last").value().data);
  EXPECT_EQ(other.buffers()["a/buf"].data, ps.buffers()["a/buf"].data);

  std::ifstream fa(dir / "a.arc", std::ios::binary), fb(dir / "b.arc", std::ios::binary);
  const std::string sa((std::istreambuf_iterator<char>(fa)), {}),
      sb((std::istreambuf_iterator<char>(fb)), {});
  EXPECT_EQ(sa, sb);
}

TEST(Archive, MismatchesAreReported) {
  const auto dir = testing::TempDir("archive_bad");
  ParamSet ps;
  ps.Add("w", Tensor({2, 2}));
  Archive ar;
  ar.PutParams(ps);
  SaveArchive(dir / "a.arc", ar);
  ParamSet wrong;
  wrong.Add("w", Tensor({3}));
  EXPECT_THROW(LoadArchive(dir / "a.arc").GetParams(wrong), FormatError);
  ParamSet missing;
  missing.Add("q", Tensor({1}));
  EXPECT_THROW(LoadArchive(dir / "a.arc").GetParams(missing), FormatError);
  std::ofstream(dir / "junk.arc") << "garbage";
  EXPECT_THROW(LoadArchive(dir / "junk.arc"), FormatError);
}

TEST(ParamSet, KaimingBoundsAndDeterminism) {
  Rng r1(5), r2(5);
  const Tensor a = KaimingUniform({8, 4, 2, 3}, 24, r1);
  const Tensor b = KaimingUniform({8, 4, 2, 3}, 24, r2);
  EXPECT_EQ(a.data, b.data);
  const double bound = std::sqrt(6.0 / 24);
  for (double x : a.data) EXPECT_LE(std::abs(x), bound);
}

}  // namespace
}  // namespace dargan::nn
