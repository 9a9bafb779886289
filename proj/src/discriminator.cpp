// Copyright 2026 The dargan-cpp Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "dargan/discriminator.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace dargan::disc {
namespace {

using nn::Tensor;
using nn::Var;
using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Eigen::VectorXd Unit(const Eigen::VectorXd& x) {
  return x / std::max(x.norm(), kModulusFloor);
}

std::string ConvName(int k) { return "disc/conv" + std::to_string(k); }

Eigen::MatrixXd WeightMatrix(const Tensor& w) {
  const int rows = w.shape[0];
  const int cols = static_cast<int>(w.numel() / rows);
  return Eigen::Map<const RowMat>(w.data.data(), rows, cols);
}

}  // namespace

void DiscriminatorConfig::Validate() const {
  if (conv_channels.size() != 6)
    throw InvalidInput("discriminator: exactly 6 conv blocks required, got " +
                       std::to_string(conv_channels.size()));
  for (int c : conv_channels)
    if (c < 1) throw InvalidInput("discriminator: conv channels must be >= 1");
  if (kernel_t < 1 || kernel_f < 1 || stride_f < 1)
    throw InvalidInput("discriminator: kernel and stride must be >= 1");
  if (kernel_f % 2 == 0)
    throw InvalidInput("discriminator: frequency kernel must be odd");
  if (blstm_units < 1) throw InvalidInput("discriminator: blstm_units must be >= 1");
  if (fc_units.empty() || fc_units.back() != 1)
    throw InvalidInput("discriminator: last fc layer must have width 1");
  for (int u : fc_units)
    if (u < 1) throw InvalidInput("discriminator: fc widths must be >= 1");
  if (sn_power_iters < 1)
    throw InvalidInput("discriminator: sn_power_iters must be >= 1");
  if (input_bins < 2) throw InvalidInput("discriminator: input_bins must be >= 2");
}

nlohmann::json DiscriminatorConfig::ToJson() const {
  return {{"conv_channels", conv_channels}, {"kernel", {kernel_t, kernel_f}},
          {"stride_f", stride_f},           {"blstm_units", blstm_units},
          {"fc_units", fc_units},           {"sn_power_iters", sn_power_iters},
          {"input_bins", input_bins},       {"seed", seed}};
}

DiscriminatorConfig DiscriminatorConfig::FromJson(const nlohmann::json& j) {
  DiscriminatorConfig c;
  c.conv_channels = j.at("conv_channels").get<std::vector<int>>();
  const auto k = j.at("kernel").get<std::vector<int>>();
  if (k.size() != 2) throw InvalidInput("discriminator: kernel must be [t, f]");
  c.kernel_t = k[0];
  c.kernel_f = k[1];
  c.stride_f = j.at("stride_f").get<int>();
  c.blstm_units = j.at("blstm_units").get<int>();
  c.fc_units = j.at("fc_units").get<std::vector<int>>();
  c.sn_power_iters = j.at("sn_power_iters").get<int>();
  c.input_bins = j.at("input_bins").get<int>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.Validate();
  return c;
}

SpectralNormResult SpectralNormalizeMatrix(const Eigen::MatrixXd& weight,
                                           const Eigen::VectorXd& u, int iters) {
  if (u.size() != weight.rows())
    throw InvalidInput("spectral_normalize: u has " + std::to_string(u.size()) +
                       " entries, weight has " + std::to_string(weight.rows()) +
                       " rows");
  SpectralNormResult r;
  r.u = u;
  r.v = Unit(weight.transpose() * r.u);
  for (int i = 0; i < iters; ++i) {
    r.v = Unit(weight.transpose() * r.u);
    r.u = Unit(weight * r.v);
  }
  r.sigma = std::max(r.u.dot(weight * r.v), kModulusFloor);
  r.normalized = weight / r.sigma;
  return r;
}

Discriminator::Discriminator(DiscriminatorConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.Validate();
  Rng rng(cfg_.seed);
  int in = 1;
  for (int k = 0; k < 6; ++k) {
    const int out = cfg_.conv_channels[k];
    const int cols = in * cfg_.kernel_t * cfg_.kernel_f;
    params_.Add(ConvName(k) + "/w",
                nn::KaimingUniform({out, in, cfg_.kernel_t, cfg_.kernel_f}, cols, rng));
    params_.Add(ConvName(k) + "/b", Tensor({out}));
    Tensor u({out}), v({cols});
    Eigen::VectorXd uv(out);
    for (int i = 0; i < out; ++i) uv[i] = rng.Normal();
    uv = Unit(uv);
    std::copy_n(uv.data(), out, u.data.data());
    params_.buffers()[ConvName(k) + "/sn_u"] = u;
    params_.buffers()[ConvName(k) + "/sn_v"] = v;
    in = out;
  }
  const int h = cfg_.blstm_units;
  const int seq_in = cfg_.conv_channels.back() * EncoderWidth(cfg_.input_bins);
  const double bound = 1.0 / std::sqrt(static_cast<double>(h));
  for (const char* dir : {"fwd", "bwd"}) {
    const std::string p = std::string("disc/blstm/") + dir;
    Tensor wx({seq_in, 4 * h}), wh({h, 4 * h});
    for (auto& x : wx.data) x = rng.Uniform(-bound, bound);
    for (auto& x : wh.data) x = rng.Uniform(-bound, bound);
    params_.Add(p + "/wx", wx);
    params_.Add(p + "/wh", wh);
    params_.Add(p + "/b", Tensor({4 * h}));
  }
  in = 2 * h;
  for (std::size_t i = 0; i < cfg_.fc_units.size(); ++i) {
    const int out = cfg_.fc_units[i];
    const std::string p = "disc/fc" + std::to_string(i);
    Tensor w = nn::KaimingUniform({out, in}, in, rng);
    Tensor wt({in, out});
    for (int r = 0; r < out; ++r)
      for (int c = 0; c < in; ++c) wt.data[c * out + r] = w.data[r * in + c];
    params_.Add(p + "/w", wt);
    params_.Add(p + "/b", Tensor({out}));
    in = out;
  }
  PowerIterate(cfg_.sn_power_iters);
}

nn::ConvSpec Discriminator::Spec() const {
  return {cfg_.stride_f, cfg_.kernel_t - 1, 0, cfg_.kernel_f / 2};
}

int Discriminator::EncoderWidth(int bins) const {
  const auto s = Spec();
  for (int k = 0; k < 6; ++k) bins = nn::ConvOutWidth(bins, cfg_.kernel_f, s.stride_f, s.pad_f);
  return bins;
}

void Discriminator::PowerIterate(int iters) {
  for (int k = 0; k < 6; ++k) {
    const Eigen::MatrixXd w = WeightMatrix(params_.Get(ConvName(k) + "/w").value());
    auto& u = params_.buffers()[ConvName(k) + "/sn_u"];
    auto& v = params_.buffers()[ConvName(k) + "/sn_v"];
    const auto r = SpectralNormalizeMatrix(
        w, Eigen::Map<const Eigen::VectorXd>(u.data.data(), w.rows()), iters);
    std::copy_n(r.u.data(), r.u.size(), u.data.data());
    std::copy_n(r.v.data(), r.v.size(), v.data.data());
  }
}

double Discriminator::NormalizedSigma(int layer) const {
  const Eigen::MatrixXd w = WeightMatrix(params_.Get(ConvName(layer) + "/w").value());
  const auto& u = params_.buffers().at(ConvName(layer) + "/sn_u").data;
  const auto& v = params_.buffers().at(ConvName(layer) + "/sn_v").data;
  const Eigen::Map<const Eigen::VectorXd> uv(u.data(), w.rows()), vv(v.data(), w.cols());
  const double sigma = std::max(uv.dot(w * vv), kModulusFloor);
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(w / sigma);
  return svd.singularValues()(0);
}

Var Discriminator::Lstm(const Var& seq, const std::string& dir, bool reverse) const {
  const std::string p = "disc/blstm/" + dir;
  const int h = cfg_.blstm_units;
  const int frames = seq.shape()[0];
  const Var pre_x = nn::Linear(seq, params_.Get(p + "/wx"), params_.Get(p + "/b"));
  const Var wh = params_.Get(p + "/wh");
  Var hs = nn::Constant(Tensor({1, h}));
  Var cs = nn::Constant(Tensor({1, h}));
  std::vector<Var> out(frames);
  for (int i = 0; i < frames; ++i) {
    const int t = reverse ? frames - 1 - i : i;
    const Var pre = nn::Add(nn::Row(pre_x, t), nn::MatMul(hs, wh));
    const Var ig = nn::Sigmoid(nn::SliceCols(pre, 0, h));
    const Var fg = nn::Sigmoid(nn::SliceCols(pre, h, h));
    const Var gg = nn::Tanh(nn::SliceCols(pre, 2 * h, h));
    const Var og = nn::Sigmoid(nn::SliceCols(pre, 3 * h, h));
    cs = nn::Add(nn::Mul(fg, cs), nn::Mul(ig, gg));
    hs = nn::Mul(og, nn::Tanh(cs));
    out[t] = hs;
  }
  return nn::StackRows(out);
}

Var Discriminator::Forward(const Var& mag) const {
  const auto& s = mag.shape();
  if (s.size() != 4 || s[0] != 1 || s[1] != 1)
    throw InvalidInput("discriminator: expected a [1,1,T,F] input, got " +
                       nn::ShapeString(s));
  if (s[3] != cfg_.input_bins)
    throw InvalidInput("discriminator: expected " + std::to_string(cfg_.input_bins) +
                       " frequency bins, got " + std::to_string(s[3]));
  if (s[2] < 1) throw InvalidInput("discriminator: empty input");
  Var x = nn::PadTime(mag, std::max(s[2], kMinFrames));
  const auto spec = Spec();
  for (int k = 0; k < 6; ++k) {
    const auto& u = params_.buffers().at(ConvName(k) + "/sn_u").data;
    const auto& v = params_.buffers().at(ConvName(k) + "/sn_v").data;
    const Var w = nn::SpectralNormalize(params_.Get(ConvName(k) + "/w"), u, v);
    x = nn::Elu(nn::Conv2d(x, w, params_.Get(ConvName(k) + "/b"), spec));
  }
  const Var seq = nn::ToSequence(x);
  Var y = nn::ConcatCols({Lstm(seq, "fwd", false), Lstm(seq, "bwd", true)});
  for (std::size_t i = 0; i < cfg_.fc_units.size(); ++i) {
    const std::string p = "disc/fc" + std::to_string(i);
    y = nn::Linear(y, params_.Get(p + "/w"), params_.Get(p + "/b"));
    if (i + 1 < cfg_.fc_units.size()) y = nn::Elu(y);
  }
  return nn::Mean(y);
}

std::vector<Var> Discriminator::ScoreBatch(const Var& mags,
                                           const std::vector<int>& lengths) const {
  if (mags.shape().size() != 4 || static_cast<int>(lengths.size()) != mags.shape()[0])
    throw InvalidInput("discriminator: lengths do not match batch size");
  std::vector<Var> scores;
  for (int n = 0; n < mags.shape()[0]; ++n)
    scores.push_back(Forward(nn::SliceBatch(mags, n, lengths[n])));
  return scores;
}

}  // namespace dargan::disc
