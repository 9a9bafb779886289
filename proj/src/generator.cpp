// Copyright 2026 The dargan-cpp Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "dargan/generator.hpp"

#include <string>

namespace dargan::gen {
namespace {

using nn::ConvSpec;
using nn::Tensor;
using nn::Var;

constexpr ConvSpec kFreqOnly{1, 0, 0, 1};      // (1,3) kernels
constexpr ConvSpec kPointwise{1, 0, 0, 0};     // (1,1) kernels
constexpr ConvSpec kCausalDown{2, 1, 0, 1};    // (2,3), stride 2 on frequency
constexpr ConvSpec kCausalSame{1, 1, 0, 1};    // (2,3), stride 1

void CheckPair(const Var& noisy, const Var& prev_est, const char* op) {
  if (noisy.value().rank() != 4 || noisy.shape()[1] != 1)
    throw InvalidInput(std::string(op) + ": noisy input must be [N,1,T,F], got " +
                       nn::ShapeString(noisy.shape()));
  if (noisy.shape() != prev_est.shape())
    throw InvalidInput(std::string(op) + ": noisy " +
                       nn::ShapeString(noisy.shape()) + " vs previous estimate " +
                       nn::ShapeString(prev_est.shape()));
}

void AddConv(nn::ParamSet& ps, Rng& rng, const std::string& name, int out,
             int in, int kt, int kf) {
  ps.Add(name + "/w", nn::KaimingUniform({out, in, kt, kf}, in * kt * kf, rng));
  ps.Add(name + "/b", Tensor({out}));
}

Var Conv(const nn::ParamSet& ps, const std::string& name, const Var& x,
         const ConvSpec& spec) {
  return nn::Conv2d(x, ps.Get(name + "/w"), ps.Get(name + "/b"), spec);
}

}  // namespace

void GeneratorConfig::Validate() const {
  if (num_stages < 1) throw InvalidInput("generator: num_stages must be >= 1");
  if (feature_channels.empty())
    throw InvalidInput("generator: feature_channels must be non-empty");
  if (attention_channels.empty())
    throw InvalidInput("generator: attention_channels must be non-empty");
  for (int c : feature_channels)
    if (c < 1) throw InvalidInput("generator: feature channel counts must be >= 1");
  for (int c : attention_channels)
    if (c < 1) throw InvalidInput("generator: attention channel counts must be >= 1");
  if (srnn_hidden < 1) throw InvalidInput("generator: srnn_hidden must be >= 1");
}

nlohmann::json GeneratorConfig::ToJson() const {
  return {{"num_stages", num_stages},
          {"feature_channels", feature_channels},
          {"attention_channels", attention_channels},
          {"srnn_hidden", srnn_hidden},
          {"seed", seed}};
}

GeneratorConfig GeneratorConfig::FromJson(const nlohmann::json& j) {
  GeneratorConfig c;
  c.num_stages = j.at("num_stages").get<int>();
  c.feature_channels = j.at("feature_channels").get<std::vector<int>>();
  c.attention_channels = j.at("attention_channels").get<std::vector<int>>();
  c.srnn_hidden = j.at("srnn_hidden").get<int>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.Validate();
  return c;
}

Generator::Generator(GeneratorConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.Validate();
  Rng rng(cfg_.seed);
  const int hidden = cfg_.srnn_hidden;
  const int nb = num_blocks();
  const auto& ch = cfg_.feature_channels;

  AddConv(params_, rng, "gen/srnn/proj", hidden, 2, 1, 1);
  for (const char* g : {"update", "reset", "cand"})
    AddConv(params_, rng, std::string("gen/srnn/") + g, hidden, 2 * hidden, 1, 3);

  int in = 2;
  for (std::size_t i = 0; i < cfg_.attention_channels.size(); ++i) {
    AddConv(params_, rng, "gen/agm/trunk" + std::to_string(i),
            cfg_.attention_channels[i], in, 2, 3);
    in = cfg_.attention_channels[i];
  }
  for (int l = 0; l < num_gated_layers(); ++l) {
    const int c = l < nb ? ch[l] : DecoderOutChannels(l - nb);
    AddConv(params_, rng, "gen/agm/gate" + std::to_string(l), c, in, 1, 1);
  }

  in = 2 + hidden;
  for (int k = 0; k < nb; ++k) {
    AddConv(params_, rng, "gen/nrm/enc" + std::to_string(k), ch[k], in, 2, 3);
    in = ch[k];
  }
  for (int k = 0; k < nb; ++k) {
    const int dec_in = k == 0 ? ch[nb - 1] : DecoderOutChannels(k - 1) + ch[nb - 1 - k];
    AddConv(params_, rng, "gen/nrm/dec" + std::to_string(k),
            DecoderOutChannels(k), dec_in, 2, 3);
  }
  AddConv(params_, rng, "gen/nrm/head", 1, DecoderOutChannels(nb - 1), 1, 1);
}

int Generator::DecoderOutChannels(int k) const {
  const int nb = num_blocks();
  return k < nb - 1 ? cfg_.feature_channels[nb - 2 - k] : cfg_.feature_channels[0];
}

std::vector<int> Generator::EncoderWidths(int bins) const {
  std::vector<int> w{bins};
  for (int k = 0; k < num_blocks(); ++k)
    w.push_back(nn::ConvOutWidth(w.back(), 3, 2, 1));
  return w;
}

std::pair<int, int> Generator::GateGeometry(int layer, int bins) const {
  const int nb = num_blocks();
  const auto widths = EncoderWidths(bins);
  if (layer < nb) return {cfg_.feature_channels[layer], widths[layer + 1]};
  const int k = layer - nb;
  return {DecoderOutChannels(k), widths[nb - 1 - k]};
}

StageState Generator::InitialState(int batch, int frames, int bins) const {
  return {nn::Constant(Tensor({batch, cfg_.srnn_hidden, frames, bins}))};
}

StageState Generator::SrnnStep(const Var& noisy, const Var& prev_est,
                               const StageState& prev) const {
  CheckPair(noisy, prev_est, "srnn_step");
  const auto& s = noisy.shape();
  const nn::Shape want{s[0], cfg_.srnn_hidden, s[2], s[3]};
  if (prev.h.shape() != want)
    throw InvalidInput("srnn_step: state " + nn::ShapeString(prev.h.shape()) +
                       " does not match " + nn::ShapeString(want));
  const Var x = Conv(params_, "gen/srnn/proj", nn::ConcatChannels({noisy, prev_est}),
                     kPointwise);
  const Var xh = nn::ConcatChannels({x, prev.h});
  const Var z = nn::Sigmoid(Conv(params_, "gen/srnn/update", xh, kFreqOnly));
  const Var r = nn::Sigmoid(Conv(params_, "gen/srnn/reset", xh, kFreqOnly));
  const Var n = nn::Tanh(Conv(params_, "gen/srnn/cand",
                              nn::ConcatChannels({x, nn::Mul(r, prev.h)}),
                              kFreqOnly));
  // h' = (1 - z) * h + z * n
  const Var keep = nn::AddScalar(nn::Scale(z, -1.0), 1.0);
  return {nn::Add(nn::Mul(keep, prev.h), nn::Mul(z, n))};
}

AttentionVector Generator::Attention(const Var& noisy, const Var& prev_est) const {
  CheckPair(noisy, prev_est, "attention");
  Var t = nn::ConcatChannels({noisy, prev_est});
  for (std::size_t i = 0; i < cfg_.attention_channels.size(); ++i)
    t = nn::Elu(Conv(params_, "gen/agm/trunk" + std::to_string(i), t, kCausalDown));
  const int bins = noisy.shape()[3];
  AttentionVector out;
  for (int l = 0; l < num_gated_layers(); ++l) {
    const Var g = Conv(params_, "gen/agm/gate" + std::to_string(l), t, kPointwise);
    out.gates.push_back(
        nn::Sigmoid(nn::ResampleFreq(g, GateGeometry(l, bins).second)));
  }
  return out;
}

Var Generator::NoiseRemoval(const Var& noisy, const Var& prev_est,
                            const StageState& state,
                            const AttentionVector& gates) const {
  CheckPair(noisy, prev_est, "noise_removal");
  const int nb = num_blocks();
  if (static_cast<int>(gates.gates.size()) != num_gated_layers())
    throw InvalidInput("noise_removal: expected " +
                       std::to_string(num_gated_layers()) + " gate maps, got " +
                       std::to_string(gates.gates.size()));
  const auto& s = noisy.shape();
  if (state.h.shape() != nn::Shape{s[0], cfg_.srnn_hidden, s[2], s[3]})
    throw InvalidInput("noise_removal: state shape " +
                       nn::ShapeString(state.h.shape()) + " mismatches input");
  const auto widths = EncoderWidths(s[3]);

  auto gate = [&](int l, const Var& feat) {
    const Var& g = gates.gates[l];
    if (g.shape() != feat.shape())
      throw InvalidInput("noise_removal: gate " + std::to_string(l) + " shape " +
                         nn::ShapeString(g.shape()) + " vs feature " +
                         nn::ShapeString(feat.shape()));
    return nn::Mul(feat, g);
  };

  std::vector<Var> enc;
  Var x = nn::ConcatChannels({noisy, prev_est, state.h});
  for (int k = 0; k < nb; ++k) {
    x = gate(k, nn::Elu(Conv(params_, "gen/nrm/enc" + std::to_string(k), x,
                             kCausalDown)));
    enc.push_back(x);
  }
  Var d = enc.back();
  for (int k = 0; k < nb; ++k) {
    if (k > 0) d = nn::ConcatChannels({d, enc[nb - 1 - k]});
    d = nn::UpsampleFreq(d, widths[nb - 1 - k]);
    d = gate(nb + k, nn::Elu(Conv(params_, "gen/nrm/dec" + std::to_string(k), d,
                                  kCausalSame)));
  }
  return nn::Softplus(Conv(params_, "gen/nrm/head", d, kPointwise));
}

StageOutput Generator::Stage(const Var& noisy, const Var& prev_est,
                             const StageState& prev) const {
  StageOutput out;
  out.state = SrnnStep(noisy, prev_est, prev);
  const AttentionVector gates = Attention(noisy, prev_est);
  out.estimate = NoiseRemoval(noisy, prev_est, out.state, gates);
  return out;
}

std::vector<Var> Generator::Forward(const Var& noisy) const {
  CheckPair(noisy, noisy, "generator");
  const auto& s = noisy.shape();
  StageState state = InitialState(s[0], s[2], s[3]);
  Var prev = noisy;
  std::vector<Var> estimates;
  for (int q = 0; q < cfg_.num_stages; ++q) {
    StageOutput o = Stage(noisy, prev, state);
    state = o.state;
    prev = o.estimate;
    estimates.push_back(o.estimate);
  }
  return estimates;
}

std::vector<dsp::MagnitudeSpectrogram> Generator::Enhance(
    const dsp::MagnitudeSpectrogram& noisy) const {
  const auto outs = Forward(nn::Constant(ToTensor(noisy)));
  std::vector<dsp::MagnitudeSpectrogram> mags;
  for (const auto& o : outs) mags.push_back(FromTensor(o.value()));
  return mags;
}

Tensor ToTensor(const dsp::MagnitudeSpectrogram& mag) {
  Tensor t({1, 1, mag.frames(), mag.bins()});
  std::copy_n(mag.data.data(), mag.data.size(), t.data.data());
  return t;
}

dsp::MagnitudeSpectrogram FromTensor(const Tensor& t, int batch_index) {
  if (t.rank() != 4 || t.shape[1] != 1)
    throw InvalidInput("expected a [N,1,T,F] tensor, got " + nn::ShapeString(t.shape));
  dsp::MagnitudeSpectrogram m;
  m.data.resize(t.shape[2], t.shape[3]);
  const std::size_t plane = static_cast<std::size_t>(t.shape[2]) * t.shape[3];
  std::copy_n(t.data.data() + batch_index * plane, plane, m.data.data());
  return m;
}

}  // namespace dargan::gen
