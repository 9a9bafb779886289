// Copyright 2026 The dargan-cpp Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "dargan/phase.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <string>

#include "dargan/archive.hpp"

namespace dargan::phase {
namespace {

using dsp::Complex;
using dsp::ComplexGrid;
using dsp::ComplexSpectrogram;
using dsp::RealGrid;
using nn::Tensor;
using nn::Var;

void CheckAmplitude(const RealGrid& a, Eigen::Index rows, Eigen::Index cols,
                    const char* op) {
  if (a.rows() != rows || a.cols() != cols) {
    std::ostringstream os;
    os << op << ": amplitude is " << a.rows() << "x" << a.cols()
       << ", spectrogram is " << rows << "x" << cols;
    throw InvalidInput(os.str());
  }
}

Complex Rescale(Complex z, double a) {
  const double m = std::abs(z);
  return m > kModulusFloor ? z * (a / m) : Complex(a, 0.0);
}

void CheckFrames(int frames) {
  if (frames < 3)
    throw InvalidInput("consistency projection needs at least 3 frames, got " +
                       std::to_string(frames));
}

std::size_t SynthesisLength(int frames, const dsp::StftConfig& cfg) {
  return static_cast<std::size_t>(frames - 1) * cfg.hop_length;
}

}  // namespace

void PppConfig::Validate() const {
  if (iterations < 1) throw InvalidInput("ppp: iterations must be >= 1");
  if (phi_channels.empty() || phi_channels.back() != 2)
    throw InvalidInput("ppp: phi_channels must end with 2 (real, imaginary)");
  for (int c : phi_channels)
    if (c < 1) throw InvalidInput("ppp: phi channel counts must be >= 1");
  if (epochs < 1) throw InvalidInput("ppp: epochs must be >= 1");
  if (!(lr > 0.0)) throw InvalidInput("ppp: lr must be > 0");
  if (batch < 1) throw InvalidInput("ppp: batch must be >= 1");
}

nlohmann::json PppConfig::ToJson() const {
  return {{"iterations", iterations}, {"phi_channels", phi_channels},
          {"epochs", epochs},         {"lr", lr},
          {"batch", batch},           {"seed", seed}};
}

PppConfig PppConfig::FromJson(const nlohmann::json& j) {
  PppConfig c;
  c.iterations = j.at("iterations").get<int>();
  c.phi_channels = j.at("phi_channels").get<std::vector<int>>();
  c.epochs = j.at("epochs").get<int>();
  c.lr = j.at("lr").get<double>();
  c.batch = j.at("batch").get<int>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.Validate();
  return c;
}

ComplexSpectrogram ProjAmplitude(const ComplexSpectrogram& x, const RealGrid& amplitude) {
  CheckAmplitude(amplitude, x.data.rows(), x.data.cols(), "proj_amplitude");
  if ((amplitude < 0.0).any())
    throw InvalidInput("proj_amplitude: reference amplitude has negative entries");
  ComplexSpectrogram out;
  out.config = x.config;
  out.data.resize(x.data.rows(), x.data.cols());
  for (Eigen::Index i = 0; i < x.data.size(); ++i)
    out.data(i) = Rescale(x.data(i), amplitude(i));
  return out;
}

ComplexSpectrogram ProjConsistency(const ComplexSpectrogram& x) {
  CheckFrames(x.frames());
  const auto wave = dsp::Istft(x, x.config, SynthesisLength(x.frames(), x.config));
  return dsp::Stft(wave, x.config);
}

ComplexSpectrogram ApplyPhase(const RealGrid& amplitude, const ComplexSpectrogram& x) {
  CheckAmplitude(amplitude, x.data.rows(), x.data.cols(), "apply_phase");
  ComplexSpectrogram out;
  out.config = x.config;
  out.data.resize(x.data.rows(), x.data.cols());
  for (Eigen::Index i = 0; i < x.data.size(); ++i)
    out.data(i) = Rescale(x.data(i), amplitude(i));
  return out;
}

double FullSpectrumNorm(const ComplexGrid& x) {
  double acc = 0.0;
  const Eigen::Index last = x.cols() - 1;
  for (Eigen::Index t = 0; t < x.rows(); ++t)
    for (Eigen::Index k = 0; k <= last; ++k)
      acc += (k == 0 || k == last ? 1.0 : 2.0) * std::norm(x(t, k));
  return std::sqrt(acc);
}

double AmplitudeResidual(const ComplexSpectrogram& x, const RealGrid& amplitude) {
  return FullSpectrumNorm(ProjAmplitude(x, amplitude).data - x.data);
}

Tensor ToTensor(const ComplexGrid& x) {
  const int t = static_cast<int>(x.rows()), f = static_cast<int>(x.cols());
  Tensor out({1, 2, t, f});
  const std::size_t plane = static_cast<std::size_t>(t) * f;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    out.data[i] = x(i).real();
    out.data[plane + i] = x(i).imag();
  }
  return out;
}

ComplexGrid ToGrid(const Tensor& t) {
  if (t.rank() != 4 || t.shape[0] != 1 || t.shape[1] != 2)
    throw InvalidInput("expected a [1,2,T,F] complex tensor, got " +
                       nn::ShapeString(t.shape));
  ComplexGrid out(t.shape[2], t.shape[3]);
  const std::size_t plane = static_cast<std::size_t>(t.shape[2]) * t.shape[3];
  for (Eigen::Index i = 0; i < out.size(); ++i)
    out(i) = Complex(t.data[i], t.data[plane + i]);
  return out;
}

Var ProjAmplitudeOp(const Var& x, const RealGrid& amplitude) {
  const ComplexGrid z = ToGrid(x.value());
  CheckAmplitude(amplitude, z.rows(), z.cols(), "proj_amplitude");
  if ((amplitude < 0.0).any())
    throw InvalidInput("proj_amplitude: reference amplitude has negative entries");
  ComplexGrid out(z.rows(), z.cols());
  for (Eigen::Index i = 0; i < z.size(); ++i) out(i) = Rescale(z(i), amplitude(i));
  return nn::MakeResult(ToTensor(out), {x}, [z, amplitude](nn::Node& self) {
    double* g = nn::InGrad(self, 0);
    if (!g) return;
    const std::size_t plane = static_cast<std::size_t>(z.size());
    for (Eigen::Index i = 0; i < z.size(); ++i) {
      const double m = std::abs(z(i));
      if (m <= kModulusFloor) continue;
      // d(A x / |x|) = A / |x| (I - u u^T), u = x / |x|
      const double ur = z(i).real() / m, ui = z(i).imag() / m;
      const double gr = self.grad[i], gi = self.grad[plane + i];
      const double along = gr * ur + gi * ui;
      const double s = amplitude(i) / m;
      g[i] += s * (gr - along * ur);
      g[plane + i] += s * (gi - along * ui);
    }
  });
}

Var ProjConsistencyOp(const Var& x, const dsp::StftConfig& cfg) {
  ComplexSpectrogram spec;
  spec.data = ToGrid(x.value());
  spec.config = cfg;
  const int frames = spec.frames();
  CheckFrames(frames);
  const std::size_t len = SynthesisLength(frames, cfg);
  const auto out = dsp::Stft(dsp::Istft(spec, cfg, len), cfg);
  return nn::MakeResult(ToTensor(out.data), {x}, [cfg, frames, len](nn::Node& self) {
    double* g = nn::InGrad(self, 0);
    if (!g) return;
    Tensor gt(self.value.shape);
    gt.data = self.grad;
    const auto gy = dsp::StftAdjoint(ToGrid(gt), cfg, len);
    const Tensor gx = ToTensor(dsp::IstftAdjoint(gy, cfg, frames, len));
    for (std::size_t i = 0; i < gx.numel(); ++i) g[i] += gx[i];
  });
}

Phi::Phi(const PppConfig& cfg) : cfg_(cfg) {
  cfg.Validate();
  Rng rng(cfg.seed);
  int in = 6;
  for (std::size_t l = 0; l < cfg.phi_channels.size(); ++l) {
    const int out = cfg.phi_channels[l];
    const std::string p = "phi/conv" + std::to_string(l);
    params_.Add(p + "/w", nn::KaimingUniform({out, in, 3, 3}, in * 9, rng));
    params_.Add(p + "/b", Tensor({out}));
    in = out;
  }
  layers_ = static_cast<int>(cfg.phi_channels.size());
}

Var Phi::Forward(const Var& x_prev, const Var& r, const Var& z) const {
  if (x_prev.shape() != r.shape() || r.shape() != z.shape())
    throw InvalidInput("phi: input shapes differ: " + nn::ShapeString(x_prev.shape()) +
                       ", " + nn::ShapeString(r.shape()) + ", " +
                       nn::ShapeString(z.shape()));
  Var h = nn::ConcatChannels({x_prev, r, z});
  const nn::ConvSpec same{1, 1, 1, 1};
  for (int l = 0; l < layers_; ++l) {
    const std::string p = "phi/conv" + std::to_string(l);
    h = nn::Conv2d(h, params_.Get(p + "/w"), params_.Get(p + "/b"), same);
    if (l + 1 < layers_) h = nn::Elu(h);
  }
  return h;
}

DglaStepResult DglaStep(const Var& x_prev, const RealGrid& amplitude, const Phi* phi,
                        const dsp::StftConfig& cfg) {
  DglaStepResult s;
  s.r = ProjAmplitudeOp(x_prev, amplitude);
  s.z = ProjConsistencyOp(s.r, cfg);
  s.x_next = phi ? nn::Sub(s.z, phi->Forward(x_prev, s.r, s.z)) : s.z;
  return s;
}

DglaTrace RunDgla(const Var& x0, const RealGrid& amplitude, const Phi* phi,
                  int iterations, const dsp::StftConfig& cfg) {
  if (iterations < 0) throw InvalidInput("dgla: negative iteration count");
  DglaTrace trace;
  Var x = x0;
  for (int m = 0; m < iterations; ++m) {
    x = DglaStep(x, amplitude, phi, cfg).x_next;
    trace.iterates.push_back(x);
    trace.phi_used.push_back(phi);
  }
  return trace;
}

ComplexSpectrogram EnhancePhase(const RealGrid& amplitude, const ComplexSpectrogram& noisy,
                                const Phi* phi, int iterations) {
  const ComplexSpectrogram x0 = ProjAmplitude(noisy, amplitude);
  const auto trace =
      RunDgla(nn::Constant(ToTensor(x0.data)), amplitude, phi, iterations, noisy.config);
  ComplexSpectrogram last = x0;
  if (!trace.iterates.empty()) last.data = ToGrid(trace.iterates.back().value());
  return ApplyPhase(amplitude, last);
}

Var PairLoss(const PppPair& pair, const Phi& phi, int iterations) {
  if (pair.enhanced.data.rows() != pair.clean.data.rows() ||
      pair.enhanced.data.cols() != pair.clean.data.cols())
    throw InvalidInput("ppp: enhanced and clean spectrograms differ in shape");
  const RealGrid amplitude = pair.enhanced.data.abs();
  const auto trace = RunDgla(nn::Constant(ToTensor(pair.enhanced.data)), amplitude, &phi,
                             iterations, pair.enhanced.config);
  return nn::MeanAbsError(trace.iterates.back(), ToTensor(pair.clean.data));
}

namespace {

double MeanLoss(const std::vector<PppPair>& set, const Phi& phi, int iterations) {
  double acc = 0.0;
  for (const auto& p : set) acc += PairLoss(p, phi, iterations).item();
  return acc / static_cast<double>(set.size());
}

std::vector<Tensor> Snapshot(const nn::ParamSet& ps) {
  std::vector<Tensor> out;
  for (std::size_t i = 0; i < ps.size(); ++i) out.push_back(ps.At(i).value());
  return out;
}

void Restore(nn::ParamSet& ps, const std::vector<Tensor>& snap) {
  for (std::size_t i = 0; i < ps.size(); ++i) {
    Var p = ps.At(i);
    p.mutable_value() = snap[i];
  }
}

}  // namespace

PppTrainResult TrainPpp(Phi& phi, const std::vector<PppPair>& train,
                        const std::vector<PppPair>& val, const PppConfig& cfg,
                        const std::function<void(const PppStepRecord&)>& on_step) {
  cfg.Validate();
  if (train.empty()) throw InvalidInput("ppp: empty training set");
  nn::AdamOptions opts;
  opts.lr = cfg.lr;
  nn::Adam adam(phi.params(), opts);
  phi.params().SetRequiresGrad(true);

  PppTrainResult result;
  double best = std::numeric_limits<double>::infinity();
  std::vector<Tensor> best_params;
  std::vector<std::size_t> order(train.size());
  long step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    Rng rng(DeriveSeed(cfg.seed, static_cast<std::uint64_t>(epoch)));
    for (std::size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[rng.Below(i)]);
    for (std::size_t start = 0; start < order.size(); start += cfg.batch) {
      const std::size_t end = std::min(order.size(), start + cfg.batch);
      const double weight = 1.0 / static_cast<double>(end - start);
      phi.params().ZeroGrad();
      double mae = 0.0;
      for (std::size_t b = start; b < end; ++b) {
        const Var loss = nn::Scale(PairLoss(train[order[b]], phi, cfg.iterations), weight);
        mae += loss.item();
        nn::Backward(loss);
      }
      if (!std::isfinite(mae) || !phi.params().AllFinite()) {
        std::ostringstream os;
        os << "ppp training diverged at epoch " << epoch << ", step " << step
           << ": mae=" << mae;
        throw DivergenceError(os.str());
      }
      adam.Step();
      PppStepRecord rec{epoch, step++, mae};
      result.steps.push_back(rec);
      if (on_step) on_step(rec);
    }
    if (!val.empty()) {
      const double v = MeanLoss(val, phi, cfg.iterations);
      if (!std::isfinite(v))
        throw DivergenceError("ppp validation loss is non-finite at epoch " +
                              std::to_string(epoch));
      result.val_mae.push_back(v);
      if (v < best) {
        best = v;
        result.best_epoch = epoch;
        best_params = Snapshot(phi.params());
      }
    }
  }
  if (!best_params.empty()) Restore(phi.params(), best_params);
  return result;
}

void SavePhi(const std::filesystem::path& path, const Phi& phi) {
  Archive ar;
  ar.header = {{"kind", "phi"}, {"ppp", phi.config().ToJson()}};
  ar.PutParams(phi.params());
  SaveArchive(path, ar);
}

Phi LoadPhi(const std::filesystem::path& path) {
  const Archive ar = LoadArchive(path);
  if (ar.header.value("kind", "") != "phi" || !ar.header.contains("ppp"))
    throw FormatError(path.string() + ": not a phase denoiser archive");
  Phi phi(PppConfig::FromJson(ar.header.at("ppp")));
  ar.GetParams(phi.params());
  return phi;
}

}  // namespace dargan::phase
