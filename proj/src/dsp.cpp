// Copyright 2026 The dargan-cpp Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "dargan/dsp.hpp"

#include <unsupported/Eigen/FFT>

#include <algorithm>
#include <array>
#include <cstring>
#include <fstream>
#include <sstream>

namespace dargan::dsp {
namespace {

// Mirrors index j into [0, len) without repeating the edge sample; returns -1
// when a single reflection is not enough.
int Reflect(long j, long len) {
  if (j < 0) j = -j;
  if (j >= len) j = 2 * (len - 1) - j;
  return (j >= 0 && j < len) ? static_cast<int>(j) : -1;
}

long PaddedSignalLength(std::size_t num_samples, const StftConfig& cfg) {
  return std::max<long>(static_cast<long>(num_samples), cfg.win_length);
}

// Per-sample sum of squared windows over the folded signal of length eff_len.
std::vector<double> FoldedWindowEnergy(const std::vector<double>& win,
                                       const StftConfig& cfg, int frames,
                                       long eff_len) {
  std::vector<double> den(eff_len, 0.0);
  for (int t = 0; t < frames; ++t) {
    for (int n = 0; n < cfg.win_length; ++n) {
      const int j = Reflect(static_cast<long>(t) * cfg.hop_length + n - cfg.pad(),
                            eff_len);
      if (j >= 0) den[j] += win[n] * win[n];
    }
  }
  return den;
}

void CheckTargetLength(int frames, std::size_t target_len,
                       const StftConfig& cfg) {
  const long natural = static_cast<long>(frames - 1) * cfg.hop_length +
                       cfg.win_length - 2 * cfg.pad();
  const long target = static_cast<long>(target_len);
  if (target > natural + cfg.win_length || target + cfg.win_length < natural) {
    std::ostringstream os;
    os << "istft: target length " << target_len << " inconsistent with "
       << frames << " frames (natural length " << natural << ")";
    throw InvalidInput(os.str());
  }
}

}  // namespace

nlohmann::json StftConfig::ToJson() const {
  return {{"win_length", win_length},
          {"hop_length", hop_length},
          {"fft_size", fft_size},
          {"window", window}};
}

StftConfig StftConfig::FromJson(const nlohmann::json& j) {
  StftConfig c;
  c.win_length = j.at("win_length").get<int>();
  c.hop_length = j.at("hop_length").get<int>();
  c.fft_size = j.at("fft_size").get<int>();
  c.window = j.at("window").get<std::string>();
  c.Validate();
  return c;
}

void StftConfig::Validate() const {
  if (win_length <= 0 || hop_length <= 0 || fft_size <= 0)
    throw InvalidInput("stft config: lengths must be positive");
  if (win_length % 2 != 0 || hop_length * 2 != win_length)
    throw InvalidInput("stft config: hop_length must equal win_length / 2");
  if (fft_size < win_length)
    throw InvalidInput("stft config: fft_size must be >= win_length");
  if (fft_size % 2 != 0)
    throw InvalidInput("stft config: fft_size must be even");
  if (window != "hamming" && window != "hann")
    throw InvalidInput("stft config: unknown window '" + window + "'");
}

std::vector<double> AnalysisWindow(const StftConfig& cfg) {
  std::vector<double> w(cfg.win_length);
  const double n_total = cfg.win_length;
  for (int n = 0; n < cfg.win_length; ++n) {
    const double c = std::cos(2.0 * M_PI * n / n_total);
    w[n] = cfg.window == "hann" ? 0.5 - 0.5 * c : 0.54 - 0.46 * c;
  }
  return w;
}

int FrameCount(std::size_t num_samples, const StftConfig& cfg) {
  const long padded = PaddedSignalLength(num_samples, cfg) + 2 * cfg.pad();
  return static_cast<int>((padded - cfg.win_length) / cfg.hop_length + 1);
}

ComplexSpectrogram Stft(const Waveform& wave, const StftConfig& cfg) {
  cfg.Validate();
  for (double s : wave.samples)
    if (!std::isfinite(s)) throw InvalidInput("stft: non-finite sample");

  const long eff_len = PaddedSignalLength(wave.size(), cfg);
  const int frames = FrameCount(wave.size(), cfg);
  const auto win = AnalysisWindow(cfg);
  const int nfft = cfg.fft_size;

  ComplexSpectrogram out;
  out.config = cfg;
  out.data.resize(frames, cfg.bins());

  Eigen::FFT<double> fft;
  fft.SetFlag(Eigen::FFT<double>::HalfSpectrum);
  std::vector<double> frame(nfft, 0.0);
  std::vector<Complex> spec;
  for (int t = 0; t < frames; ++t) {
    std::fill(frame.begin(), frame.end(), 0.0);
    for (int n = 0; n < cfg.win_length; ++n) {
      const int j = Reflect(static_cast<long>(t) * cfg.hop_length + n - cfg.pad(),
                            eff_len);
      const double x =
          (j >= 0 && static_cast<std::size_t>(j) < wave.size()) ? wave.samples[j]
                                                                 : 0.0;
      frame[n] = win[n] * x;
    }
    fft.fwd(spec, frame);
    for (int k = 0; k < cfg.bins(); ++k) out.data(t, k) = spec[k];
  }
  return out;
}

std::vector<double> InverseFrame(
    const Eigen::Ref<const Eigen::Array<Complex, 1, Eigen::Dynamic>>& row,
    const StftConfig& cfg) {
  cfg.Validate();
  if (row.size() != cfg.bins())
    throw InvalidInput("inverse frame: bin count mismatch");
  Eigen::FFT<double> fft;
  fft.SetFlag(Eigen::FFT<double>::HalfSpectrum);
  std::vector<Complex> spec(row.begin(), row.end());
  spec.front().imag(0.0);
  spec.back().imag(0.0);
  std::vector<double> y;
  fft.inv(y, spec, cfg.fft_size);
  const auto win = AnalysisWindow(cfg);
  std::vector<double> out(cfg.win_length);
  for (int n = 0; n < cfg.win_length; ++n) out[n] = y[n] / win[n];
  return out;
}

Waveform Istft(const ComplexSpectrogram& spec, const StftConfig& cfg,
               std::size_t target_len) {
  cfg.Validate();
  if (spec.bins() != cfg.bins())
    throw InvalidInput("istft: spectrogram has " +
                       std::to_string(spec.bins()) + " bins, config expects " +
                       std::to_string(cfg.bins()));
  const int frames = spec.frames();
  if (frames < 1) throw InvalidInput("istft: empty spectrogram");
  CheckTargetLength(frames, target_len, cfg);

  const long eff_len = PaddedSignalLength(target_len, cfg);
  const auto win = AnalysisWindow(cfg);
  std::vector<double> num(eff_len, 0.0);
  const auto den = FoldedWindowEnergy(win, cfg, frames, eff_len);

  Eigen::FFT<double> fft;
  fft.SetFlag(Eigen::FFT<double>::HalfSpectrum);
  std::vector<Complex> row(cfg.bins());
  std::vector<double> y;
  for (int t = 0; t < frames; ++t) {
    for (int k = 0; k < cfg.bins(); ++k) row[k] = spec.data(t, k);
    row.front().imag(0.0);
    row.back().imag(0.0);
    fft.inv(y, row, cfg.fft_size);
    for (int n = 0; n < cfg.win_length; ++n) {
      const int j = Reflect(static_cast<long>(t) * cfg.hop_length + n - cfg.pad(),
                            eff_len);
      if (j >= 0) num[j] += win[n] * y[n];
    }
  }

  Waveform out;
  out.samples.resize(target_len);
  for (std::size_t j = 0; j < target_len; ++j)
    out.samples[j] = den[j] > 0.0 ? num[j] / den[j] : 0.0;
  return out;
}

std::vector<double> StftAdjoint(const ComplexGrid& grad, const StftConfig& cfg,
                                std::size_t len) {
  cfg.Validate();
  const int frames = static_cast<int>(grad.rows());
  if (grad.cols() != cfg.bins() || frames != FrameCount(len, cfg))
    throw InvalidInput("stft adjoint: gradient shape mismatch");
  const long eff_len = PaddedSignalLength(len, cfg);
  const auto win = AnalysisWindow(cfg);
  const int nfft = cfg.fft_size;

  Eigen::FFT<double> fft;
  std::vector<Complex> full(nfft), time;
  std::vector<double> out(len, 0.0);
  for (int t = 0; t < frames; ++t) {
    std::fill(full.begin(), full.end(), Complex(0.0, 0.0));
    for (int k = 0; k < cfg.bins(); ++k) full[k] = grad(t, k);
    fft.inv(time, full);  // scaled by 1/nfft
    for (int n = 0; n < cfg.win_length; ++n) {
      const int j = Reflect(static_cast<long>(t) * cfg.hop_length + n - cfg.pad(),
                            eff_len);
      if (j >= 0 && static_cast<std::size_t>(j) < len)
        out[j] += win[n] * time[n].real() * nfft;
    }
  }
  return out;
}

ComplexGrid IstftAdjoint(const std::vector<double>& grad,
                         const StftConfig& cfg, int frames,
                         std::size_t target_len) {
  cfg.Validate();
  if (grad.size() != target_len)
    throw InvalidInput("istft adjoint: gradient length mismatch");
  CheckTargetLength(frames, target_len, cfg);
  const long eff_len = PaddedSignalLength(target_len, cfg);
  const auto win = AnalysisWindow(cfg);
  const auto den = FoldedWindowEnergy(win, cfg, frames, eff_len);
  const int nfft = cfg.fft_size;

  std::vector<double> gnum(eff_len, 0.0);
  for (std::size_t j = 0; j < target_len; ++j)
    if (den[j] > 0.0) gnum[j] = grad[j] / den[j];

  Eigen::FFT<double> fft;
  fft.SetFlag(Eigen::FFT<double>::HalfSpectrum);
  std::vector<double> gy(nfft);
  std::vector<Complex> spec;
  ComplexGrid out(frames, cfg.bins());
  for (int t = 0; t < frames; ++t) {
    std::fill(gy.begin(), gy.end(), 0.0);
    for (int n = 0; n < cfg.win_length; ++n) {
      const int j = Reflect(static_cast<long>(t) * cfg.hop_length + n - cfg.pad(),
                            eff_len);
      if (j >= 0) gy[n] = win[n] * gnum[j];
    }
    fft.fwd(spec, gy);
    for (int k = 0; k < cfg.bins(); ++k) {
      const double c = (k == 0 || k == cfg.bins() - 1) ? 1.0 : 2.0;
      Complex g = spec[k] * (c / nfft);
      if (k == 0 || k == cfg.bins() - 1) g.imag(0.0);
      out(t, k) = g;
    }
  }
  return out;
}

std::pair<MagnitudeSpectrogram, ComplexSpectrogram> SplitMagPhase(
    const ComplexSpectrogram& spec) {
  MagnitudeSpectrogram mag;
  ComplexSpectrogram phase;
  phase.config = spec.config;
  mag.data.resize(spec.frames(), spec.bins());
  phase.data.resize(spec.frames(), spec.bins());
  for (Eigen::Index i = 0; i < spec.data.size(); ++i) {
    const Complex z = spec.data(i);
    const double m = std::abs(z);
    mag.data(i) = m;
    phase.data(i) = m > kModulusFloor ? z / m : Complex(1.0, 0.0);
  }
  return {std::move(mag), std::move(phase)};
}

MagnitudeSpectrogram Magnitude(const ComplexSpectrogram& spec) {
  MagnitudeSpectrogram mag;
  mag.data = spec.data.abs();
  return mag;
}

// --- WAV -------------------------------------------------------------------

namespace {

std::uint32_t ReadU32(const unsigned char* p) {
  return p[0] | (p[1] << 8) | (p[2] << 16) | (std::uint32_t(p[3]) << 24);
}
std::uint16_t ReadU16(const unsigned char* p) { return p[0] | (p[1] << 8); }

void PutU32(std::ostream& os, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                              static_cast<unsigned char>((v >> 8) & 0xff),
                              static_cast<unsigned char>((v >> 16) & 0xff),
                              static_cast<unsigned char>((v >> 24) & 0xff)};
  os.write(reinterpret_cast<const char*>(b), 4);
}
void PutU16(std::ostream& os, std::uint16_t v) {
  const unsigned char b[2] = {static_cast<unsigned char>(v & 0xff),
                              static_cast<unsigned char>((v >> 8) & 0xff)};
  os.write(reinterpret_cast<const char*>(b), 2);
}

}  // namespace

Waveform ReadWav(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(is)),
                                   std::istreambuf_iterator<char>());
  const std::string where = path.string() + ": ";
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
    throw FormatError(where + "not a RIFF/WAVE file");

  bool have_fmt = false;
  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const unsigned char* chunk = bytes.data() + pos;
    const std::uint32_t size = ReadU32(chunk + 4);
    const std::size_t body = pos + 8;
    if (body + size > bytes.size() && std::memcmp(chunk, "data", 4) != 0)
      throw FormatError(where + "truncated chunk");
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (size < 16) throw FormatError(where + "short fmt chunk");
      format = ReadU16(bytes.data() + body);
      channels = ReadU16(bytes.data() + body + 2);
      rate = ReadU32(bytes.data() + body + 4);
      bits = ReadU16(bytes.data() + body + 14);
      have_fmt = true;
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      if (!have_fmt) throw FormatError(where + "data chunk before fmt chunk");
      if (format != 1 || bits != 16)
        throw FormatError(where + "unsupported encoding (format tag " +
                          std::to_string(format) + ", " +
                          std::to_string(bits) +
                          " bits); expected 16-bit PCM");
      if (channels != 1)
        throw FormatError(where + "unsupported channel count " +
                          std::to_string(channels) + "; expected mono");
      if (rate != kSampleRate)
        throw FormatError(where + "unsupported sample rate " +
                          std::to_string(rate) + " Hz; expected 16000 Hz");
      const std::size_t avail = std::min<std::size_t>(size, bytes.size() - body);
      Waveform w;
      w.samples.resize(avail / 2);
      for (std::size_t i = 0; i < w.samples.size(); ++i) {
        const auto v = static_cast<std::int16_t>(ReadU16(bytes.data() + body + 2 * i));
        w.samples[i] = v / 32767.0;
      }
      return w;
    }
    pos = body + size + (size & 1);
  }
  throw FormatError(where + "missing data chunk");
}

void WriteWav(const std::filesystem::path& path, const Waveform& wave) {
  if (wave.sample_rate != kSampleRate)
    throw InvalidInput("write_wav: sample rate must be 16000 Hz");
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write " + path.string());
  const std::uint32_t data_bytes = static_cast<std::uint32_t>(wave.size() * 2);
  os.write("RIFF", 4);
  PutU32(os, 36 + data_bytes);
  os.write("WAVEfmt ", 8);
  PutU32(os, 16);
  PutU16(os, 1);
  PutU16(os, 1);
  PutU32(os, kSampleRate);
  PutU32(os, kSampleRate * 2);
  PutU16(os, 2);
  PutU16(os, 16);
  os.write("data", 4);
  PutU32(os, data_bytes);
  for (double s : wave.samples) {
    if (!std::isfinite(s)) throw InvalidInput("write_wav: non-finite sample");
    const double q = std::round(std::clamp(s, -1.0, 1.0) * 32767.0);
    PutU16(os, static_cast<std::uint16_t>(static_cast<std::int16_t>(q)));
  }
  if (!os) throw IoError("failed writing " + path.string());
}

}  // namespace dargan::dsp
