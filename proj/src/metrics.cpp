// Copyright 2026 The dargan-cpp Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "dargan/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <limits>
#include <regex>
#include <sstream>

#include <unsupported/Eigen/FFT>

namespace dargan::metrics {
namespace {

using dsp::Waveform;

constexpr double kEps = std::numeric_limits<double>::epsilon();

// Critical-band centre frequencies and bandwidths (Hz) for the slope measure.
constexpr std::array<double, 25> kCentre = {
    50.0,    120.0,   190.0,   260.0,   330.0,   400.0,   470.0,
    540.0,   617.372, 703.378, 798.717, 904.128, 1020.38, 1148.30,
    1288.72, 1442.54, 1610.70, 1794.16, 1993.93, 2211.08, 2446.71,
    2701.97, 2978.04, 3276.17, 3597.63};
constexpr std::array<double, 25> kBandwidth = {
    70.0,    70.0,    70.0,    70.0,    70.0,    70.0,    70.0,
    77.3724, 86.0056, 95.3398, 105.411, 116.256, 127.914, 140.423,
    153.823, 168.154, 183.457, 199.776, 217.153, 235.631, 255.255,
    276.072, 298.126, 321.465, 346.136};
constexpr double kKmax = 20.0;
constexpr double kKlocmax = 1.0;

void CheckPair(const Waveform& clean, const Waveform& est, const MetricsConfig& cfg,
               const char* what) {
  if (clean.size() != est.size())
    throw InvalidInput(std::string(what) + ": length mismatch (" +
                       std::to_string(clean.size()) + " vs " + std::to_string(est.size()) + ")");
  if (FrameCount(clean.size(), cfg) < 1)
    throw InvalidInput(std::string(what) + ": signal shorter than one frame");
}

std::vector<double> Frame(const Waveform& x, int index, const std::vector<double>& win,
                          int hop) {
  std::vector<double> f(win.size());
  const std::size_t off = static_cast<std::size_t>(index) * hop;
  for (std::size_t n = 0; n < win.size(); ++n) f[n] = win[n] * x.samples[off + n];
  return f;
}

bool AllZero(const std::vector<double>& f) {
  return std::all_of(f.begin(), f.end(), [](double v) { return v == 0.0; });
}

double Energy(const std::vector<double>& f) {
  double e = 0.0;
  for (double v : f) e += v * v;
  return e;
}

// quadratic form a^T Toeplitz(r) a
double ToeplitzForm(const std::vector<double>& a, const std::vector<double>& r) {
  double s = 0.0;
  const int p = static_cast<int>(a.size());
  for (int i = 0; i < p; ++i)
    for (int j = 0; j < p; ++j) s += a[i] * r[std::abs(i - j)] * a[j];
  return s;
}

struct BandSetup {
  int nfft = 0;
  std::vector<std::vector<double>> filters;  // 25 x nfft/2
};

BandSetup Bands(int frame) {
  BandSetup b;
  b.nfft = 1;
  while (b.nfft < 2 * frame) b.nfft *= 2;
  const int half = b.nfft / 2;
  const double max_freq = dsp::kSampleRate / 2.0;
  const double min_factor = std::exp(-30.0 / (2.0 * 2.303));
  for (std::size_t i = 0; i < kCentre.size(); ++i) {
    const double f0 = std::floor(kCentre[i] / max_freq * half);
    const double bw = kBandwidth[i] / max_freq * half;
    const double norm = std::log(kBandwidth[0]) - std::log(kBandwidth[i]);
    std::vector<double> row(half);
    for (int j = 0; j < half; ++j) {
      const double v = std::exp(-11.0 * ((j - f0) / bw) * ((j - f0) / bw) + norm);
      row[j] = v > min_factor ? v : 0.0;
    }
    b.filters.push_back(std::move(row));
  }
  return b;
}

std::vector<double> BandLogEnergy(const std::vector<double>& frame, const BandSetup& b,
                                  Eigen::FFT<double>& fft) {
  std::vector<double> padded(b.nfft, 0.0);
  std::copy(frame.begin(), frame.end(), padded.begin());
  std::vector<std::complex<double>> spec;
  fft.fwd(spec, padded);
  const int half = b.nfft / 2;
  std::vector<double> power(half);
  for (int k = 0; k < half; ++k) power[k] = std::norm(spec[k]);
  std::vector<double> out;
  for (const auto& row : b.filters) {
    double e = 0.0;
    for (int k = 0; k < half; ++k) e += row[k] * power[k];
    out.push_back(e > 0.0 ? std::max(10.0 * std::log10(e), -100.0) : -100.0);
  }
  return out;
}

// Nearest local peak in the direction of the slope sign.
std::vector<double> LocalPeaks(const std::vector<double>& slope,
                               const std::vector<double>& energy) {
  const int nb = static_cast<int>(energy.size());
  std::vector<double> peaks(slope.size());
  for (int i = 0; i < static_cast<int>(slope.size()); ++i) {
    int n = i;
    if (slope[i] > 0.0) {
      while (n < nb - 1 && slope[n] > 0.0) ++n;
      peaks[i] = energy[n - 1];
    } else {
      while (n >= 0 && slope[n] <= 0.0) --n;
      peaks[i] = energy[n + 1];
    }
  }
  return peaks;
}

std::string FormatNumber(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string ShellQuote(const std::string& s) {
  std::string out = "'";
  for (char c : s) out += c == '\'' ? std::string("'\\''") : std::string(1, c);
  return out + "'";
}

}  // namespace

void MetricsConfig::Validate() const {
  if (frame < 16) throw InvalidInput("metrics: frame must be >= 16");
  if (hop < 1 || hop > frame) throw InvalidInput("metrics: hop must be in [1, frame]");
  if (lpc_order < 1 || lpc_order >= frame)
    throw InvalidInput("metrics: lpc_order must be in [1, frame)");
  if (!(keep_fraction > 0.0 && keep_fraction <= 1.0))
    throw InvalidInput("metrics: keep_fraction must be in (0, 1]");
  if (!std::isfinite(active_floor_db) || active_floor_db >= 0.0)
    throw InvalidInput("metrics: active_floor_db must be negative");
}

nlohmann::json MetricsConfig::ToJson() const {
  return {{"frame", frame},
          {"hop", hop},
          {"lpc_order", lpc_order},
          {"keep_fraction", keep_fraction},
          {"active_floor_db", active_floor_db},
          {"pesq_cmd", pesq_cmd}};
}

MetricsConfig MetricsConfig::FromJson(const nlohmann::json& j) {
  MetricsConfig c;
  c.frame = j.at("frame").get<int>();
  c.hop = j.at("hop").get<int>();
  c.lpc_order = j.at("lpc_order").get<int>();
  c.keep_fraction = j.at("keep_fraction").get<double>();
  c.active_floor_db = j.at("active_floor_db").get<double>();
  c.pesq_cmd = j.at("pesq_cmd").get<std::string>();
  c.Validate();
  return c;
}

std::vector<double> HannWindow(int length) {
  std::vector<double> w(length);
  for (int n = 0; n < length; ++n)
    w[n] = 0.5 * (1.0 - std::cos(2.0 * M_PI * (n + 1) / (length + 1)));
  return w;
}

int FrameCount(std::size_t n, const MetricsConfig& cfg) {
  if (n < static_cast<std::size_t>(cfg.frame)) return 0;
  return static_cast<int>((n - cfg.frame) / cfg.hop) + 1;
}

double SegSnr(const Waveform& clean, const Waveform& est, const MetricsConfig& cfg) {
  CheckPair(clean, est, cfg, "segsnr");
  const auto win = HannWindow(cfg.frame);
  const int frames = FrameCount(clean.size(), cfg);
  std::vector<double> signal(frames), noise(frames);
  double loudest = 0.0;
  for (int i = 0; i < frames; ++i) {
    const auto c = Frame(clean, i, win, cfg.hop);
    const auto e = Frame(est, i, win, cfg.hop);
    double n = 0.0;
    for (std::size_t k = 0; k < c.size(); ++k) n += (c[k] - e[k]) * (c[k] - e[k]);
    signal[i] = Energy(c);
    noise[i] = n;
    loudest = std::max(loudest, signal[i]);
  }
  if (loudest <= 0.0) throw InvalidInput("segsnr: reference has no active frames");
  const double floor = loudest * std::pow(10.0, cfg.active_floor_db / 10.0);
  double acc = 0.0;
  int used = 0;
  for (int i = 0; i < frames; ++i) {
    if (signal[i] <= floor) continue;
    const double snr = 10.0 * std::log10(signal[i] / (noise[i] + kEps) + kEps);
    acc += std::clamp(snr, kSegSnrMin, kSegSnrMax);
    ++used;
  }
  return acc / used;
}

std::pair<std::vector<double>, std::vector<double>> LpcFromFrame(
    const std::vector<double>& frame, int order) {
  const int len = static_cast<int>(frame.size());
  std::vector<double> r(order + 1, 0.0);
  for (int k = 0; k <= order; ++k)
    for (int n = 0; n + k < len; ++n) r[k] += frame[n] * frame[n + k];
  // Levinson-Durbin on x[n] ~ sum_k c_k x[n-k]; predictor polynomial 1 - sum c_k z^-k
  std::vector<double> c(order, 0.0), prev;
  double err = r[0];
  for (int i = 0; i < order; ++i) {
    double acc = r[i + 1];
    for (int k = 0; k < i; ++k) acc -= c[k] * r[i - k];
    const double refl = acc / std::max(err, kEps);
    prev.assign(c.begin(), c.begin() + i);
    c[i] = refl;
    for (int k = 0; k < i; ++k) c[k] = prev[k] - refl * prev[i - 1 - k];
    err *= 1.0 - refl * refl;
  }
  std::vector<double> a(order + 1, 1.0);
  for (int k = 0; k < order; ++k) a[k + 1] = -c[k];
  return {a, r};
}

double TrimmedMean(std::vector<double> values, double keep) {
  if (values.empty()) throw InvalidInput("trimmed mean of an empty set");
  std::sort(values.begin(), values.end());
  const auto n = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::llround(keep * static_cast<double>(values.size()))));
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += values[i];
  return acc / static_cast<double>(n);
}

double Llr(const Waveform& clean, const Waveform& est, const MetricsConfig& cfg) {
  CheckPair(clean, est, cfg, "llr");
  const auto win = HannWindow(cfg.frame);
  const int frames = FrameCount(clean.size(), cfg);
  std::vector<double> dist;
  for (int i = 0; i < frames; ++i) {
    const auto c = Frame(clean, i, win, cfg.hop);
    const auto e = Frame(est, i, win, cfg.hop);
    if (AllZero(c) || AllZero(e)) continue;
    const auto [a_clean, r_clean] = LpcFromFrame(c, cfg.lpc_order);
    const auto [a_est, r_est] = LpcFromFrame(e, cfg.lpc_order);
    const double num = ToeplitzForm(a_est, r_clean);
    const double den = ToeplitzForm(a_clean, r_clean);
    if (!(num > 0.0) || !(den > 0.0)) continue;
    dist.push_back(std::log(num / den));
  }
  if (dist.empty()) throw InvalidInput("llr: every frame is degenerate");
  return TrimmedMean(std::move(dist), cfg.keep_fraction);
}

double Wss(const Waveform& clean, const Waveform& est, const MetricsConfig& cfg) {
  CheckPair(clean, est, cfg, "wss");
  const auto win = HannWindow(cfg.frame);
  const int frames = FrameCount(clean.size(), cfg);
  const BandSetup bands = Bands(cfg.frame);
  Eigen::FFT<double> fft;
  std::vector<double> dist;
  for (int i = 0; i < frames; ++i) {
    const auto c = Frame(clean, i, win, cfg.hop);
    const auto e = Frame(est, i, win, cfg.hop);
    if (AllZero(c) || AllZero(e)) continue;
    const auto ec = BandLogEnergy(c, bands, fft);
    const auto ee = BandLogEnergy(e, bands, fft);
    const int nb = static_cast<int>(ec.size());
    std::vector<double> sc(nb - 1), se(nb - 1);
    for (int k = 0; k + 1 < nb; ++k) {
      sc[k] = ec[k + 1] - ec[k];
      se[k] = ee[k + 1] - ee[k];
    }
    const auto pc = LocalPeaks(sc, ec), pe = LocalPeaks(se, ee);
    const double max_c = *std::max_element(ec.begin(), ec.end());
    const double max_e = *std::max_element(ee.begin(), ee.end());
    double num = 0.0, den = 0.0;
    for (int k = 0; k + 1 < nb; ++k) {
      const double wc = kKmax / (kKmax + max_c - ec[k]) * kKlocmax / (kKlocmax + pc[k] - ec[k]);
      const double we = kKmax / (kKmax + max_e - ee[k]) * kKlocmax / (kKlocmax + pe[k] - ee[k]);
      const double w = 0.5 * (wc + we);
      num += w * (sc[k] - se[k]) * (sc[k] - se[k]);
      den += w;
    }
    dist.push_back(num / den);
  }
  if (dist.empty()) throw InvalidInput("wss: every frame is degenerate");
  return TrimmedMean(std::move(dist), cfg.keep_fraction);
}

CompositeScores Composite(double pesq, double llr, double wss, double segsnr) {
  auto clamp = [](double v) { return std::clamp(v, 1.0, 5.0); };
  CompositeScores s;
  s.csig = clamp(3.093 - 1.029 * llr + 0.603 * pesq - 0.009 * wss);
  s.cbak = clamp(1.634 + 0.478 * pesq - 0.007 * wss + 0.063 * segsnr);
  s.covl = clamp(1.594 + 0.805 * pesq - 0.512 * llr - 0.007 * wss);
  return s;
}

double RunPesq(const std::string& cmd_template, const std::filesystem::path& clean,
               const std::filesystem::path& est) {
  std::string cmd = cmd_template;
  auto substitute = [&](const std::string& key, const std::string& value) {
    for (std::size_t pos; (pos = cmd.find(key)) != std::string::npos;)
      cmd.replace(pos, key.size(), ShellQuote(value));
  };
  substitute("{clean}", clean.string());
  substitute("{est}", est.string());
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) throw Error("pesq: cannot start command");
  std::string out;
  std::array<char, 256> buf;
  while (std::fgets(buf.data(), buf.size(), pipe)) out += buf.data();
  const int status = pclose(pipe);
  if (status != 0) throw Error("pesq: command exited with status " + std::to_string(status));
  static const std::regex number(R"([-+]?(\d+\.?\d*|\.\d+)([eE][-+]?\d+)?)");
  std::string last;
  for (std::sregex_iterator it(out.begin(), out.end(), number), end; it != end; ++it)
    last = it->str();
  if (last.empty()) throw Error("pesq: command printed no number");
  const double v = std::stod(last);
  if (!(v >= -0.5 && v <= 4.5)) throw Error("pesq: score " + last + " outside [-0.5, 4.5]");
  return v;
}

void MetricsReport::Aggregate() {
  mean = UtteranceMetrics{};
  mean.file = "mean";
  failures = 0;
  int ok = 0, with_pesq = 0;
  double pesq = 0.0, csig = 0.0, cbak = 0.0, covl = 0.0;
  for (const auto& r : rows) {
    if (!r.error.empty()) {
      ++failures;
      continue;
    }
    ++ok;
    mean.segsnr += r.segsnr;
    mean.llr += r.llr;
    mean.wss += r.wss;
    if (r.pesq) {
      ++with_pesq;
      pesq += *r.pesq;
      csig += *r.csig;
      cbak += *r.cbak;
      covl += *r.covl;
    }
  }
  if (ok == 0) {
    mean.error = "no file scored";
    return;
  }
  mean.segsnr /= ok;
  mean.llr /= ok;
  mean.wss /= ok;
  if (with_pesq > 0) {
    mean.pesq = pesq / with_pesq;
    mean.csig = csig / with_pesq;
    mean.cbak = cbak / with_pesq;
    mean.covl = covl / with_pesq;
  }
}

std::string MetricsReport::ToCsv() const {
  std::ostringstream os;
  os << "file,segsnr,llr,wss,pesq,csig,cbak,covl\n";
  auto opt = [](const std::optional<double>& v) { return v ? FormatNumber(*v) : ""; };
  auto line = [&](const UtteranceMetrics& r) {
    os << r.file;
    if (r.error.empty())
      os << ',' << FormatNumber(r.segsnr) << ',' << FormatNumber(r.llr) << ','
         << FormatNumber(r.wss);
    else
      os << ",,,";
    os << ',' << opt(r.pesq) << ',' << opt(r.csig) << ',' << opt(r.cbak) << ','
       << opt(r.covl) << '\n';
  };
  for (const auto& r : rows) line(r);
  line(mean);
  return os.str();
}

MetricsReport MetricsReport::FromCsv(const std::string& text) {
  MetricsReport rep;
  std::istringstream is(text);
  std::string line;
  if (!std::getline(is, line) || line != "file,segsnr,llr,wss,pesq,csig,cbak,covl")
    throw FormatError("metrics report: unexpected header");
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ls(line);
    for (std::string cell; std::getline(ls, cell, ',');) f.push_back(cell);
    f.resize(8);
    UtteranceMetrics r;
    r.file = f[0];
    if (f[1].empty()) {
      r.error = "unscored";
    } else {
      r.segsnr = std::stod(f[1]);
      r.llr = std::stod(f[2]);
      r.wss = std::stod(f[3]);
    }
    auto opt = [](const std::string& s) {
      return s.empty() ? std::nullopt : std::optional<double>(std::stod(s));
    };
    r.pesq = opt(f[4]);
    r.csig = opt(f[5]);
    r.cbak = opt(f[6]);
    r.covl = opt(f[7]);
    if (r.file == "mean")
      rep.mean = r;
    else
      rep.rows.push_back(r);
  }
  for (const auto& r : rep.rows) rep.failures += !r.error.empty();
  return rep;
}

std::string MetricsReport::Summary() const {
  std::ostringstream os;
  const int scored = static_cast<int>(rows.size()) - failures;
  char buf[160];
  std::snprintf(buf, sizeof buf, "files: %zu scored, %d failed\n", rows.size() - failures,
                failures);
  os << buf;
  if (scored == 0) return os.str();
  std::snprintf(buf, sizeof buf, "segsnr %8.4f dB\nllr    %8.4f\nwss    %8.4f\n", mean.segsnr,
                mean.llr, mean.wss);
  os << buf;
  if (mean.pesq) {
    std::snprintf(buf, sizeof buf, "pesq   %8.4f\ncsig   %8.4f\ncbak   %8.4f\ncovl   %8.4f\n",
                  *mean.pesq, *mean.csig, *mean.cbak, *mean.covl);
    os << buf;
  }
  return os.str();
}

MetricsReport EvaluateCorpus(const std::vector<FilePair>& pairs, const MetricsConfig& cfg,
                             const std::function<void(const std::string&)>& warn) {
  cfg.Validate();
  if (pairs.empty()) throw InvalidInput("evaluate: empty corpus");
  MetricsReport rep;
  for (const auto& p : pairs) {
    UtteranceMetrics r;
    r.file = p.est.filename().string();
    try {
      auto clean = dsp::ReadWav(p.clean);
      auto est = dsp::ReadWav(p.est);
      const std::size_t n = std::min(clean.size(), est.size());
      const std::size_t diff = std::max(clean.size(), est.size()) - n;
      if (diff > static_cast<std::size_t>(cfg.hop) && warn)
        warn(r.file + ": lengths differ by " + std::to_string(diff) + " samples, trimming");
      clean.samples.resize(n);
      est.samples.resize(n);
      r.segsnr = SegSnr(clean, est, cfg);
      r.llr = Llr(clean, est, cfg);
      r.wss = Wss(clean, est, cfg);
      if (!cfg.pesq_cmd.empty()) {
        r.pesq = RunPesq(cfg.pesq_cmd, p.clean, p.est);
        const auto c = Composite(*r.pesq, r.llr, r.wss, r.segsnr);
        r.csig = c.csig;
        r.cbak = c.cbak;
        r.covl = c.covl;
      }
    } catch (const std::exception& e) {
      r = UtteranceMetrics{};
      r.file = p.est.filename().string();
      r.error = e.what();
      if (warn) warn(r.file + ": " + r.error);
    }
    rep.rows.push_back(std::move(r));
  }
  rep.Aggregate();
  return rep;
}

}  // namespace dargan::metrics
