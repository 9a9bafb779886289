// Copyright 2026 The dargan-cpp Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "dargan/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>

namespace dargan::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

std::string JoinKey(const std::string& parent, const std::string& key) {
  return parent.empty() ? key : parent + "." + key;
}

std::string Describe(const json& v) {
  if (v.is_number_unsigned() || v.is_number_integer()) return "integer " + v.dump();
  if (v.is_number_float()) return "number " + v.dump();
  return std::string(v.type_name());
}

// `def` supplies the accepted keys and the expected type of every value.
void CheckTree(const json& def, const json& val, const std::string& key) {
  const auto fail = [&](const std::string& want) {
    throw ConfigError("config: " + (key.empty() ? std::string("<root>") : key) +
                      ": expected " + want + ", got " + Describe(val));
  };
  if (def.is_object()) {
    if (!val.is_object()) fail("object");
    for (const auto& [k, v] : val.items()) {
      if (!def.contains(k)) throw ConfigError("config: unknown key '" + JoinKey(key, k) + "'");
      CheckTree(def.at(k), v, JoinKey(key, k));
    }
  } else if (def.is_array()) {
    if (!val.is_array()) fail("array");
    if (def.empty()) return;
    for (std::size_t i = 0; i < val.size(); ++i)
      CheckTree(def[0], val[i], key + "[" + std::to_string(i) + "]");
  } else if (def.is_boolean()) {
    if (!val.is_boolean()) fail("boolean");
  } else if (def.is_number_unsigned()) {
    if (!val.is_number_integer() || (!val.is_number_unsigned() && val.get<std::int64_t>() < 0))
      fail("non-negative integer");
  } else if (def.is_number_integer()) {
    if (!val.is_number_integer()) fail("integer");
  } else if (def.is_number_float()) {
    if (!val.is_number()) fail("number");
  } else if (def.is_string()) {
    if (!val.is_string()) fail("string");
  }
}

void MergeInto(json& base, const json& user) {
  for (const auto& [k, v] : user.items()) {
    if (v.is_object() && base.contains(k) && base[k].is_object())
      MergeInto(base[k], v);
    else
      base[k] = v;
  }
}

template <typename T>
T Section(const json& tree, const std::string& name) {
  try {
    return T::FromJson(tree.at(name));
  } catch (const json::exception& e) {
    throw ConfigError("config: " + name + ": " + e.what());
  } catch (const InvalidInput& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
}

json ReadConfigFile(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("config: cannot read " + path.string());
  try {
    json j = json::parse(is);
    if (!j.is_object()) throw ConfigError("config: " + path.string() + " is not an object");
    return j;
  } catch (const json::parse_error& e) {
    throw ConfigError("config: " + path.string() + ": " + e.what());
  }
}

void WriteFile(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::trunc);
  os << text;
  if (!os) throw IoError("cannot write " + path.string());
}

std::string Num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

std::vector<fs::path> WavFiles(const fs::path& dir) {
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".wav") out.push_back(e.path());
  std::sort(out.begin(), out.end());
  return out;
}

class Logger {
 public:
  void Open(const fs::path& path) {
    file_.open(path, std::ios::trunc);
    if (!file_) throw IoError("cannot write " + path.string());
  }
  void operator()(const std::string& line) {
    std::cout << line << '\n';
    if (file_.is_open()) file_ << line << '\n';
  }
  void FileOnly(const std::string& line) {
    if (file_.is_open()) file_ << line << '\n';
  }
  void Flush() {
    std::cout.flush();
    if (file_.is_open()) file_.flush();
  }

 private:
  std::ofstream file_;
};

// Runs after validation; everything with side effects lives here.
using Job = std::function<int(const RunConfig&, Logger&)>;

// --- mix ---

fs::path CorpusDir(const RunConfig& cfg) { return cfg.run_dir / "corpus"; }

int RunMix(const RunConfig& cfg, Logger& log) {
  const fs::path dir = CorpusDir(cfg);
  fs::remove_all(dir);
  const auto warn = [&](const std::string& w) { log("warning: " + w); };
  const auto full = data::SynthCorpus(cfg.data, "train", dir, warn);
  const auto [train, val] = data::SplitManifest(full, cfg.data.val_count,
                                                DeriveSeed(cfg.data.seed, 2));
  data::Manifest test{"test", dir, {}};
  if (cfg.data.n_test > 0) test = data::SynthCorpus(cfg.data, "test", dir, warn);
  for (const data::Manifest* m : {&train, &val, static_cast<const data::Manifest*>(&test)}) {
    m->Write(dir / ("manifest_" + m->split + ".jsonl"));
    for (const auto& e : m->entries)
      log(m->split + " " + e.id + " noise=" + e.noise + " snr=" + Num(e.snr_db) +
          " measured=" + Num(e.measured_snr_db));
  }
  log("mix: " + std::to_string(train.entries.size()) + " train, " +
      std::to_string(val.entries.size()) + " val, " + std::to_string(test.entries.size()) +
      " test utterances in " + dir.string());
  return kExitOk;
}

// --- train ---

data::Manifest ReadSplit(const RunConfig& cfg, const std::string& split) {
  return data::Manifest::Read(CorpusDir(cfg) / ("manifest_" + split + ".jsonl"), split);
}

void TrainPhase(const RunConfig& cfg, Logger& log) {
  const fs::path dir = cfg.run_dir / "ppp";
  fs::remove_all(dir);
  const auto g = train::LoadGenerator(cfg.run_dir / "gan" / "generator_best.arc");
  const fs::path pairs = dir / "pairs";
  for (const std::string split : {"train", "val", "test"}) {
    const fs::path manifest = CorpusDir(cfg) / ("manifest_" + split + ".jsonl");
    if (!fs::exists(manifest)) continue;
    const auto recs = data::BuildPppPairs(ReadSplit(cfg, split), g, pairs, cfg.dsp);
    log("ppp: built " + std::to_string(recs.size()) + " " + split + " pairs");
  }
  const auto train_pairs = data::LoadPppPairs(pairs / "ppp_train.jsonl");
  std::vector<phase::PppPair> val_pairs;
  if (fs::exists(pairs / "ppp_val.jsonl")) val_pairs = data::LoadPppPairs(pairs / "ppp_val.jsonl");

  std::ofstream jsonl(dir / "train_log.jsonl", std::ios::trunc);
  phase::Phi phi(*cfg.ppp);
  const auto res = phase::TrainPpp(phi, train_pairs, val_pairs, *cfg.ppp,
                                   [&](const phase::PppStepRecord& r) {
                                     jsonl << json{{"epoch", r.epoch},
                                                   {"step", r.step},
                                                   {"mae", r.mae}}.dump()
                                           << '\n';
                                     log("ppp step " + std::to_string(r.step) + " epoch " +
                                         std::to_string(r.epoch) + " mae=" + Num(r.mae));
                                   });
  for (std::size_t e = 0; e < res.val_mae.size(); ++e)
    log("ppp epoch " + std::to_string(e) + " val_mae=" + Num(res.val_mae[e]));
  phase::SavePhi(dir / "phi_best.arc", phi);
  log("ppp: best epoch " + std::to_string(res.best_epoch) + ", weights " +
      (dir / "phi_best.arc").string());
}

Job PrepareTrain(const RunConfig& cfg, bool resume) {
  for (const std::string split : {"train", "val"})
    if (!fs::exists(CorpusDir(cfg) / ("manifest_" + split + ".jsonl")))
      throw ConfigError("train: no " + split + " manifest under " + CorpusDir(cfg).string() +
                        " (run mix first)");
  return [resume](const RunConfig& cfg, Logger& log) {
    const auto train_set = data::LoadUtterances(ReadSplit(cfg, "train"), cfg.dsp);
    const auto val_set = data::LoadUtterances(ReadSplit(cfg, "val"), cfg.dsp);
    log("train: " + std::to_string(train_set.size()) + " train, " +
        std::to_string(val_set.size()) + " val utterances");
    gen::Generator g(cfg.generator);
    disc::Discriminator d(cfg.discriminator);
    const train::TrainIo io{cfg.run_dir / "gan", resume};
    const auto res = train::TrainGan(
        g, d, train_set, val_set, cfg.training, &io,
        [&](const train::StepRecord& r) {
          log("step " + std::to_string(r.step) + " epoch " + std::to_string(r.epoch) +
              " d_loss=" + Num(r.d_loss) + " g_adv=" + Num(r.g_adv) + " g_l1=" + Num(r.g_l1) +
              " lr_g=" + Num(r.lr_g) + " lr_d=" + Num(r.lr_d));
        },
        [&](const train::EpochRecord& r) {
          log("epoch " + std::to_string(r.epoch) + " val_l1=" + Num(r.val_loss) + " action=" +
              train::ActionName(r.action) + " lr_g=" + Num(r.lr_g) + " lr_d=" + Num(r.lr_d));
        });
    log("train: best epoch " + std::to_string(res.best_epoch) + " val_l1=" +
        Num(res.best_val) + ", generator " + (io.run_dir / "generator_best.arc").string());
    if (cfg.ppp) TrainPhase(cfg, log);
    return kExitOk;
  };
}

// --- enhance ---

struct EnhanceOptions {
  std::string input, out, checkpoint, ppp_weights;
  int ppp_iters = -1;  // -1: the weights' trained iteration count, or none
};

Job PrepareEnhance(const RunConfig& cfg, EnhanceOptions opt) {
  if (!fs::exists(opt.input)) throw ConfigError("enhance: input " + opt.input + " not found");
  if (opt.checkpoint.empty())
    opt.checkpoint = (cfg.run_dir / "gan" / "generator_best.arc").string();
  if (!fs::is_regular_file(opt.checkpoint))
    throw ConfigError("enhance: generator checkpoint " + opt.checkpoint + " not found");
  if (!opt.ppp_weights.empty() && !fs::is_regular_file(opt.ppp_weights))
    throw ConfigError("enhance: ppp weights " + opt.ppp_weights + " not found");
  if (opt.ppp_iters < -1) throw ConfigError("enhance: --ppp-iters must be >= 0");
  if (opt.out.empty()) opt.out = (cfg.run_dir / "enhanced").string();
  std::vector<fs::path> inputs;
  if (fs::is_directory(opt.input)) {
    inputs = WavFiles(opt.input);
    if (inputs.empty()) throw ConfigError("enhance: no .wav files in " + opt.input);
    if (fs::exists(opt.out) && fs::equivalent(opt.input, opt.out))
      throw ConfigError("enhance: --out must differ from the input directory");
  } else {
    inputs.push_back(opt.input);
  }
  return [opt, inputs](const RunConfig& cfg, Logger& log) {
    const auto g = train::LoadGenerator(opt.checkpoint);
    std::optional<phase::Phi> phi;
    if (!opt.ppp_weights.empty()) phi.emplace(phase::LoadPhi(opt.ppp_weights));
    const int iters = opt.ppp_iters >= 0 ? opt.ppp_iters : (phi ? phi->config().iterations : 0);
    log("enhance: " + std::to_string(inputs.size()) + " file(s), phase " +
        (iters == 0 ? std::string("noisy") : (phi ? "deep" : "griffin-lim") +
                                                 std::string(" x") + std::to_string(iters)));
    fs::create_directories(opt.out);
    for (const auto& in : inputs) {
      const auto wave = dsp::ReadWav(in);
      const auto noisy = dsp::Stft(wave, cfg.dsp);
      const auto amp = g.Enhance(dsp::Magnitude(noisy)).back();
      const auto spec = phase::EnhancePhase(amp.data, noisy, phi ? &*phi : nullptr, iters);
      const auto out = dsp::Istft(spec, cfg.dsp, wave.size());
      dsp::WriteWav(fs::path(opt.out) / in.filename(), out);
      log("enhanced " + in.filename().string());
    }
    return kExitOk;
  };
}

// --- evaluate ---

struct EvaluateOptions {
  std::string clean, est, noisy, out, pesq_cmd;
  bool plots = false;
};

Job PrepareEvaluate(const RunConfig& cfg, EvaluateOptions opt) {
  for (const auto* d : {&opt.clean, &opt.est})
    if (!fs::is_directory(*d)) throw ConfigError("evaluate: directory " + *d + " not found");
  if (opt.plots && opt.noisy.empty()) throw ConfigError("evaluate: --plots needs --noisy");
  if (opt.plots && !fs::is_directory(opt.noisy))
    throw ConfigError("evaluate: directory " + opt.noisy + " not found");
  if (opt.out.empty()) opt.out = (cfg.run_dir / "eval").string();
  const auto files = WavFiles(opt.clean);
  if (files.empty()) throw ConfigError("evaluate: no .wav files in " + opt.clean);
  return [opt, files](const RunConfig& cfg, Logger& log) {
    metrics::MetricsConfig mcfg = cfg.metrics;
    if (!opt.pesq_cmd.empty()) mcfg.pesq_cmd = opt.pesq_cmd;
    std::vector<metrics::FilePair> pairs;
    for (const auto& c : files) pairs.push_back({c, fs::path(opt.est) / c.filename()});
    auto report = metrics::EvaluateCorpus(pairs, mcfg,
                                          [&](const std::string& w) { log("warning: " + w); });
    const fs::path out(opt.out);
    fs::create_directories(out);
    WriteFile(out / "metrics.csv", report.ToCsv());
    const std::string summary = report.Summary();
    WriteFile(out / "summary.txt", summary);
    std::istringstream lines(summary);
    for (std::string line; std::getline(lines, line);) log(line);

    if (opt.plots) {
      fs::create_directories(out / "plots");
      for (const auto& c : files) {
        const fs::path n = fs::path(opt.noisy) / c.filename(), e = fs::path(opt.est) / c.filename();
        try {
          std::vector<dsp::MagnitudeSpectrogram> panels;
          for (const auto& p : {c, n, e})
            panels.push_back(dsp::Magnitude(dsp::Stft(dsp::ReadWav(p), cfg.dsp)));
          const fs::path img = out / "plots" / (c.stem().string() + ".ppm");
          WriteSpectrogramPpm(img, panels);
          log("plot " + img.string());
        } catch (const Error& err) {
          log("warning: no plot for " + c.filename().string() + ": " + err.what());
        }
      }
    }
    return report.failures > 0 ? kExitRuntime : kExitOk;
  };
}

std::array<double, 3> Colour(double t) {
  // black, purple, red, yellow, white
  static const double stops[5][3] = {
      {0, 0, 0}, {0.35, 0.05, 0.55}, {0.85, 0.2, 0.2}, {1.0, 0.85, 0.1}, {1, 1, 1}};
  t = std::clamp(t, 0.0, 1.0) * 4.0;
  const int i = std::min(3, static_cast<int>(t));
  const double f = t - i;
  return {stops[i][0] + f * (stops[i + 1][0] - stops[i][0]),
          stops[i][1] + f * (stops[i + 1][1] - stops[i][1]),
          stops[i][2] + f * (stops[i + 1][2] - stops[i][2])};
}

}  // namespace

// --- config ---

void RunConfig::Validate() const {
  dsp.Validate();
  generator.Validate();
  discriminator.Validate();
  training.Validate();
  if (ppp) ppp->Validate();
  data.Validate();
  metrics.Validate();
  if (discriminator.input_bins != dsp.bins())
    throw ConfigError("config: discriminator.input_bins is " +
                      std::to_string(discriminator.input_bins) + " but dsp gives " +
                      std::to_string(dsp.bins()) + " bins");
  if (run_dir.empty()) throw ConfigError("config: run_dir must not be empty");
}

json RunConfig::ToJson() const {
  json j = {{"dsp", dsp.ToJson()},
            {"generator", generator.ToJson()},
            {"discriminator", discriminator.ToJson()},
            {"training", training.ToJson()},
            {"data", data.ToJson()},
            {"metrics", metrics.ToJson()},
            {"run_dir", run_dir.string()},
            {"seed", seed}};
  if (ppp) j["ppp"] = ppp->ToJson();
  return j;
}

json DefaultTree() {
  RunConfig c;
  c.ppp = phase::PppConfig{};
  return c.ToJson();
}

void ApplyOverride(json& tree, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0)
    throw ConfigError("config: override '" + assignment + "' is not key=value");
  const std::string key = assignment.substr(0, eq), text = assignment.substr(eq + 1);
  std::vector<std::string> parts;
  std::stringstream ss(key);
  for (std::string p; std::getline(ss, p, '.');) {
    if (p.empty()) throw ConfigError("config: malformed key '" + key + "'");
    parts.push_back(p);
  }
  if (key.back() == '.') throw ConfigError("config: malformed key '" + key + "'");
  json value = json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;
  json* node = &tree;
  for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
    json& child = (*node)[parts[i]];
    if (child.is_null()) child = json::object();
    if (!child.is_object())
      throw ConfigError("config: '" + key + "': " + parts[i] + " is not a section");
    node = &child;
  }
  (*node)[parts.back()] = value;
}

RunConfig ResolveConfig(const json& user, const char* env_run_dir) {
  const json def = DefaultTree();
  CheckTree(def, user, "");
  json tree = def;
  MergeInto(tree, user);

  RunConfig c;
  c.seed = tree.at("seed").get<std::uint64_t>();
  const std::pair<const char*, std::uint64_t> seeded[] = {
      {"generator", 1}, {"discriminator", 2}, {"training", 3}, {"ppp", 4}, {"data", 5}};
  for (const auto& [name, idx] : seeded)
    if (!user.contains(name) || !user.at(name).contains("seed"))
      tree[name]["seed"] = DeriveSeed(c.seed, idx);

  c.dsp = Section<dsp::StftConfig>(tree, "dsp");
  c.generator = Section<gen::GeneratorConfig>(tree, "generator");
  c.discriminator = Section<disc::DiscriminatorConfig>(tree, "discriminator");
  c.training = Section<train::GanTrainConfig>(tree, "training");
  if (user.contains("ppp")) c.ppp = Section<phase::PppConfig>(tree, "ppp");
  c.data = Section<data::CorpusConfig>(tree, "data");
  c.metrics = Section<metrics::MetricsConfig>(tree, "metrics");
  c.run_dir = tree.at("run_dir").get<std::string>();
  if (env_run_dir && *env_run_dir) c.run_dir = env_run_dir;
  try {
    c.Validate();
  } catch (const InvalidInput& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  return c;
}

void WriteSpectrogramPpm(const fs::path& path,
                         const std::vector<dsp::MagnitudeSpectrogram>& panels) {
  if (panels.empty()) throw InvalidInput("plot: no panels");
  constexpr int kGap = 2;
  constexpr double kRangeDb = 80.0;
  int width = 0, bins = panels[0].bins();
  double top = -1e300;
  for (const auto& p : panels) {
    if (p.bins() != bins) throw InvalidInput("plot: panels differ in bin count");
    width = std::max(width, p.frames());
    for (Eigen::Index i = 0; i < p.data.size(); ++i)
      top = std::max(top, 20.0 * std::log10(std::max(p.data(i), 1e-10)));
  }
  if (width == 0) throw InvalidInput("plot: empty spectrogram");
  const int height = static_cast<int>(panels.size()) * (bins + kGap) - kGap;
  std::vector<unsigned char> px(static_cast<std::size_t>(width) * height * 3, 128);
  for (std::size_t k = 0; k < panels.size(); ++k) {
    const auto& p = panels[k];
    const int y0 = static_cast<int>(k) * (bins + kGap);
    for (int f = 0; f < bins; ++f) {
      const int y = y0 + bins - 1 - f;
      for (int t = 0; t < width; ++t) {
        double v = 0.0;
        if (t < p.frames())
          v = (20.0 * std::log10(std::max(p.data(t, f), 1e-10)) - (top - kRangeDb)) / kRangeDb;
        const auto rgb = Colour(v);
        for (int c = 0; c < 3; ++c)
          px[(static_cast<std::size_t>(y) * width + t) * 3 + c] =
              static_cast<unsigned char>(std::lround(255.0 * rgb[c]));
      }
    }
  }
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  os << "P6\n" << width << ' ' << height << "\n255\n";
  os.write(reinterpret_cast<const char*>(px.data()), static_cast<std::streamsize>(px.size()));
  if (!os) throw IoError("cannot write " + path.string());
}

int Main(int argc, const char* const* argv) {
  CLI::App app{"DARGAN speech enhancement: corpus synthesis, training, enhancement, evaluation"};
  app.name("dargan");
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> sets;
  const auto common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "JSON run configuration");
    sub->add_option("--set", sets, "override a config value, e.g. --set training.epochs=5")
        ->take_all();
  };

  auto* mix = app.add_subcommand("mix", "synthesize the train/val/test corpus");
  common(mix);

  bool resume = false;
  auto* train_cmd = app.add_subcommand("train", "train the GAN, then the phase denoiser");
  common(train_cmd);
  train_cmd->add_flag("--resume", resume, "continue from the newest checkpoint");

  EnhanceOptions eopt;
  auto* enhance = app.add_subcommand("enhance", "enhance a WAV file or directory");
  common(enhance);
  enhance->add_option("--input", eopt.input, "WAV file or directory")->required();
  enhance->add_option("--out", eopt.out, "output directory");
  enhance->add_option("--checkpoint", eopt.checkpoint, "generator archive");
  enhance->add_option("--ppp-weights", eopt.ppp_weights, "phase denoiser archive");
  enhance->add_option("--ppp-iters", eopt.ppp_iters, "phase iterations");

  EvaluateOptions vopt;
  auto* evaluate = app.add_subcommand("evaluate", "score enhanced files against clean ones");
  common(evaluate);
  evaluate->add_option("--clean", vopt.clean, "clean WAV directory")->required();
  evaluate->add_option("--est", vopt.est, "enhanced WAV directory")->required();
  evaluate->add_option("--noisy", vopt.noisy, "noisy WAV directory (plots)");
  evaluate->add_option("--out", vopt.out, "report directory");
  evaluate->add_option("--pesq-cmd", vopt.pesq_cmd, "PESQ command with {clean} and {est}");
  evaluate->add_flag("--plots", vopt.plots, "write spectrogram comparison images");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitValidation;
  }

  const std::string cmd = app.get_subcommands().front()->get_name();
  const char* env = std::getenv(kRunDirEnv);
  RunConfig cfg;
  Job job;
  try {
    json user = json::object();
    if (!config_path.empty()) {
      user = ReadConfigFile(config_path);
    } else {
      // no --config: reuse the configuration stored in the run directory
      json probe = json::object();
      for (const auto& s : sets) ApplyOverride(probe, s);
      const fs::path stored = ResolveConfig(probe, env).run_dir / "config.json";
      if (fs::is_regular_file(stored)) user = ReadConfigFile(stored);
    }
    for (const auto& s : sets) ApplyOverride(user, s);
    cfg = ResolveConfig(user, env);
    if (cmd == "mix")
      job = RunMix;
    else if (cmd == "train")
      job = PrepareTrain(cfg, resume);
    else if (cmd == "enhance")
      job = PrepareEnhance(cfg, eopt);
    else
      job = PrepareEvaluate(cfg, vopt);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitValidation;
  }

  Logger log;
  try {
    fs::create_directories(cfg.run_dir);
    WriteFile(cfg.run_dir / "config.json", cfg.ToJson().dump(2) + "\n");
    log.Open(cfg.run_dir / (cmd + ".log"));
    const int rc = job(cfg, log);
    log.Flush();
    return rc;
  } catch (const std::exception& e) {
    log.FileOnly(std::string("error: ") + e.what());
    log.Flush();
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
}

}  // namespace dargan::cli
