// Copyright 2026 The dargan-cpp Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "dargan/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

namespace dargan::train {
namespace {

using nn::Constant;
using nn::Tensor;
using nn::Var;

nlohmann::json Finite(double v) {
  return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr);
}

double LossMeanSquare(const std::vector<Var>& scores, double target) {
  double acc = 0.0;
  for (const auto& s : scores) acc += (s.item() - target) * (s.item() - target);
  return acc / static_cast<double>(scores.size());
}

// mean over the batch of (s - target)^2, as a graph node
Var MeanSquareTo(const std::vector<Var>& scores, double target) {
  Var acc;
  for (const auto& s : scores) {
    const Var term = nn::Square(nn::AddScalar(s, -target));
    acc = acc ? nn::Add(acc, term) : term;
  }
  return nn::Scale(acc, 1.0 / static_cast<double>(scores.size()));
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

std::vector<double> FullMask(int frames) { return std::vector<double>(frames, 1.0); }

std::string CheckpointName(int epoch) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "epoch_%04d.arc", epoch);
  return buf;
}

// Guards the gradient flag of a parameter set for one scope.
class GradScope {
 public:
  GradScope(nn::ParamSet& ps, bool on) : ps_(ps) { ps_.SetRequiresGrad(on); }
  ~GradScope() { ps_.SetRequiresGrad(true); }

 private:
  nn::ParamSet& ps_;
};

}  // namespace

void GanTrainConfig::Validate() const {
  if (!(lambda_g > 0.0)) throw InvalidInput("training: lambda_g must be > 0");
  if (!(lr_g > 0.0) || !(lr_d > 0.0))
    throw InvalidInput("training: learning rates must be > 0");
  if (epochs < 1) throw InvalidInput("training: epochs must be >= 1");
  if (batch < 1) throw InvalidInput("training: batch must be >= 1");
  if (halve_patience < 1 || stop_patience < 1)
    throw InvalidInput("training: patience values must be >= 1");
  if (halve_patience >= stop_patience)
    throw InvalidInput("training: halve_patience must be < stop_patience");
}

nlohmann::json GanTrainConfig::ToJson() const {
  return {{"lambda_g", lambda_g},
          {"lr_g", lr_g},
          {"lr_d", lr_d},
          {"epochs", epochs},
          {"batch", batch},
          {"halve_patience", halve_patience},
          {"stop_patience", stop_patience},
          {"seed", seed}};
}

GanTrainConfig GanTrainConfig::FromJson(const nlohmann::json& j) {
  GanTrainConfig c;
  c.lambda_g = j.at("lambda_g").get<double>();
  c.lr_g = j.at("lr_g").get<double>();
  c.lr_d = j.at("lr_d").get<double>();
  c.epochs = j.at("epochs").get<int>();
  c.batch = j.at("batch").get<int>();
  c.halve_patience = j.at("halve_patience").get<int>();
  c.stop_patience = j.at("stop_patience").get<int>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.Validate();
  return c;
}

Var DLoss(const std::vector<Var>& d_real, const std::vector<Var>& d_fake) {
  if (d_real.empty() || d_fake.empty())
    throw InvalidInput("d_loss: empty score batch");
  if (d_real.size() != d_fake.size())
    throw InvalidInput("d_loss: real and fake batches differ in size");
  return nn::Add(MeanSquareTo(d_real, 1.0), MeanSquareTo(d_fake, 0.0));
}

double DLossValue(const std::vector<double>& d_real, const std::vector<double>& d_fake) {
  std::vector<Var> r, f;
  for (double v : d_real) r.push_back(Constant(Tensor({1}, v)));
  for (double v : d_fake) f.push_back(Constant(Tensor({1}, v)));
  return DLoss(r, f).item();
}

GLossParts GLoss(const std::vector<Var>& d_fake, const Var& est, const Tensor& target,
                 const std::vector<double>& mask, double lambda_g) {
  if (d_fake.empty()) throw InvalidInput("g_loss: empty score batch");
  GLossParts p;
  p.adv = MeanSquareTo(d_fake, 1.0);
  p.l1 = nn::MaskedL1(est, target, mask);
  p.total = nn::Add(p.adv, nn::Scale(p.l1, lambda_g));
  return p;
}

std::string ActionName(LrAction a) {
  switch (a) {
    case LrAction::kContinue: return "continue";
    case LrAction::kHalve: return "halve";
    case LrAction::kStop: return "stop";
  }
  return "?";
}

nlohmann::json LrScheduleState::ToJson() const {
  return {{"prev_val", prev_val ? Finite(*prev_val) : nlohmann::json(nullptr)},
          {"best_val", Finite(best_val)},
          {"consec_increments", consec_increments},
          {"lr_g", lr_g},
          {"lr_d", lr_d}};
}

LrScheduleState LrScheduleState::FromJson(const nlohmann::json& j) {
  LrScheduleState s;
  if (!j.at("prev_val").is_null()) s.prev_val = j.at("prev_val").get<double>();
  if (!j.at("best_val").is_null()) s.best_val = j.at("best_val").get<double>();
  s.consec_increments = j.at("consec_increments").get<int>();
  s.lr_g = j.at("lr_g").get<double>();
  s.lr_d = j.at("lr_d").get<double>();
  return s;
}

LrScheduleState InitialSchedule(const GanTrainConfig& cfg) {
  LrScheduleState s;
  s.lr_g = cfg.lr_g;
  s.lr_d = cfg.lr_d;
  return s;
}

LrAction LrScheduleUpdate(LrScheduleState& state, double new_val_loss,
                          const GanTrainConfig& cfg) {
  if (state.prev_val && new_val_loss > *state.prev_val)
    ++state.consec_increments;
  else
    state.consec_increments = 0;
  state.prev_val = new_val_loss;
  state.best_val = std::min(state.best_val, new_val_loss);
  if (state.consec_increments >= cfg.stop_patience) return LrAction::kStop;
  if (state.consec_increments > 0 && state.consec_increments % cfg.halve_patience == 0) {
    state.lr_g *= 0.5;
    state.lr_d *= 0.5;
    return LrAction::kHalve;
  }
  return LrAction::kContinue;
}

PaddedBatch PadAndMask(const std::vector<const Utterance*>& utts) {
  if (utts.empty()) throw InvalidInput("pad_and_mask: empty utterance list");
  const int bins = utts[0]->noisy.bins();
  int t_max = 0;
  for (const auto* u : utts) {
    if (u->noisy.bins() != bins || u->clean.bins() != bins)
      throw InvalidInput("pad_and_mask: inconsistent bin counts in batch");
    if (u->noisy.frames() != u->clean.frames())
      throw InvalidInput("pad_and_mask: noisy/clean frame counts differ for " + u->id);
    if (u->noisy.frames() < 1) throw InvalidInput("pad_and_mask: empty utterance " + u->id);
    t_max = std::max(t_max, u->noisy.frames());
  }
  const int n = static_cast<int>(utts.size());
  PaddedBatch b;
  b.mags = Tensor({n, 1, t_max, bins});
  b.targets = Tensor({n, 1, t_max, bins});
  b.mask.assign(static_cast<std::size_t>(n) * t_max, 0.0);
  const std::size_t plane = static_cast<std::size_t>(t_max) * bins;
  for (int i = 0; i < n; ++i) {
    const auto& u = *utts[i];
    const int t = u.noisy.frames();
    std::copy_n(u.noisy.data.data(), u.noisy.data.size(), b.mags.data.data() + i * plane);
    std::copy_n(u.clean.data.data(), u.clean.data.size(), b.targets.data.data() + i * plane);
    std::fill_n(b.mask.begin() + static_cast<std::size_t>(i) * t_max, t, 1.0);
    b.lengths.push_back(t);
  }
  return b;
}

GanTrainer::GanTrainer(gen::Generator& g, disc::Discriminator& d, GanTrainConfig cfg)
    : g_(g),
      d_(d),
      cfg_(std::move(cfg)),
      adam_g_(g.params(), nn::AdamOptions{cfg_.lr_g}),
      adam_d_(d.params(), nn::AdamOptions{cfg_.lr_d}),
      schedule_(InitialSchedule(cfg_)) {
  cfg_.Validate();
  g_.params().SetRequiresGrad(true);
  d_.params().SetRequiresGrad(true);
}

StepRecord GanTrainer::Step(const PaddedBatch& batch) {
  adam_g_.set_lr(schedule_.lr_g);
  adam_d_.set_lr(schedule_.lr_d);
  const auto ests = g_.Forward(Constant(batch.mags));
  const Var& est = ests.back();

  // D step on the detached estimate.
  d_.PowerIterate(d_.config().sn_power_iters);
  const auto real = d_.ScoreBatch(Constant(batch.targets), batch.lengths);
  const auto fake_detached = d_.ScoreBatch(Constant(est.value()), batch.lengths);
  const Var dl = DLoss(real, fake_detached);
  d_.params().ZeroGrad();
  nn::Backward(dl);

  // G step through the freshly updated D.
  const double d_value = dl.item();
  if (!std::isfinite(d_value)) {
    std::ostringstream os;
    os << "training diverged at epoch " << epoch_ << ", step " << step_
       << ": d_loss=" << d_value;
    throw DivergenceError(os.str());
  }
  adam_d_.Step();

  GLossParts gl;
  {
    GradScope frozen(d_.params(), false);
    const auto fake = d_.ScoreBatch(est, batch.lengths);
    gl = GLoss(fake, est, batch.targets, batch.mask, cfg_.lambda_g);
    g_.params().ZeroGrad();
    nn::Backward(gl.total);
  }
  StepRecord rec{epoch_, step_, d_value, gl.adv.item(), gl.l1.item(),
                 schedule_.lr_g, schedule_.lr_d};
  if (!std::isfinite(rec.g_adv) || !std::isfinite(rec.g_l1)) {
    std::ostringstream os;
    os << "training diverged at epoch " << epoch_ << ", step " << step_
       << ": d_loss=" << rec.d_loss << " g_adv=" << rec.g_adv << " g_l1=" << rec.g_l1;
    throw DivergenceError(os.str());
  }
  adam_g_.Step();
  if (!g_.params().AllFinite() || !d_.params().AllFinite()) {
    std::ostringstream os;
    os << "training diverged at epoch " << epoch_ << ", step " << step_
       << ": non-finite parameters after update (d_loss=" << rec.d_loss
       << " g_adv=" << rec.g_adv << " g_l1=" << rec.g_l1 << ")";
    throw DivergenceError(os.str());
  }
  ++step_;
  return rec;
}

LossValues GanTrainer::Evaluate(const PaddedBatch& batch) const {
  GradScope g_off(g_.params(), false);
  GradScope d_off(d_.params(), false);
  const Var est = g_.Forward(Constant(batch.mags)).back();
  const auto real = d_.ScoreBatch(Constant(batch.targets), batch.lengths);
  const auto fake = d_.ScoreBatch(est, batch.lengths);
  LossValues v;
  v.d_loss = LossMeanSquare(real, 1.0) + LossMeanSquare(fake, 0.0);
  const auto gl = GLoss(fake, est, batch.targets, batch.mask, cfg_.lambda_g);
  v.g_adv = gl.adv.item();
  v.g_l1 = gl.l1.item();
  v.g_total = gl.total.item();
  return v;
}

double GanTrainer::ValidationLoss(const std::vector<Utterance>& val) const {
  if (val.empty()) throw InvalidInput("validation: empty set");
  GradScope off(g_.params(), false);
  double acc = 0.0;
  for (const auto& u : val) {
    const Var est = g_.Forward(Constant(gen::ToTensor(u.noisy))).back();
    acc += nn::MaskedL1(est, gen::ToTensor(u.clean), FullMask(u.noisy.frames())).item();
  }
  return acc / static_cast<double>(val.size());
}

void GanTrainer::SaveState(Archive& ar) const {
  ar.PutParams(g_.params());
  ar.PutParams(d_.params());
  ar.PutGroup("adam_g", adam_g_.State());
  ar.PutGroup("adam_d", adam_d_.State());
  ar.header["step"] = step_;
  ar.header["schedule"] = schedule_.ToJson();
}

void GanTrainer::LoadState(const Archive& ar) {
  ar.GetParams(g_.params());
  ar.GetParams(d_.params());
  adam_g_.LoadState(ar.GetGroup("adam_g"));
  adam_d_.LoadState(ar.GetGroup("adam_d"));
  step_ = ar.header.at("step").get<long>();
  schedule_ = LrScheduleState::FromJson(ar.header.at("schedule"));
}

nlohmann::json ToJson(const StepRecord& r) {
  return {{"type", "step"},        {"epoch", r.epoch},   {"step", r.step},
          {"d_loss", Finite(r.d_loss)}, {"g_adv", Finite(r.g_adv)},
          {"g_l1", Finite(r.g_l1)}, {"lr_g", r.lr_g},     {"lr_d", r.lr_d},
          {"val_loss", nullptr},   {"action", nullptr}};
}

nlohmann::json ToJson(const EpochRecord& r) {
  return {{"type", "epoch"},   {"epoch", r.epoch},    {"step", r.step},
          {"d_loss", nullptr}, {"g_adv", nullptr},    {"g_l1", nullptr},
          {"lr_g", r.lr_g},    {"lr_d", r.lr_d},      {"val_loss", Finite(r.val_loss)},
          {"action", ActionName(r.action)}};
}

void SaveGenerator(const std::filesystem::path& path, const gen::Generator& g) {
  Archive ar;
  ar.header = {{"kind", "generator"}, {"generator", g.config().ToJson()}};
  ar.PutParams(g.params());
  SaveArchive(path, ar);
}

gen::Generator LoadGenerator(const std::filesystem::path& path) {
  const Archive ar = LoadArchive(path);
  if (!ar.header.contains("generator"))
    throw FormatError(path.string() + ": archive has no generator config");
  gen::Generator g(gen::GeneratorConfig::FromJson(ar.header.at("generator")));
  ar.GetParams(g.params());
  return g;
}

namespace {

struct RunFiles {
  std::filesystem::path ckpt_dir, log, best;
};

RunFiles Files(const TrainIo& io) {
  return {io.run_dir / "checkpoints", io.run_dir / "train_log.jsonl",
          io.run_dir / "checkpoints" / "best.txt"};
}

std::optional<std::filesystem::path> NewestCheckpoint(const std::filesystem::path& dir) {
  if (!std::filesystem::exists(dir)) return std::nullopt;
  std::optional<std::filesystem::path> newest;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    const auto name = e.path().filename().string();
    if (name.rfind("epoch_", 0) == 0 && e.path().extension() == ".arc" &&
        (!newest || name > newest->filename().string()))
      newest = e.path();
  }
  return newest;
}

// Keeps log lines whose epoch is <= last_epoch.
void TruncateLog(const std::filesystem::path& log, int last_epoch) {
  if (!std::filesystem::exists(log)) return;
  std::ifstream is(log);
  std::vector<std::string> keep;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line, nullptr, false);
    if (!j.is_discarded() && j.value("epoch", 0) <= last_epoch) keep.push_back(line);
  }
  is.close();
  std::ofstream os(log, std::ios::trunc);
  for (const auto& l : keep) os << l << '\n';
}

void WriteText(const std::filesystem::path& path, const std::string& text) {
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream os(tmp, std::ios::trunc);
    if (!os) throw IoError("cannot write " + tmp.string());
    os << text << '\n';
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace

GanTrainResult TrainGan(gen::Generator& g, disc::Discriminator& d,
                        const std::vector<Utterance>& train,
                        const std::vector<Utterance>& val, const GanTrainConfig& cfg,
                        const TrainIo* io,
                        const std::function<void(const StepRecord&)>& on_step,
                        const std::function<void(const EpochRecord&)>& on_epoch) {
  cfg.Validate();
  if (train.empty()) throw InvalidInput("training: empty training set");
  const std::vector<Utterance>& val_set = val.empty() ? train : val;
  GanTrainer trainer(g, d, cfg);
  GanTrainResult result;
  result.best_val = std::numeric_limits<double>::infinity();
  std::vector<Tensor> best_params = Snapshot(g.params());
  int start_epoch = 0;
  bool stopped = false;

  std::ofstream log;
  std::optional<RunFiles> files;
  if (io) {
    files = Files(*io);
    std::filesystem::create_directories(files->ckpt_dir);
    if (io->resume) {
      if (const auto newest = NewestCheckpoint(files->ckpt_dir)) {
        const Archive ar = LoadArchive(*newest);
        trainer.LoadState(ar);
        start_epoch = ar.header.at("epoch").get<int>() + 1;
        result.best_epoch = ar.header.at("best_epoch").get<int>();
        stopped = ar.header.value("stopped", false);
        if (result.best_epoch >= 0) {
          result.best_val = ar.header.at("best_val").get<double>();
          const Archive best = LoadArchive(files->ckpt_dir / CheckpointName(result.best_epoch));
          gen::Generator tmp(g.config());
          best.GetParams(tmp.params());
          best_params = Snapshot(tmp.params());
        }
        TruncateLog(files->log, start_epoch - 1);
      }
    } else {
      for (const auto& e : std::filesystem::directory_iterator(files->ckpt_dir))
        std::filesystem::remove(e.path());
      std::filesystem::remove(files->log);
    }
    log.open(files->log, std::ios::app);
    if (!log) throw IoError("cannot write " + files->log.string());
  }

  std::vector<std::size_t> order(train.size());
  for (int epoch = start_epoch; epoch < cfg.epochs && !stopped; ++epoch) {
    trainer.set_epoch(epoch);
    std::iota(order.begin(), order.end(), 0);
    Rng rng(DeriveSeed(cfg.seed, static_cast<std::uint64_t>(epoch)));
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.Below(i)]);
    for (std::size_t start = 0; start < order.size(); start += cfg.batch) {
      std::vector<const Utterance*> members;
      for (std::size_t b = start; b < std::min(order.size(), start + cfg.batch); ++b)
        members.push_back(&train[order[b]]);
      const StepRecord rec = trainer.Step(PadAndMask(members));
      result.steps.push_back(rec);
      if (log.is_open()) log << ToJson(rec).dump() << '\n';
      if (on_step) on_step(rec);
    }

    EpochRecord er;
    er.epoch = epoch;
    er.step = trainer.steps();
    er.val_loss = trainer.ValidationLoss(val_set);
    if (!std::isfinite(er.val_loss))
      throw DivergenceError("validation loss is non-finite at epoch " + std::to_string(epoch));
    if (er.val_loss < result.best_val) {
      result.best_val = er.val_loss;
      result.best_epoch = epoch;
      best_params = Snapshot(g.params());
    }
    er.action = LrScheduleUpdate(trainer.schedule(), er.val_loss, cfg);
    er.lr_g = trainer.schedule().lr_g;
    er.lr_d = trainer.schedule().lr_d;
    stopped = er.action == LrAction::kStop;
    result.epochs.push_back(er);

    if (io) {
      log << ToJson(er).dump() << '\n';
      log.flush();
      Archive ar;
      ar.header = {{"kind", "gan_checkpoint"},
                   {"epoch", epoch},
                   {"best_epoch", result.best_epoch},
                   {"best_val", Finite(result.best_val)},
                   {"stopped", stopped},
                   {"generator", g.config().ToJson()},
                   {"discriminator", d.config().ToJson()},
                   {"training", cfg.ToJson()}};
      trainer.SaveState(ar);
      SaveArchive(files->ckpt_dir / CheckpointName(epoch), ar);
      WriteText(files->best, CheckpointName(result.best_epoch));
    }
    if (on_epoch) on_epoch(er);
  }

  Restore(g.params(), best_params);
  if (io) SaveGenerator(io->run_dir / "generator_best.arc", g);
  return result;
}

}  // namespace dargan::train
