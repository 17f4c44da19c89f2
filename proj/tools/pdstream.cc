// Command-line front end: run, train, compare, fit-tail, gen-content,
// gen-trace.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "CLI11.hpp"
#include "pdstream/config.h"
#include "pdstream/errors.h"
#include "pdstream/experiment.h"

namespace {

using pdstream::ExperimentConfig;

struct CommonArgs {
  std::string config_path;
  std::vector<std::string> overrides;
  std::optional<std::string> mode;
  std::optional<std::string> policy;
  std::optional<std::string> network;
  std::optional<std::string> profile;
  std::optional<std::string> checkpoint;
  std::optional<double> duration;
  std::optional<double> bitrate;
  uint64_t seed = 0;
  std::string out;
};

void AddCommon(CLI::App* cmd, CommonArgs& a) {
  cmd->add_option("-c,--config", a.config_path, "INI config file")->check(CLI::ExistingFile);
  cmd->add_option("--set", a.overrides, "override, section.key=value (repeatable)");
  cmd->add_option("--mode", a.mode, "CBR_L | CBR_S | KEY_MIN | PDSTREAM");
  cmd->add_option("--policy", a.policy, "FIXED | GCC | RL");
  cmd->add_option("--network", a.network, "fixed | 4g | 5g | wifi | file");
  cmd->add_option("--profile", a.profile, "street | conference | sports | gaming");
  cmd->add_option("--checkpoint", a.checkpoint, "policy checkpoint for RL");
  cmd->add_option("--duration", a.duration, "simulated seconds");
  cmd->add_option("--bitrate", a.bitrate, "video bitrate, bps");
  cmd->add_option("--seed", a.seed, "master seed")->required();
  cmd->add_option("--out", a.out, "output directory")->required();
}

ExperimentConfig Resolve(const CommonArgs& a) {
  ExperimentConfig cfg = a.config_path.empty() ? ExperimentConfig{} : pdstream::LoadConfig(a.config_path);
  if (a.mode) cfg.mode = *a.mode;
  if (a.policy) cfg.policy = *a.policy;
  if (a.network) cfg.network = *a.network;
  if (a.profile) cfg.profile = *a.profile;
  if (a.checkpoint) cfg.checkpoint = *a.checkpoint;
  if (a.duration) cfg.duration_s = *a.duration;
  if (a.bitrate) cfg.bitrate_bps = *a.bitrate;
  for (const auto& o : a.overrides) pdstream::ApplyOverride(cfg, o);
  cfg.seed = a.seed;
  cfg.Validate();
  return cfg;
}

int CmdRun(const CommonArgs& a) {
  const ExperimentConfig cfg = Resolve(a);
  const auto out = pdstream::RunExperiment(cfg, a.out);
  const auto& r = out.report;
  fmt::print("{}: fps {:.2f}  stall {:.2f}%  e2e mean {:.1f} ms  p97 {:.1f} ms  rtt {:.1f} ms  loss {:.2f}%\n",
             r.run, r.fps, r.stall_rate_pct, r.e2e_mean, r.e2e_p97, r.rtt, r.loss_pct);
  if (out.tail.fit) {
    fmt::print("tail: x_high {:.1f} ms  k {:.4g}  alpha {:.3f}  r2 {:.3f}\n", out.tail.x_high,
               out.tail.fit->k, out.tail.fit->alpha, out.tail.fit->r2);
  } else {
    fmt::print("tail: no fit ({})\n", out.tail.error);
  }
  fmt::print("wrote {}\n", a.out);
  return 0;
}

int CmdTrain(const CommonArgs& a, const std::string& resume, bool serial) {
  const ExperimentConfig cfg = Resolve(a);
  pdstream::TrainOptions opts;
  opts.out_dir = a.out;
  opts.resume = resume;
  opts.parallel = !serial;
  const auto s = pdstream::Train(cfg, opts);
  fmt::print("episodes {}..{} on {} training trace(s), {} held out\n", s.first_episode,
             s.last_episode, s.train_traces.size(), s.test_traces.size());
  if (s.diverged) {
    fmt::print(stderr, "{}\nlast good checkpoint: {}\n", s.diagnostics, s.checkpoint);
    return 3;
  }
  fmt::print("checkpoint {}\n", s.checkpoint);
  return 0;
}

int CmdCompare(const std::vector<std::string>& dirs, const std::vector<double>& xs, double x_high,
               const std::string& out) {
  std::vector<std::filesystem::path> paths(dirs.begin(), dirs.end());
  const auto cmp = pdstream::CompareRuns(paths, xs, x_high);
  if (out.empty()) {
    pdstream::WriteComparison(std::cout, cmp);
  } else {
    std::ofstream f(out);
    pdstream::WriteComparison(f, cmp);
    fmt::print("wrote {}\n", out);
  }
  return 0;
}

int CmdFitTail(const std::string& frames, double x_high, const std::string& out) {
  std::ifstream in(frames);
  if (!in) throw std::runtime_error("cannot open " + frames);
  const auto samples = pdstream::RenderedE2e(pdstream::ReadFramesCsv(in));
  const auto outcome = pdstream::FitTail(samples, x_high);
  if (out.empty()) {
    pdstream::WriteTailFitJson(std::cout, outcome, samples, "", 0);
  } else {
    std::ofstream f(out);
    pdstream::WriteTailFitJson(f, outcome, samples, "", 0);
  }
  return outcome.fit ? 0 : 4;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Pseudo-dual-stream video streaming simulator"};
  app.require_subcommand(1);

  CommonArgs run_args;
  auto* run = app.add_subcommand("run", "simulate one experiment");
  AddCommon(run, run_args);

  CommonArgs train_args;
  std::string resume;
  bool serial = false;
  auto* train = app.add_subcommand("train", "train the bitrate policy");
  AddCommon(train, train_args);
  train->add_option("--resume", resume, "checkpoint to continue from")->check(CLI::ExistingFile);
  train->add_flag("--serial", serial, "collect episodes without threads");

  std::vector<std::string> dirs;
  std::vector<double> xs{200.0, 250.0};
  double cmp_x_high = -1.0;
  std::string cmp_out;
  auto* compare = app.add_subcommand("compare", "merge run reports; the first run is the baseline");
  compare->add_option("dirs", dirs, "run directories")->required()->expected(2, -1);
  compare->add_option("--x", xs, "delays (ms) at which to evaluate the tail slash");
  compare->add_option("--x-high", cmp_x_high, "tail threshold, ms (default: baseline p85)");
  compare->add_option("--out", cmp_out, "CSV file (default: stdout)");

  std::string frames;
  double fit_x_high = -1.0;
  std::string fit_out;
  auto* fit = app.add_subcommand("fit-tail", "power-law fit of rendered E2E delays");
  fit->add_option("frames", frames, "frames.csv")->required();
  fit->add_option("--x-high", fit_x_high, "tail threshold, ms (default: p85)");
  fit->add_option("--out", fit_out, "JSON file (default: stdout)");

  uint64_t gc_seed = 0;
  double gc_duration = 600.0;
  double gc_fps = 30.0;
  std::string gc_profile = "street";
  std::string gc_out;
  auto* gen_content = app.add_subcommand("gen-content", "write a synthetic content trace");
  gen_content->add_option("--seed", gc_seed)->required();
  gen_content->add_option("--duration", gc_duration, "seconds");
  gen_content->add_option("--fps", gc_fps);
  gen_content->add_option("--profile", gc_profile);
  gen_content->add_option("--out", gc_out)->required();

  uint64_t gt_seed = 0;
  std::string gt_kind;
  double gt_duration = 600.0;
  double gt_step = 1000.0;
  double gt_prop = 10.0;
  std::string gt_out;
  auto* gen_trace = app.add_subcommand("gen-trace", "write a synthetic bandwidth trace");
  gen_trace->add_option("--kind", gt_kind, "4g | 5g | wifi")->required();
  gen_trace->add_option("--seed", gt_seed)->required();
  gen_trace->add_option("--duration", gt_duration, "seconds");
  gen_trace->add_option("--step-ms", gt_step);
  gen_trace->add_option("--prop-ms", gt_prop);
  gen_trace->add_option("--out", gt_out)->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) return CmdRun(run_args);
    if (*train) return CmdTrain(train_args, resume, serial);
    if (*compare) return CmdCompare(dirs, xs, cmp_x_high, cmp_out);
    if (*fit) return CmdFitTail(frames, fit_x_high, fit_out);
    if (*gen_content) {
      const auto trace = pdstream::GenerateSyntheticContent(gc_seed, gc_duration, gc_fps,
                                                            pdstream::ParseProfile(gc_profile));
      std::ofstream out(gc_out);
      pdstream::WriteContentCsv(out, trace);
      return 0;
    }
    if (*gen_trace) {
      const auto trace = pdstream::GenerateNetworkTrace(pdstream::ParseNetworkKind(gt_kind),
                                                        gt_seed, gt_duration, gt_step, gt_prop);
      std::ofstream out(gt_out);
      pdstream::WriteTraceCsv(out, trace);
      fmt::print("{}: mean {:.3f} Mbps, std {:.3f} Mbps\n", gt_kind, trace.MeanBps() / 1e6,
                 trace.StdBps() / 1e6);
      return 0;
    }
  } catch (const pdstream::ConfigError& e) {
    fmt::print(stderr, "config error: {}\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return 1;
  }
  return 0;
}
