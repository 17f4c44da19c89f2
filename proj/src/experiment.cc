#include "pdstream/experiment.h"

#include <algorithm>
#include <cmath>
#include <exception>
#include <fstream>
#include <iostream>
#include <limits>
#include <random>
#include <set>
#include <sstream>

#include <fmt/format.h>

#include "json.hpp"
#include "pdstream/errors.h"

namespace pdstream {
namespace fs = std::filesystem;
namespace {

constexpr int kSchemaVersion = 1;

std::string Num(double v) {
  if (std::isnan(v)) return "nan";
  return fmt::format("{}", v);
}

std::ofstream OpenOut(const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

std::vector<std::string> SplitList(const std::string& text) {
  std::vector<std::string> items;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item.erase(0, item.find_first_not_of(" \t"));
    item.erase(item.find_last_not_of(" \t") + 1);
    if (!item.empty()) items.push_back(item);
  }
  return items;
}

// Column names of the first non-comment line.
std::vector<std::string> HeaderColumns(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    return SplitCsvLine(line);
  }
  throw SchemaError(path.string() + " has no header");
}

std::string FirstLine(const fs::path& path) {
  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  return line;
}

double Mean(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  double s = 0.0;
  for (double x : v) s += x;
  return s / v.size();
}

double PctChange(double base, double value) {
  return base != 0.0 ? 100.0 * (value - base) / base : 0.0;
}

}  // namespace

std::string OutputPreamble(const ExperimentConfig& config) {
  return fmt::format("# config_hash={} seed={} schema={}", ConfigHash(config),
                     config.seed, kSchemaVersion);
}

ContentTrace BuildContent(const ExperimentConfig& config) {
  if (!config.content_trace.empty()) {
    std::ifstream in(config.content_trace);
    if (!in) throw ConfigError("cannot open content trace " + config.content_trace);
    return ReadContentCsv(in, config.fps, fs::path(config.content_trace).stem().string());
  }
  // Two spare seconds so gap lookups near the end stay inside the trace.
  return GenerateSyntheticContent(config.seed, config.duration_s + 2.0, config.fps,
                                  ParseProfile(config.profile));
}

BandwidthTrace BuildNetwork(const ExperimentConfig& config) {
  if (config.network == "fixed") {
    return FixedBandwidthTrace(config.bitrate_bps, config.fixed_factor, config.prop_ms);
  }
  if (config.network == "file") {
    if (config.network_trace.empty()) throw ConfigError("network.trace is required for network = file");
    return LoadTrace(config.network_trace, config.prop_ms);
  }
  return GenerateNetworkTrace(ParseNetworkKind(config.network), config.seed,
                              config.duration_s, config.trace_step_ms, config.prop_ms);
}

std::vector<double> PolicyGrid(const ExperimentConfig& config) {
  return BitrateGrid(config.b_min, config.b_max, config.grid_points);
}

PolicyNet MakePolicy(const ExperimentConfig& config, uint64_t seed) {
  PolicyNetConfig net;
  net.hidden = config.Hidden();
  net.seed = seed;
  return PolicyNet(config.state_samples * kNumFeatures, PolicyGrid(config), net);
}

PolicyNet LoadPolicyFor(const ExperimentConfig& config, const std::string& path,
                        CheckpointMeta* meta) {
  return LoadPolicy(path, config.state_samples * kNumFeatures, config.Hidden(),
                    PolicyGrid(config), meta);
}

std::vector<double> RenderedE2e(const std::vector<FrameRecord>& frames) {
  std::vector<double> out;
  for (const auto& f : frames) {
    if (f.rendered) out.push_back(f.delay.d_e2e);
  }
  return out;
}

TailFitOutcome FitTail(const std::vector<double>& samples, double x_high) {
  TailFitOutcome outcome;
  if (samples.empty()) {
    outcome.error = "no samples";
    return outcome;
  }
  outcome.x_high = x_high < 0.0 ? Percentile(samples, 85.0) : x_high;
  try {
    outcome.fit = FitPowerTail(samples, outcome.x_high);
  } catch (const InsufficientDataError& e) {
    outcome.error = e.what();
  }
  return outcome;
}

void WriteTailFitJson(std::ostream& out, const TailFitOutcome& outcome,
                      const std::vector<double>& samples,
                      const std::string& config_hash, uint64_t seed) {
  nlohmann::ordered_json j;
  if (!config_hash.empty()) {
    j["config_hash"] = config_hash;
    j["seed"] = seed;
  }
  j["schema"] = kSchemaVersion;
  j["x_high"] = outcome.x_high;
  j["n_samples"] = samples.size();
  if (outcome.fit) {
    const TailFit& f = *outcome.fit;
    j["k"] = f.k;
    j["alpha"] = f.alpha;
    j["r2"] = f.r2;
    j["n_tail"] = f.n_tail;
    j["bins"] = f.bins;
    j["integrable"] = f.integrable;
    // Fitted against empirical tail mass at a few points past x_high.
    auto check = nlohmann::ordered_json::array();
    for (double p : {90.0, 95.0, 97.0, 99.0}) {
      const double x = Percentile(samples, p);
      if (x <= f.x_high) continue;
      nlohmann::ordered_json row;
      row["x"] = x;
      row["empirical"] = EmpiricalCcdf(samples, x);
      row["fitted"] = f.integrable ? TailMass(f, x) : std::numeric_limits<double>::quiet_NaN();
      check.push_back(row);
    }
    j["ccdf_check"] = check;
  } else {
    j["error"] = outcome.error;
  }
  out << j.dump(2) << "\n";
}

void WriteCdfCsv(std::ostream& out, const std::vector<double>& samples,
                 const TailFitOutcome& outcome, const std::string& preamble) {
  if (!preamble.empty()) out << preamble << "\n";
  out << "x_ms,ccdf_empirical,ccdf_fit\n";
  std::vector<double> sorted(samples);
  std::sort(sorted.begin(), sorted.end());
  sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
  const size_t stride = std::max<size_t>(1, sorted.size() / 1000);
  for (size_t i = 0; i < sorted.size(); i += stride) {
    const double x = sorted[i];
    double fit = std::numeric_limits<double>::quiet_NaN();
    if (outcome.fit && outcome.fit->integrable && x > outcome.x_high) fit = TailMass(*outcome.fit, x);
    out << Num(x) << "," << Num(EmpiricalCcdf(samples, x)) << "," << Num(fit) << "\n";
  }
}

void WriteEventsCsv(std::ostream& out, const std::vector<EventRow>& rows,
                    const std::string& preamble) {
  if (!preamble.empty()) out << preamble << "\n";
  out << "ts,event,key,value\n";
  for (const auto& r : rows) {
    out << Num(r.ts) << "," << r.event << "," << r.key << "," << Num(r.value) << "\n";
  }
}

void WriteAllocCsv(std::ostream& out, const std::vector<AllocationRow>& rows,
                   const std::string& preamble) {
  if (!preamble.empty()) out << preamble << "\n";
  out << "ts,b,R1,reallocation,feasible,f_prime,T,q_index,q_bar_prime,"
         "q_bar_single,delta_q,delta_qp_index,b_prime,b_dprime,scaled,candidates\n";
  for (const auto& r : rows) {
    const Allocation& a = r.alloc;
    out << fmt::format("{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n", Num(r.ts), Num(r.b),
                       Num(r.R1), r.reallocation ? 1 : 0, a.feasible ? 1 : 0, a.f_prime,
                       Num(a.T), a.q_index, Num(a.q_bar_prime), Num(a.q_bar_single),
                       Num(a.delta_q), Num(a.delta_qp_index), Num(a.b_prime), Num(a.b_dprime),
                       a.scaled ? 1 : 0, a.candidates);
  }
}

RunOutput RunExperiment(const ExperimentConfig& config, const fs::path& out_dir) {
  config.Validate();
  const ContentTrace content = BuildContent(config);
  const BandwidthTrace network = BuildNetwork(config);

  SimulationOptions options;
  PolicyNet policy;
  if (config.Policy() == RatePolicy::kRl) {
    if (config.checkpoint.empty()) throw ConfigError("run.checkpoint: required for the RL policy");
    policy = LoadPolicyFor(config, config.checkpoint);
    options.policy = &policy;
  }

  RunOutput result;
  result.sim = Simulate(config, content, network, options);
  const std::string name =
      fmt::format("{}+{}", StreamingModeName(config.Mode()), RatePolicyName(config.Policy()));
  result.report = BuildQoeReport(name, result.sim.frames, result.sim.network,
                                 result.sim.duration_ms, config.stall_fps,
                                 {config.psnr_anchor_db, config.degraded_penalty_db});
  const auto samples = RenderedE2e(result.sim.frames);
  result.tail = FitTail(samples, config.x_high_ms);

  if (out_dir.empty()) return result;
  fs::create_directories(out_dir);
  const std::string preamble = OutputPreamble(config);
  {
    auto out = OpenOut(out_dir / "frames.csv");
    out << preamble << "\n";
    WriteFramesCsv(out, result.sim.frames);
  }
  {
    auto out = OpenOut(out_dir / "events.csv");
    WriteEventsCsv(out, result.sim.events, preamble);
  }
  {
    auto out = OpenOut(out_dir / "alloc.csv");
    WriteAllocCsv(out, result.sim.allocations, preamble);
  }
  {
    auto out = OpenOut(out_dir / "report.csv");
    WriteReportCsv(out, {result.report}, preamble);
  }
  {
    auto out = OpenOut(out_dir / "tailfit.json");
    WriteTailFitJson(out, result.tail, samples, ConfigHash(config), config.seed);
  }
  {
    auto out = OpenOut(out_dir / "cdf.csv");
    WriteCdfCsv(out, samples, result.tail, preamble);
  }
  {
    auto out = OpenOut(out_dir / "config.ini");
    out << preamble << "\n" << DumpConfig(config);
  }
  return result;
}

std::pair<std::vector<size_t>, std::vector<size_t>> SplitTraces(
    size_t n, double train_fraction, uint64_t seed) {
  if (train_fraction <= 0.0 || train_fraction > 1.0) {
    throw std::invalid_argument("train fraction must be in (0, 1]");
  }
  std::vector<size_t> order(n);
  for (size_t i = 0; i < n; ++i) order[i] = i;
  std::mt19937_64 rng(seed);
  // Explicit Fisher-Yates: std::shuffle is not specified to be portable.
  for (size_t i = n; i > 1; --i) {
    const size_t j = static_cast<size_t>(rng() % i);
    std::swap(order[i - 1], order[j]);
  }
  size_t n_train = static_cast<size_t>(std::round(train_fraction * n));
  if (n > 0) n_train = std::clamp<size_t>(n_train, 1, n);
  std::vector<size_t> train(order.begin(), order.begin() + n_train);
  std::vector<size_t> test(order.begin() + n_train, order.end());
  std::sort(train.begin(), train.end());
  std::sort(test.begin(), test.end());
  return {train, test};
}

TrainSummary Train(const ExperimentConfig& config, const TrainOptions& options) {
  config.Validate();
  if (options.out_dir.empty()) throw ConfigError("training needs an output directory");
  fs::create_directories(options.out_dir);
  TrainSummary summary;

  ExperimentConfig episode_cfg = config;
  episode_cfg.policy = "RL";
  episode_cfg.duration_s = config.episode_s;

  std::vector<BandwidthTrace> pool;
  const auto listed = SplitList(config.train_traces);
  if (listed.empty()) {
    pool.push_back(BuildNetwork(episode_cfg));
    summary.train_traces.push_back(config.network);
  } else {
    const auto [train, test] = SplitTraces(listed.size(), config.train_fraction, config.seed);
    for (size_t i : train) {
      pool.push_back(LoadTrace(listed[i], config.prop_ms));
      summary.train_traces.push_back(listed[i]);
    }
    for (size_t i : test) summary.test_traces.push_back(listed[i]);
  }

  PolicyNet net;
  CheckpointMeta meta;
  meta.state_samples = static_cast<size_t>(config.state_samples);
  if (!options.resume.empty()) {
    net = LoadPolicyFor(config, options.resume, &meta);
  } else {
    net = MakePolicy(config, config.seed);
  }
  summary.first_episode = meta.episode;
  const int64_t end = meta.episode + config.episodes;

  PpoConfig ppo;
  ppo.epsilon = config.epsilon;
  ppo.actor_lr = config.actor_lr;
  ppo.critic_lr = config.critic_lr;
  ppo.gamma = config.gamma;
  ppo.horizon = static_cast<size_t>(config.horizon);
  ppo.epochs = config.ppo_epochs;

  const fs::path checkpoint = options.out_dir / "policy.json";
  const fs::path curve_path = options.out_dir / "training_curve.csv";
  const bool append = !options.resume.empty() && fs::exists(curve_path);
  std::ofstream curve(curve_path, append ? std::ios::app : std::ios::trunc);
  if (!curve) throw std::runtime_error("cannot write " + curve_path.string());
  if (!append) curve << OutputPreamble(config) << "\nepisode,mean_reward\n";

  int64_t episode = meta.episode;
  int64_t last_saved = -1;
  while (episode < end) {
    const int n = static_cast<int>(std::min<int64_t>(config.workers, end - episode));
    std::vector<SimulationResult> results(n);
    std::vector<std::exception_ptr> errors(n);
#pragma omp parallel for schedule(static) if (options.parallel)
    for (int w = 0; w < n; ++w) {
      try {
        const int64_t idx = episode + w;
        ExperimentConfig cfg = episode_cfg;
        cfg.seed = config.seed * 1000003ULL + static_cast<uint64_t>(idx);
        std::mt19937_64 pick(cfg.seed);
        const BandwidthTrace& trace = pool[pick() % pool.size()];
        const ContentTrace content = BuildContent(cfg);
        results[w] = Simulate(cfg, content, trace, {&net, true, cfg.seed});
      } catch (...) {
        errors[w] = std::current_exception();
      }
    }
    for (const auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }

    std::vector<Transition> batch;
    for (int w = 0; w < n; ++w) {
      const double mean = Mean(results[w].rewards);
      summary.curve.push_back(mean);
      curve << episode + w << "," << Num(mean) << "\n";
      for (auto& t : results[w].transitions) batch.push_back(std::move(t));
    }
    curve.flush();

    const PolicyNet good = net;
    const UpdateStats stats = PpoUpdate(net, batch, ppo);
    const bool finite = net.AllFinite() && std::isfinite(stats.critic_loss_after) &&
                        std::isfinite(stats.surrogate_after);
    if (!finite || std::abs(stats.critic_loss_after) > config.divergence_limit) {
      net = good;
      summary.diverged = true;
      summary.diagnostics = fmt::format(
          "diverged after episode {}: critic loss {} -> {}, surrogate {} -> {}", episode + n - 1,
          stats.critic_loss_before, stats.critic_loss_after, stats.surrogate_before,
          stats.surrogate_after);
      meta.episode = episode;
      SavePolicy(checkpoint.string(), net, meta);
      summary.checkpoint = checkpoint.string();
      summary.last_episode = episode;
      return summary;
    }
    episode += n;
    meta.episode = episode;
    if (config.checkpoint_every > 0 &&
        episode / config.checkpoint_every != (episode - n) / config.checkpoint_every) {
      SavePolicy(checkpoint.string(), net, meta);
      last_saved = episode;
    }
  }
  if (last_saved != episode) SavePolicy(checkpoint.string(), net, meta);
  summary.checkpoint = checkpoint.string();
  summary.last_episode = episode;
  return summary;
}

Comparison CompareRuns(const std::vector<fs::path>& dirs, std::vector<double> x_ms,
                       double x_high) {
  if (dirs.size() < 2) throw std::invalid_argument("compare needs at least two run directories");
  for (const auto& d : dirs) {
    if (!fs::is_directory(d)) throw std::runtime_error("run directory not found: " + d.string());
    for (const char* f : {"frames.csv", "report.csv"}) {
      if (!fs::exists(d / f)) throw std::runtime_error(fmt::format("{} has no {}", d.string(), f));
    }
  }

  // Every run must share the baseline's columns.
  for (const char* file : {"frames.csv", "report.csv"}) {
    const auto base = HeaderColumns(dirs[0] / file);
    const std::set<std::string> base_set(base.begin(), base.end());
    for (size_t i = 1; i < dirs.size(); ++i) {
      const auto cols = HeaderColumns(dirs[i] / file);
      const std::set<std::string> set(cols.begin(), cols.end());
      std::vector<std::string> diff;
      std::set_symmetric_difference(base_set.begin(), base_set.end(), set.begin(), set.end(),
                                    std::back_inserter(diff));
      if (!diff.empty()) {
        std::string list;
        for (const auto& c : diff) list += (list.empty() ? "" : ", ") + c;
        throw SchemaError(fmt::format("{}: columns differ between {} and {}: {}", file,
                                      dirs[0].string(), dirs[i].string(), list));
      }
    }
    const std::string base_line = FirstLine(dirs[0] / file);
    for (const auto& d : dirs) {
      const std::string line = FirstLine(d / file);
      if (line.rfind("# config_hash=", 0) != 0) {
        throw SchemaError((d / file).string() + " carries no config hash");
      }
      if (line.substr(line.find(" schema=")) != base_line.substr(base_line.find(" schema="))) {
        throw SchemaError((d / file).string() + " has a different schema version");
      }
    }
  }

  Comparison cmp;
  cmp.x_ms = std::move(x_ms);
  std::vector<std::vector<double>> samples;
  for (const auto& d : dirs) {
    std::ifstream frames(d / "frames.csv");
    samples.push_back(RenderedE2e(ReadFramesCsv(frames)));
    std::ifstream report(d / "report.csv");
    auto rows = ReadReportCsv(report);
    if (rows.size() != 1) throw SchemaError((d / "report.csv").string() + " must hold one row");
    ComparisonRow row;
    row.report = rows[0];
    row.dir = d.string();
    cmp.rows.push_back(std::move(row));
  }
  const auto base_fit = FitTail(samples[0], x_high);
  cmp.x_high = base_fit.x_high;
  const QoeReport& base = cmp.rows[0].report;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (size_t i = 0; i < cmp.rows.size(); ++i) {
    auto& row = cmp.rows[i];
    row.p97_delta_pct = PctChange(base.e2e_p97, row.report.e2e_p97);
    row.mean_delta_pct = PctChange(base.e2e_mean, row.report.e2e_mean);
    const auto fit = FitTail(samples[i], cmp.x_high);
    for (double x : cmp.x_ms) {
      double slash = nan;
      if (base_fit.fit && fit.fit && base_fit.fit->integrable && fit.fit->integrable &&
          x > cmp.x_high) {
        slash = TailSlash(*base_fit.fit, *fit.fit, x);
      }
      row.tail_slash.push_back(slash);
      const double p1 = EmpiricalCcdf(samples[0], x);
      row.ccdf_slash.push_back(p1 > 0.0 ? 1.0 - EmpiricalCcdf(samples[i], x) / p1 : nan);
    }
  }
  return cmp;
}

void WriteComparison(std::ostream& out, const Comparison& cmp) {
  for (const char* c : kReportColumns) out << c << ",";
  out << "p97_delta_pct,mean_delta_pct";
  for (double x : cmp.x_ms) out << ",tail_slash_" << Num(x) << ",ccdf_slash_" << Num(x);
  out << ",dir\n";
  for (const auto& row : cmp.rows) {
    const QoeReport& r = row.report;
    out << fmt::format("{},{},{},{},{},{},{},{},{},{},{},{},{},", r.run, Num(r.fps),
                       Num(r.stall_rate_pct), Num(r.d_trans), Num(r.d_pacer), Num(r.d_jitter),
                       Num(r.rtt), Num(r.loss_pct), Num(r.e2e_mean), Num(r.e2e_p97),
                       Num(r.psnr_proxy_db), Num(r.mean_qp), r.rendered);
    out << Num(row.p97_delta_pct) << "," << Num(row.mean_delta_pct);
    for (size_t j = 0; j < cmp.x_ms.size(); ++j) {
      out << "," << Num(row.tail_slash[j]) << "," << Num(row.ccdf_slash[j]);
    }
    out << "," << row.dir << "\n";
  }
}

}  // namespace pdstream
