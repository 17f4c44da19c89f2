#ifndef PDSTREAM_EXPERIMENT_H_
#define PDSTREAM_EXPERIMENT_H_

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "pdstream/analytics.h"
#include "pdstream/config.h"
#include "pdstream/media.h"
#include "pdstream/netsim.h"
#include "pdstream/policy.h"
#include "pdstream/simulator.h"

namespace pdstream {

// First line of every output file.
std::string OutputPreamble(const ExperimentConfig& config);

// Content and network traces described by the config.
ContentTrace BuildContent(const ExperimentConfig& config);
BandwidthTrace BuildNetwork(const ExperimentConfig& config);

std::vector<double> PolicyGrid(const ExperimentConfig& config);
// Fresh actor-critic sized for the config.
PolicyNet MakePolicy(const ExperimentConfig& config, uint64_t seed);
PolicyNet LoadPolicyFor(const ExperimentConfig& config, const std::string& path,
                        CheckpointMeta* meta = nullptr);

// E2E delays of rendered frames.
std::vector<double> RenderedE2e(const std::vector<FrameRecord>& frames);

struct TailFitOutcome {
  double x_high = 0.0;
  std::optional<TailFit> fit;
  std::string error;  // set when the fit was refused
};

// x_high < 0 selects the 85th percentile of the samples.
TailFitOutcome FitTail(const std::vector<double>& samples, double x_high);
// `config_hash` may be empty for inputs that did not come from a run.
void WriteTailFitJson(std::ostream& out, const TailFitOutcome& outcome,
                      const std::vector<double>& samples,
                      const std::string& config_hash, uint64_t seed);
// x, empirical P(X >= x) and, above x_high, the fitted tail mass.
void WriteCdfCsv(std::ostream& out, const std::vector<double>& samples,
                 const TailFitOutcome& outcome, const std::string& preamble);

void WriteEventsCsv(std::ostream& out, const std::vector<EventRow>& rows,
                    const std::string& preamble);
void WriteAllocCsv(std::ostream& out, const std::vector<AllocationRow>& rows,
                   const std::string& preamble);

struct RunOutput {
  SimulationResult sim;
  QoeReport report;
  TailFitOutcome tail;
};

// Simulates the config and, when `out_dir` is non-empty, writes frames.csv,
// events.csv, alloc.csv, report.csv, tailfit.json and cdf.csv into it.
RunOutput RunExperiment(const ExperimentConfig& config,
                        const std::filesystem::path& out_dir);

// Seeded 75/25 style split of `n` items; returns (train, test) indices.
std::pair<std::vector<size_t>, std::vector<size_t>> SplitTraces(
    size_t n, double train_fraction, uint64_t seed);

struct TrainOptions {
  std::filesystem::path out_dir;
  std::string resume;     // checkpoint to continue from
  bool parallel = true;   // false runs the episode fan-out serially
};

struct TrainSummary {
  int64_t first_episode = 0;
  int64_t last_episode = 0;  // exclusive
  std::vector<double> curve;  // mean unscaled reward per episode
  std::vector<std::string> train_traces;
  std::vector<std::string> test_traces;
  std::string checkpoint;
  bool diverged = false;
  std::string diagnostics;
};

// Episodes are collected `workers` at a time from independent simulators
// and applied in one serialized PPO update. Writes policy.json and
// training_curve.csv into the output directory.
TrainSummary Train(const ExperimentConfig& config, const TrainOptions& options);

struct ComparisonRow {
  QoeReport report;
  std::string dir;
  double p97_delta_pct = 0.0;   // vs the first run
  double mean_delta_pct = 0.0;
  std::vector<double> tail_slash;      // fitted, one per x
  std::vector<double> ccdf_slash;      // empirical, one per x
};

struct Comparison {
  std::vector<double> x_ms;
  double x_high = 0.0;
  std::vector<ComparisonRow> rows;
};

// The first directory is the baseline. Throws SchemaError when the runs'
// frame or report columns differ and std::runtime_error for a missing
// directory.
Comparison CompareRuns(const std::vector<std::filesystem::path>& dirs,
                       std::vector<double> x_ms = {200.0, 250.0},
                       double x_high = -1.0);
void WriteComparison(std::ostream& out, const Comparison& cmp);

}  // namespace pdstream

#endif  // PDSTREAM_EXPERIMENT_H_
