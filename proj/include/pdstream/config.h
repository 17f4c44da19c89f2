#ifndef PDSTREAM_CONFIG_H_
#define PDSTREAM_CONFIG_H_

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "pdstream/dual_stream.h"
#include "pdstream/encoder.h"
#include "pdstream/media.h"
#include "pdstream/pacer.h"
#include "pdstream/rate_control.h"
#include "pdstream/receiver.h"

namespace pdstream {

enum class StreamingMode { kCbrL, kCbrS, kKeyMin, kPdStream };
enum class RatePolicy { kFixed, kGcc, kRl };

StreamingMode ParseStreamingMode(std::string_view name);
std::string_view StreamingModeName(StreamingMode mode);
RatePolicy ParseRatePolicy(std::string_view name);
std::string_view RatePolicyName(RatePolicy policy);
BurstPolicy ParseBurstPolicy(std::string_view name);
std::string_view BurstPolicyName(BurstPolicy policy);

// Every knob of one experiment. Enumerations are held as their config
// spellings and checked by Validate.
struct ExperimentConfig {
  // [run]
  std::string mode = "PDSTREAM";
  std::string policy = "FIXED";
  std::string checkpoint;
  double duration_s = 600.0;
  uint64_t seed = 1;
  double bitrate_bps = 1.0e6;
  int fps = 30;

  // [content]
  std::string profile = "street";
  std::string content_trace;

  // [network]
  std::string network = "fixed";  // fixed | 4g | 5g | wifi | file
  std::string network_trace;
  double fixed_factor = 1.1;
  double prop_ms = 10.0;
  double queue_cap_ms = 300.0;
  double trace_step_ms = 1000.0;

  // [encoder]
  double keyframe_period_s = 4.0;
  double kappa = 7.0;
  double cbr_window_s = 1.0;
  double q_min = 0.625;
  double q_max = 224.0;
  double true_alpha1 = 400.0;
  double true_alpha2 = 2000.0;
  double size_noise_sigma = 0.05;
  double encode_base_ms = 4.0;
  double encode_key_extra_ms = 2.0;
  int cubic_refit_frames = 300;
  double gap_rho = 0.75;

  // [dual]
  double theta = 1.2;
  double avg_half_life_s = 2.0;
  double eta = 5.0;
  std::string s1_skip_policy = "drop";

  // [packet]
  int mtu_payload_bytes = 1200;
  int header_bytes = 12;

  // [pacer]
  double tick_ms = 5.0;
  double burst_multiplier = 2.5;
  std::string burst_policy = "backlogged";
  double carry_cap_ticks = 1.0;

  // [receiver]
  double jitter_weight = 0.05;
  double jitter_k = 3.0;
  double min_wait_ms = 0.0;
  double max_wait_ms = 500.0;
  double decode_key_ms = 5.0;
  double decode_delta_ms = 3.0;
  int stall_fps = 12;

  // [gcc]
  double gcc_interval_ms = 500.0;
  double gcc_overuse_threshold_ms = 5.0;
  double gcc_smoothing = 0.6;
  double b_min = 0.3e6;
  double b_max = 4.0e6;

  // [rl]
  double w_bitrate = 1e-5;
  double w_fps = 1.0;
  double w_qp = 1.0;
  double w_delay = 200.0;
  double w_stall = 4000.0;
  double rl_dt_s = 0.1;
  double gamma = 0.98;
  int horizon = 20;
  double epsilon = 0.1;
  double actor_lr = 1e-4;
  double critic_lr = 1e-3;
  int ppo_epochs = 4;
  int grid_points = 17;
  int state_samples = 20;
  std::string hidden = "128,64,32";
  double reward_scale = 0.01;  // rewards are multiplied by this before training

  // [train]
  int episodes = 50;
  double episode_s = 30.0;
  int checkpoint_every = 10;
  int workers = 2;  // episodes collected per update
  double train_fraction = 0.75;
  std::string train_traces;  // comma-separated paths; empty = generated set
  double divergence_limit = 1e8;

  // [analytics]
  double x_high_ms = -1.0;  // < 0: 85th percentile of the run
  double psnr_anchor_db = 60.0;
  double degraded_penalty_db = 3.0;

  StreamingMode Mode() const { return ParseStreamingMode(mode); }
  RatePolicy Policy() const { return ParseRatePolicy(policy); }
  std::vector<int> Hidden() const;

  EncoderConfig Encoder(EncoderMode mode, uint64_t stream_seed) const;
  DualStreamConfig Dual() const;
  PacerConfig Pacer() const;
  ReceiverConfig Receiver() const;
  GccConfig Gcc() const;
  RewardWeights Reward() const;
  PacketizationConfig Packetization() const;

  // Throws ConfigError naming the first offending key.
  void Validate() const;
};

// INI with [section] headers; unknown keys are errors.
ExperimentConfig LoadConfig(const std::string& path);
ExperimentConfig ParseConfig(std::istream& in);
// Applies `section.key=value`.
void ApplyOverride(ExperimentConfig& config, const std::string& assignment);
// Canonical INI text of every knob, stable across runs.
std::string DumpConfig(const ExperimentConfig& config);
// 16 hex digits of FNV-1a over DumpConfig.
std::string ConfigHash(const ExperimentConfig& config);

}  // namespace pdstream

#endif  // PDSTREAM_CONFIG_H_
