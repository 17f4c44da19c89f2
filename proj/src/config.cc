#include "pdstream/config.h"

#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <fmt/format.h>

#include "pdstream/errors.h"

namespace pdstream {
namespace {

// Calls `v(section, key, field)` for every knob, in dump order.
template <typename C, typename V>
void VisitFields(C& c, V&& v) {
  v("run", "mode", c.mode);
  v("run", "policy", c.policy);
  v("run", "checkpoint", c.checkpoint);
  v("run", "duration_s", c.duration_s);
  v("run", "seed", c.seed);
  v("run", "bitrate_bps", c.bitrate_bps);
  v("run", "fps", c.fps);
  v("content", "profile", c.profile);
  v("content", "trace", c.content_trace);
  v("network", "kind", c.network);
  v("network", "trace", c.network_trace);
  v("network", "fixed_factor", c.fixed_factor);
  v("network", "prop_ms", c.prop_ms);
  v("network", "queue_cap_ms", c.queue_cap_ms);
  v("network", "trace_step_ms", c.trace_step_ms);
  v("encoder", "keyframe_period_s", c.keyframe_period_s);
  v("encoder", "kappa", c.kappa);
  v("encoder", "cbr_window_s", c.cbr_window_s);
  v("encoder", "q_min", c.q_min);
  v("encoder", "q_max", c.q_max);
  v("encoder", "true_alpha1", c.true_alpha1);
  v("encoder", "true_alpha2", c.true_alpha2);
  v("encoder", "size_noise_sigma", c.size_noise_sigma);
  v("encoder", "encode_base_ms", c.encode_base_ms);
  v("encoder", "encode_key_extra_ms", c.encode_key_extra_ms);
  v("encoder", "cubic_refit_frames", c.cubic_refit_frames);
  v("encoder", "gap_rho", c.gap_rho);
  v("dual", "theta", c.theta);
  v("dual", "avg_half_life_s", c.avg_half_life_s);
  v("dual", "eta", c.eta);
  v("dual", "s1_skip_policy", c.s1_skip_policy);
  v("packet", "mtu_payload_bytes", c.mtu_payload_bytes);
  v("packet", "header_bytes", c.header_bytes);
  v("pacer", "tick_ms", c.tick_ms);
  v("pacer", "burst_multiplier", c.burst_multiplier);
  v("pacer", "burst_policy", c.burst_policy);
  v("pacer", "carry_cap_ticks", c.carry_cap_ticks);
  v("receiver", "jitter_weight", c.jitter_weight);
  v("receiver", "jitter_k", c.jitter_k);
  v("receiver", "min_wait_ms", c.min_wait_ms);
  v("receiver", "max_wait_ms", c.max_wait_ms);
  v("receiver", "decode_key_ms", c.decode_key_ms);
  v("receiver", "decode_delta_ms", c.decode_delta_ms);
  v("receiver", "stall_fps", c.stall_fps);
  v("gcc", "interval_ms", c.gcc_interval_ms);
  v("gcc", "overuse_threshold_ms", c.gcc_overuse_threshold_ms);
  v("gcc", "smoothing", c.gcc_smoothing);
  v("gcc", "b_min", c.b_min);
  v("gcc", "b_max", c.b_max);
  v("rl", "w_bitrate", c.w_bitrate);
  v("rl", "w_fps", c.w_fps);
  v("rl", "w_qp", c.w_qp);
  v("rl", "w_delay", c.w_delay);
  v("rl", "w_stall", c.w_stall);
  v("rl", "dt_s", c.rl_dt_s);
  v("rl", "gamma", c.gamma);
  v("rl", "horizon", c.horizon);
  v("rl", "epsilon", c.epsilon);
  v("rl", "actor_lr", c.actor_lr);
  v("rl", "critic_lr", c.critic_lr);
  v("rl", "ppo_epochs", c.ppo_epochs);
  v("rl", "grid_points", c.grid_points);
  v("rl", "state_samples", c.state_samples);
  v("rl", "hidden", c.hidden);
  v("rl", "reward_scale", c.reward_scale);
  v("train", "episodes", c.episodes);
  v("train", "episode_s", c.episode_s);
  v("train", "checkpoint_every", c.checkpoint_every);
  v("train", "workers", c.workers);
  v("train", "train_fraction", c.train_fraction);
  v("train", "traces", c.train_traces);
  v("train", "divergence_limit", c.divergence_limit);
  v("analytics", "x_high_ms", c.x_high_ms);
  v("analytics", "psnr_anchor_db", c.psnr_anchor_db);
  v("analytics", "degraded_penalty_db", c.degraded_penalty_db);
}

void Assign(const std::string& key, const std::string& text, std::string& field) {
  (void)key;
  field = text;
}

template <typename T>
void Assign(const std::string& key, const std::string& text, T& field) {
  std::istringstream in(text);
  T value{};
  in >> value;
  if (!in.fail() && !in.eof()) in >> std::ws;
  if (in.fail() || !in.eof()) {
    throw ConfigError(fmt::format("{}: cannot parse '{}'", key, text));
  }
  field = value;
}

std::string Render(const std::string& field) { return field; }
std::string Render(double field) { return fmt::format("{}", field); }
template <typename T>
std::string Render(T field) {
  return fmt::format("{}", field);
}

void Check(bool ok, std::string_view key, std::string_view what) {
  if (!ok) throw ConfigError(fmt::format("{}: {}", key, what));
}

}  // namespace

StreamingMode ParseStreamingMode(std::string_view name) {
  if (name == "CBR_L") return StreamingMode::kCbrL;
  if (name == "CBR_S") return StreamingMode::kCbrS;
  if (name == "KEY_MIN") return StreamingMode::kKeyMin;
  if (name == "PDSTREAM") return StreamingMode::kPdStream;
  throw ConfigError(fmt::format("unknown mode '{}'", name));
}

std::string_view StreamingModeName(StreamingMode mode) {
  switch (mode) {
    case StreamingMode::kCbrL:
      return "CBR_L";
    case StreamingMode::kCbrS:
      return "CBR_S";
    case StreamingMode::kKeyMin:
      return "KEY_MIN";
    case StreamingMode::kPdStream:
      return "PDSTREAM";
  }
  return "unknown";
}

RatePolicy ParseRatePolicy(std::string_view name) {
  if (name == "FIXED") return RatePolicy::kFixed;
  if (name == "GCC") return RatePolicy::kGcc;
  if (name == "RL") return RatePolicy::kRl;
  throw ConfigError(fmt::format("unknown rate policy '{}'", name));
}

std::string_view RatePolicyName(RatePolicy policy) {
  switch (policy) {
    case RatePolicy::kFixed:
      return "FIXED";
    case RatePolicy::kGcc:
      return "GCC";
    case RatePolicy::kRl:
      return "RL";
  }
  return "unknown";
}

BurstPolicy ParseBurstPolicy(std::string_view name) {
  if (name == "never") return BurstPolicy::kNever;
  if (name == "backlogged") return BurstPolicy::kWhenBacklogged;
  if (name == "always") return BurstPolicy::kAlways;
  throw ConfigError(fmt::format("unknown burst policy '{}'", name));
}

std::string_view BurstPolicyName(BurstPolicy policy) {
  switch (policy) {
    case BurstPolicy::kNever:
      return "never";
    case BurstPolicy::kWhenBacklogged:
      return "backlogged";
    case BurstPolicy::kAlways:
      return "always";
  }
  return "unknown";
}

std::vector<int> ExperimentConfig::Hidden() const {
  std::vector<int> out;
  std::stringstream ss(hidden);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    int v = 0;
    Assign("rl.hidden", cell, v);
    if (v < 1) throw ConfigError("rl.hidden: layer widths must be positive");
    out.push_back(v);
  }
  if (out.empty()) throw ConfigError("rl.hidden: at least one layer");
  return out;
}

EncoderConfig ExperimentConfig::Encoder(EncoderMode m, uint64_t stream_seed) const {
  EncoderConfig e;
  e.mode = m;
  e.keyframe_period_s = keyframe_period_s;
  e.kappa = kappa;
  e.cbr_window_s = cbr_window_s;
  e.q_min = q_min;
  e.q_max = q_max;
  e.true_alpha1 = true_alpha1;
  e.true_alpha2 = true_alpha2;
  e.size_noise_sigma = size_noise_sigma;
  e.encode_base_ms = encode_base_ms;
  e.encode_key_extra_ms = encode_key_extra_ms;
  e.cubic_refit_frames = cubic_refit_frames;
  e.gap_rho = gap_rho;
  e.seed = stream_seed;
  return e;
}

DualStreamConfig ExperimentConfig::Dual() const {
  return {theta, avg_half_life_s, eta};
}

PacerConfig ExperimentConfig::Pacer() const {
  PacerConfig p;
  p.tick_ms = tick_ms;
  p.burst_multiplier = burst_multiplier;
  p.burst_policy = ParseBurstPolicy(burst_policy);
  p.carry_cap_ticks = carry_cap_ticks;
  p.max_packet_bytes = mtu_payload_bytes + header_bytes;
  return p;
}

ReceiverConfig ExperimentConfig::Receiver() const {
  ReceiverConfig r;
  r.jitter = {jitter_weight, jitter_k, min_wait_ms, max_wait_ms};
  r.decode_key_ms = decode_key_ms;
  r.decode_delta_ms = decode_delta_ms;
  r.stall_fps = stall_fps;
  return r;
}

GccConfig ExperimentConfig::Gcc() const {
  GccConfig g;
  g.interval_ms = gcc_interval_ms;
  g.overuse_threshold_ms = gcc_overuse_threshold_ms;
  g.smoothing = gcc_smoothing;
  g.b_min = b_min;
  g.b_max = b_max;
  return g;
}

RewardWeights ExperimentConfig::Reward() const {
  return {w_bitrate, w_fps, w_qp, w_delay, w_stall, rl_dt_s};
}

PacketizationConfig ExperimentConfig::Packetization() const {
  return {mtu_payload_bytes, header_bytes};
}

void ExperimentConfig::Validate() const {
  Mode();
  Policy();
  ParseProfile(profile);
  ParseBurstPolicy(burst_policy);
  Hidden();
  Check(network == "fixed" || network == "4g" || network == "5g" || network == "wifi" ||
            network == "file",
        "network.kind", "expected fixed, 4g, 5g, wifi or file");
  Check(network != "file" || !network_trace.empty(), "network.trace",
        "required when network.kind = file");
  Check(s1_skip_policy == "drop", "dual.s1_skip_policy", "only 'drop' is implemented");
  Check(duration_s > 0.0, "run.duration_s", "must be positive");
  Check(bitrate_bps > 0.0, "run.bitrate_bps", "must be positive");
  Check(fps >= 1 && fps <= 120, "run.fps", "must be in [1, 120]");
  Check(fixed_factor > 0.0, "network.fixed_factor", "must be positive");
  Check(prop_ms >= 0.0, "network.prop_ms", "must be >= 0");
  Check(queue_cap_ms > 0.0, "network.queue_cap_ms", "must be positive");
  Check(trace_step_ms > 0.0, "network.trace_step_ms", "must be positive");
  Check(keyframe_period_s > 0.0, "encoder.keyframe_period_s", "must be positive");
  Check(kappa >= 1.0, "encoder.kappa", "must be >= 1");
  Check(cbr_window_s > 0.0, "encoder.cbr_window_s", "must be positive");
  Check(q_min > 0.0 && q_max > q_min, "encoder.q_min", "need 0 < q_min < q_max");
  Check(true_alpha1 >= 0.0 && true_alpha2 >= 0.0 && true_alpha1 + true_alpha2 > 0.0,
        "encoder.true_alpha1", "coefficients must be >= 0 and not both zero");
  Check(size_noise_sigma >= 0.0 && size_noise_sigma < 1.0, "encoder.size_noise_sigma",
        "must be in [0, 1)");
  Check(encode_base_ms >= 0.0 && encode_key_extra_ms >= 0.0, "encoder.encode_base_ms",
        "must be >= 0");
  Check(cubic_refit_frames >= 1, "encoder.cubic_refit_frames", "must be >= 1");
  Check(gap_rho > 0.0 && gap_rho <= 1.0, "encoder.gap_rho", "must be in (0, 1]");
  Check(theta >= 1.0, "dual.theta", "must be >= 1");
  Check(avg_half_life_s > 0.0, "dual.avg_half_life_s", "must be positive");
  Check(eta >= 1.0, "dual.eta", "must be >= 1");
  Check(mtu_payload_bytes >= 100 && mtu_payload_bytes <= 9000, "packet.mtu_payload_bytes",
        "must be in [100, 9000]");
  Check(header_bytes >= 0 && header_bytes <= 100, "packet.header_bytes", "must be in [0, 100]");
  Check(tick_ms > 0.0, "pacer.tick_ms", "must be positive");
  Check(burst_multiplier >= 1.0, "pacer.burst_multiplier", "must be >= 1");
  Check(carry_cap_ticks >= 0.0, "pacer.carry_cap_ticks", "must be >= 0");
  Check(jitter_weight > 0.0 && jitter_weight <= 1.0, "receiver.jitter_weight",
        "must be in (0, 1]");
  Check(jitter_k >= 0.0, "receiver.jitter_k", "must be >= 0");
  Check(min_wait_ms >= 0.0 && max_wait_ms >= min_wait_ms, "receiver.min_wait_ms",
        "need 0 <= min_wait_ms <= max_wait_ms");
  Check(decode_key_ms >= 0.0 && decode_delta_ms >= 0.0, "receiver.decode_key_ms",
        "must be >= 0");
  Check(stall_fps >= 1, "receiver.stall_fps", "must be >= 1");
  Check(gcc_interval_ms > 0.0, "gcc.interval_ms", "must be positive");
  Check(gcc_smoothing >= 0.0 && gcc_smoothing < 1.0, "gcc.smoothing", "must be in [0, 1)");
  Check(b_min > 0.0 && b_max > b_min, "gcc.b_min", "need 0 < b_min < b_max");
  Check(w_bitrate > 0.0 && w_fps > 0.0 && w_qp > 0.0 && w_delay > 0.0 && w_stall > 0.0,
        "rl.w_bitrate", "reward weights must be positive");
  Check(rl_dt_s > 0.0, "rl.dt_s", "must be positive");
  Check(gamma >= 0.0 && gamma <= 1.0, "rl.gamma", "must be in [0, 1]");
  Check(horizon >= 1, "rl.horizon", "must be >= 1");
  Check(epsilon > 0.0 && epsilon < 1.0, "rl.epsilon", "must be in (0, 1)");
  Check(actor_lr > 0.0 && critic_lr > 0.0, "rl.actor_lr", "learning rates must be positive");
  Check(ppo_epochs >= 1, "rl.ppo_epochs", "must be >= 1");
  Check(grid_points >= 2, "rl.grid_points", "must be >= 2");
  Check(state_samples >= 1, "rl.state_samples", "must be >= 1");
  Check(reward_scale > 0.0, "rl.reward_scale", "must be positive");
  Check(episodes >= 1, "train.episodes", "must be >= 1");
  Check(episode_s > 0.0, "train.episode_s", "must be positive");
  Check(checkpoint_every >= 1, "train.checkpoint_every", "must be >= 1");
  Check(workers >= 1, "train.workers", "must be >= 1");
  Check(train_fraction > 0.0 && train_fraction <= 1.0, "train.train_fraction",
        "must be in (0, 1]");
  Check(divergence_limit > 0.0, "train.divergence_limit", "must be positive");
}

ExperimentConfig ParseConfig(std::istream& in) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ParseError(e.message(), static_cast<int>(e.line()));
  }
  ExperimentConfig config;
  std::map<std::string, bool> known;
  VisitFields(config, [&](const char* section, const char* key, auto& field) {
    const std::string path = fmt::format("{}.{}", section, key);
    known[path] = true;
    if (auto v = tree.get_optional<std::string>(pt::ptree::path_type(path, '.'))) {
      Assign(path, *v, field);
    }
  });
  for (const auto& [section, body] : tree) {
    if (body.empty()) {
      throw ConfigError(fmt::format("key '{}' outside a section", section));
    }
    for (const auto& [key, value] : body) {
      (void)value;
      if (!known.count(section + "." + key)) {
        throw ConfigError(fmt::format("unknown key '{}.{}'", section, key));
      }
    }
  }
  config.Validate();
  return config;
}

ExperimentConfig LoadConfig(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(fmt::format("cannot open config '{}'", path));
  return ParseConfig(in);
}

void ApplyOverride(ExperimentConfig& config, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) {
    throw ConfigError(fmt::format("override '{}' is not section.key=value", assignment));
  }
  const std::string path = assignment.substr(0, eq);
  const std::string value = assignment.substr(eq + 1);
  bool found = false;
  VisitFields(config, [&](const char* section, const char* key, auto& field) {
    if (path == fmt::format("{}.{}", section, key)) {
      Assign(path, value, field);
      found = true;
    }
  });
  if (!found) throw ConfigError(fmt::format("unknown key '{}'", path));
}

std::string DumpConfig(const ExperimentConfig& config) {
  std::string out;
  std::string current;
  VisitFields(config, [&](const char* section, const char* key, const auto& field) {
    if (current != section) {
      out += fmt::format("{}[{}]\n", out.empty() ? "" : "\n", section);
      current = section;
    }
    out += fmt::format("{} = {}\n", key, Render(field));
  });
  return out;
}

std::string ConfigHash(const ExperimentConfig& config) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : DumpConfig(config)) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return fmt::format("{:016x}", h);
}

}  // namespace pdstream
