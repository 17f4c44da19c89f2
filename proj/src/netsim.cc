#include "pdstream/netsim.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include <fmt/format.h>

#include "pdstream/errors.h"

namespace pdstream {

const BandwidthSample& BandwidthTrace::At(double t_ms) const {
  const double period = Period();
  double t = t_ms;
  if (period > 0.0 && t >= period) t = std::fmod(t, period);
  // Last sample with sample.t_ms <= t (zero-order hold).
  auto it = std::upper_bound(samples.begin(), samples.end(), t,
                             [](double v, const BandwidthSample& s) { return v < s.t_ms; });
  if (it == samples.begin()) return samples.front();
  return *(it - 1);
}

double BandwidthTrace::Period() const {
  if (samples.size() < 2) return 0.0;
  const auto n = samples.size();
  return samples[n - 1].t_ms + (samples[n - 1].t_ms - samples[n - 2].t_ms);
}

void BandwidthTrace::Validate() const {
  if (samples.empty()) throw ValidationError("bandwidth trace is empty");
  for (size_t i = 0; i < samples.size(); ++i) {
    const auto& s = samples[i];
    if (i > 0 && !(s.t_ms > samples[i - 1].t_ms)) {
      throw ValidationError(fmt::format("trace t not increasing at row {}", i + 1));
    }
    if (!(s.bw_bps > 0.0)) {
      throw ValidationError(fmt::format("non-positive bandwidth at row {}", i + 1));
    }
    if (!(s.loss_rate >= 0.0 && s.loss_rate <= 0.5)) {
      throw ValidationError(fmt::format("loss rate outside [0, 0.5] at row {}", i + 1));
    }
    if (!(s.prop_ms >= 0.0)) {
      throw ValidationError(fmt::format("negative propagation delay at row {}", i + 1));
    }
  }
}

double BandwidthTrace::MeanBps() const {
  double sum = 0.0;
  for (const auto& s : samples) sum += s.bw_bps;
  return samples.empty() ? 0.0 : sum / samples.size();
}

double BandwidthTrace::StdBps() const {
  if (samples.size() < 2) return 0.0;
  const double mean = MeanBps();
  double ss = 0.0;
  for (const auto& s : samples) ss += (s.bw_bps - mean) * (s.bw_bps - mean);
  return std::sqrt(ss / (samples.size() - 1));
}

BandwidthTrace ReadTraceCsv(std::istream& in, double default_prop_ms,
                            std::string name) {
  BandwidthTrace trace;
  trace.name = std::move(name);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    if (trace.samples.empty() && line.rfind("t_ms", 0) == 0) continue;

    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != 2 && cells.size() != 4) {
      throw ParseError("expected 2 or 4 columns", line_no);
    }
    BandwidthSample s;
    try {
      size_t used = 0;
      s.t_ms = std::stod(cells[0], &used);
      if (used != cells[0].size()) throw ParseError("trailing characters", line_no);
      s.bw_bps = std::stod(cells[1], &used) * 1000.0;
      if (used != cells[1].size()) throw ParseError("trailing characters", line_no);
      s.loss_rate = cells.size() == 4 ? std::stod(cells[2]) : 0.0;
      s.prop_ms = cells.size() == 4 ? std::stod(cells[3]) : default_prop_ms;
    } catch (const std::logic_error&) {
      throw ParseError("malformed number", line_no);
    }
    if (!trace.samples.empty() && !(s.t_ms > trace.samples.back().t_ms)) {
      throw ValidationError(fmt::format("t_ms not increasing at line {}", line_no));
    }
    trace.samples.push_back(s);
  }
  trace.Validate();
  return trace;
}

BandwidthTrace LoadTrace(const std::string& path, double default_prop_ms) {
  std::ifstream in(path);
  if (!in) throw ParseError(fmt::format("cannot open trace '{}'", path), 0);
  return ReadTraceCsv(in, default_prop_ms, path);
}

void WriteTraceCsv(std::ostream& out, const BandwidthTrace& trace) {
  out << "t_ms,bw_kbps,loss_rate,prop_ms\n";
  for (const auto& s : trace.samples) {
    out << fmt::format("{:.0f},{:.3f},{:.4f},{:.1f}\n", s.t_ms, s.bw_bps / 1000.0,
                       s.loss_rate, s.prop_ms);
  }
}

BandwidthTrace FixedBandwidthTrace(double video_bps, double factor,
                                   double prop_ms) {
  BandwidthTrace trace;
  trace.name = fmt::format("fixed_{:.0f}kbps", video_bps * factor / 1000.0);
  trace.samples.push_back({0.0, video_bps * factor, 0.0, prop_ms});
  return trace;
}

NetworkKind ParseNetworkKind(std::string_view name) {
  if (name == "4g") return NetworkKind::k4G;
  if (name == "5g") return NetworkKind::k5G;
  if (name == "wifi") return NetworkKind::kWifi;
  throw ConfigError(fmt::format("unknown network kind '{}'", name));
}

std::string_view NetworkKindName(NetworkKind kind) {
  switch (kind) {
    case NetworkKind::k4G:
      return "4g";
    case NetworkKind::k5G:
      return "5g";
    case NetworkKind::kWifi:
      return "wifi";
  }
  return "unknown";
}

NetworkEnvelope DefaultEnvelope(NetworkKind kind) {
  switch (kind) {
    case NetworkKind::k5G:
      return {2.23, 1.41, 0.9};
    case NetworkKind::k4G:
      return {1.83, 0.53, 0.9};
    case NetworkKind::kWifi:
      return {1.18, 0.20, 0.9};
  }
  return {};
}

BandwidthTrace GenerateNetworkTrace(NetworkKind kind, uint64_t seed,
                                    double duration_s, double step_ms,
                                    double prop_ms) {
  return GenerateNetworkTrace(DefaultEnvelope(kind), seed, duration_s, step_ms,
                              prop_ms, std::string(NetworkKindName(kind)));
}

BandwidthTrace GenerateNetworkTrace(const NetworkEnvelope& envelope,
                                    uint64_t seed, double duration_s,
                                    double step_ms, double prop_ms,
                                    std::string name) {
  if (!(duration_s > 0.0) || !(step_ms > 0.0)) {
    throw ConfigError("trace duration and step must be positive");
  }
  const auto n = static_cast<size_t>(std::max(2.0, std::round(duration_s * 1000.0 / step_ms)));
  const double cv = envelope.std_mbps / envelope.mean_mbps;
  const double sigma = std::sqrt(std::log1p(cv * cv));
  const double mu = std::log(envelope.mean_mbps) - 0.5 * sigma * sigma;

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> mbps(n);
  double x = mu + sigma * normal(rng);
  for (size_t i = 0; i < n; ++i) {
    x = mu + envelope.corr * (x - mu) +
        sigma * std::sqrt(1.0 - envelope.corr * envelope.corr) * normal(rng);
    mbps[i] = std::exp(x);
  }

  // Pin the sample moments to the envelope.
  double mean = 0.0;
  for (double v : mbps) mean += v;
  mean /= n;
  double ss = 0.0;
  for (double v : mbps) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / (n - 1));
  const double floor = 0.05 * envelope.mean_mbps;
  for (double& v : mbps) {
    v = envelope.mean_mbps + (v - mean) * (sd > 0.0 ? envelope.std_mbps / sd : 0.0);
    v = std::max(v, floor);
  }

  BandwidthTrace trace;
  trace.name = std::move(name);
  trace.samples.reserve(n);
  for (size_t i = 0; i < n; ++i) {
    trace.samples.push_back({i * step_ms, mbps[i] * 1e6, 0.0, prop_ms});
  }
  return trace;
}

Link::Link(const BandwidthTrace* trace, LinkConfig config)
    : trace_(trace), config_(config), rng_(config.seed) {}

std::vector<Packet> Link::Send(std::span<const Packet> released, double now) {
  std::vector<Packet> out(released.begin(), released.end());
  for (auto& p : out) {
    const double start = std::max(now, busy_until_);
    const auto& sample = trace_->At(start);
    const double tx_ms = p.size_bytes * 8.0 / sample.bw_bps * 1000.0;
    if (start - now + tx_ms > config_.queue_cap_ms) {
      p.lost = true;
      p.ts_arrived = 0.0;
      ++dropped_;
      continue;
    }
    busy_until_ = start + tx_ms;
    // A drop in propagation delay must not overtake earlier packets.
    p.ts_arrived = std::max(busy_until_ + sample.prop_ms, last_arrival_);
    last_arrival_ = p.ts_arrived;
    // Always draw so the loss sequence does not depend on the rate.
    const double u = uniform_(rng_);
    p.lost = u < sample.loss_rate;
  }
  return out;
}

double Link::QueueDelay(double now) const {
  return std::max(0.0, busy_until_ - now);
}

double Link::RttProbe(double now) const {
  return 2.0 * trace_->At(now).prop_ms + QueueDelay(now);
}

}  // namespace pdstream
