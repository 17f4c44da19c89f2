#ifndef PDSTREAM_NETSIM_H_
#define PDSTREAM_NETSIM_H_

#include <cstdint>
#include <iosfwd>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "pdstream/media.h"

namespace pdstream {

struct BandwidthSample {
  double t_ms = 0.0;
  double bw_bps = 0.0;
  double loss_rate = 0.0;
  double prop_ms = 0.0;
};

// Piecewise-constant link capacity. Playback past the end wraps around, the
// last sample lasting as long as the interval before it.
struct BandwidthTrace {
  std::string name;
  std::vector<BandwidthSample> samples;

  const BandwidthSample& At(double t_ms) const;
  double Period() const;
  // Throws ValidationError on an empty trace, non-increasing t, bw <= 0 or
  // loss outside [0, 0.5].
  void Validate() const;
  double MeanBps() const;
  double StdBps() const;
};

// CSV rows `t_ms,bw_kbps[,loss_rate,prop_ms]`; an optional header line and
// `#` comments are skipped. Missing optional columns take 0 loss and
// `default_prop_ms`.
BandwidthTrace ReadTraceCsv(std::istream& in, double default_prop_ms,
                            std::string name = "trace");
BandwidthTrace LoadTrace(const std::string& path, double default_prop_ms);
void WriteTraceCsv(std::ostream& out, const BandwidthTrace& trace);

// Constant capacity at `factor` times the video bitrate.
BandwidthTrace FixedBandwidthTrace(double video_bps, double factor,
                                   double prop_ms);

enum class NetworkKind { k4G, k5G, kWifi };
NetworkKind ParseNetworkKind(std::string_view name);
std::string_view NetworkKindName(NetworkKind kind);

struct NetworkEnvelope {
  double mean_mbps = 0.0;
  double std_mbps = 0.0;
  double corr = 0.95;  // lag-1 autocorrelation of the log-bandwidth process
};
NetworkEnvelope DefaultEnvelope(NetworkKind kind);

// Synthetic trace whose sample mean and standard deviation match the
// envelope, sampled every `step_ms`.
BandwidthTrace GenerateNetworkTrace(NetworkKind kind, uint64_t seed,
                                    double duration_s, double step_ms,
                                    double prop_ms);
BandwidthTrace GenerateNetworkTrace(const NetworkEnvelope& envelope,
                                    uint64_t seed, double duration_s,
                                    double step_ms, double prop_ms,
                                    std::string name);

struct LinkConfig {
  double queue_cap_ms = 300.0;
  uint64_t seed = 1;
};

// Single FIFO bottleneck with drop-tail and Bernoulli loss.
class Link {
 public:
  Link(const BandwidthTrace* trace, LinkConfig config);

  // Packets released by the pacer at `now`, in order. Returns them with
  // ts_arrived / lost filled in. Drop-tail losses never occupy the link;
  // random losses do.
  std::vector<Packet> Send(std::span<const Packet> released, double now);

  double QueueDelay(double now) const;
  // 2 * propagation + current queue drain time.
  double RttProbe(double now) const;
  double busy_until() const { return busy_until_; }
  int64_t dropped() const { return dropped_; }

 private:
  const BandwidthTrace* trace_;
  LinkConfig config_;
  double busy_until_ = 0.0;
  double last_arrival_ = 0.0;
  int64_t dropped_ = 0;
  std::mt19937_64 rng_;
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

}  // namespace pdstream

#endif  // PDSTREAM_NETSIM_H_
