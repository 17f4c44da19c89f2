#ifndef PDSTREAM_PACER_H_
#define PDSTREAM_PACER_H_

#include <array>
#include <cstdint>
#include <deque>
#include <unordered_set>
#include <vector>

#include "pdstream/media.h"

namespace pdstream {

enum class BurstPolicy {
  kNever,           // always 1x
  kWhenBacklogged,  // multiplier only while the queue exceeds one tick
  kAlways,
};

struct PacerConfig {
  double tick_ms = 5.0;
  double burst_multiplier = 2.5;
  BurstPolicy burst_policy = BurstPolicy::kWhenBacklogged;
  // Unused budget carried into the next tick, in ticks of allowance. Never
  // less than one maximum-size packet so low rates cannot stall.
  double carry_cap_ticks = 1.0;
  int max_packet_bytes = 1212;
};

// Token-budget pacing queue with strict priority classes and FIFO order
// within each class. Lower PriorityClass values drain first, so VIDEO_S1
// only moves once VIDEO_S2 is empty and budget remains.
class PacerQueue {
 public:
  explicit PacerQueue(PacerConfig config = {});

  void set_pacing_rate(double bps) { pacing_rate_bps_ = bps; }
  // Forces a 1x multiplier regardless of the burst policy.
  void set_burst_suppressed(bool suppressed) { burst_suppressed_ = suppressed; }
  bool burst_suppressed() const { return burst_suppressed_; }
  double pacing_rate() const { return pacing_rate_bps_; }
  const PacerConfig& config() const { return config_; }

  // Throws std::logic_error on a duplicate pkt_id.
  void Enqueue(Packet pkt, double now);

  // One pacing interval at `now`: accrue budget, then release packets in
  // priority order while the budget covers the head packet.
  std::vector<Packet> Tick(double now);

  double budget_bytes() const { return budget_bytes_; }
  // Multiplier applied on the most recent tick.
  double last_multiplier() const { return last_multiplier_; }
  size_t depth(PriorityClass c) const {
    return queues_[static_cast<size_t>(c)].size();
  }
  int64_t queued_bytes() const { return queued_bytes_; }
  bool empty() const { return queued_bytes_ == 0; }

 private:
  double TickAllowance(double multiplier) const;

  PacerConfig config_;
  double pacing_rate_bps_ = 1e6;
  double budget_bytes_ = 0.0;
  double last_multiplier_ = 1.0;
  bool burst_suppressed_ = false;
  int64_t queued_bytes_ = 0;
  std::array<std::deque<Packet>, kNumPriorityClasses> queues_;
  std::unordered_set<int64_t> seen_ids_;
};

}  // namespace pdstream

#endif  // PDSTREAM_PACER_H_
