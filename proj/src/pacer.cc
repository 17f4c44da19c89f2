#include "pdstream/pacer.h"

#include <algorithm>
#include <stdexcept>

#include <fmt/format.h>

namespace pdstream {

PacerQueue::PacerQueue(PacerConfig config) : config_(config) {}

double PacerQueue::TickAllowance(double multiplier) const {
  return pacing_rate_bps_ * multiplier * config_.tick_ms / 1000.0 / 8.0;
}

void PacerQueue::Enqueue(Packet pkt, double now) {
  if (!seen_ids_.insert(pkt.pkt_id).second) {
    throw std::logic_error(fmt::format("packet {} enqueued twice", pkt.pkt_id));
  }
  pkt.ts_enqueued = now;
  queued_bytes_ += pkt.size_bytes;
  queues_[static_cast<size_t>(pkt.priority)].push_back(pkt);
}

std::vector<Packet> PacerQueue::Tick(double now) {
  double multiplier = 1.0;
  switch (burst_suppressed_ ? BurstPolicy::kNever : config_.burst_policy) {
    case BurstPolicy::kNever:
      break;
    case BurstPolicy::kAlways:
      multiplier = config_.burst_multiplier;
      break;
    case BurstPolicy::kWhenBacklogged:
      if (static_cast<double>(queued_bytes_) > TickAllowance(1.0)) {
        multiplier = config_.burst_multiplier;
      }
      break;
  }
  last_multiplier_ = multiplier;
  const double allowance = TickAllowance(multiplier);
  const double carry_cap = std::max(config_.carry_cap_ticks * allowance,
                                    static_cast<double>(config_.max_packet_bytes));
  budget_bytes_ += allowance;

  std::vector<Packet> released;
  for (auto& queue : queues_) {
    while (!queue.empty() && queue.front().size_bytes <= budget_bytes_) {
      Packet p = queue.front();
      queue.pop_front();
      budget_bytes_ -= p.size_bytes;
      queued_bytes_ -= p.size_bytes;
      p.ts_sent = now;
      released.push_back(p);
    }
    // A blocked head holds back every lower class.
    if (!queue.empty()) break;
  }
  budget_bytes_ = std::clamp(budget_bytes_, 0.0, carry_cap);
  return released;
}

}  // namespace pdstream
