#ifndef PDSTREAM_SIMULATOR_H_
#define PDSTREAM_SIMULATOR_H_

#include <cstdint>
#include <string>
#include <vector>

#include "pdstream/allocator.h"
#include "pdstream/analytics.h"
#include "pdstream/config.h"
#include "pdstream/media.h"
#include "pdstream/netsim.h"
#include "pdstream/policy.h"
#include "pdstream/receiver.h"

namespace pdstream {

// Long-format event log row.
struct EventRow {
  double ts = 0.0;
  std::string event;
  std::string key;
  double value = 0.0;
};

struct AllocationRow {
  double ts = 0.0;
  double b = 0.0;
  double R1 = 0.0;
  bool reallocation = false;
  Allocation alloc;
};

struct SimulationOptions {
  // Required for the RL policy.
  const PolicyNet* policy = nullptr;
  // Sample actions instead of taking the argmax, and record transitions.
  bool explore = false;
  uint64_t explore_seed = 1;
};

struct SimulationResult {
  std::vector<FrameRecord> frames;  // resolved frames, in resolution order
  std::vector<EncodedFrame> encoded;
  std::vector<EventRow> events;
  std::vector<AllocationRow> allocations;
  PlaybackStats playback;
  NetworkSummary network;
  std::vector<double> rtt_samples;  // every 100 ms
  std::vector<double> rewards;      // unscaled, one per RL step
  std::vector<Transition> transitions;
  double duration_ms = 0.0;
};

// Runs one experiment on the 5 ms pacer grid. Deterministic for fixed
// inputs. The content trace must cover duration * fps frames.
SimulationResult Simulate(const ExperimentConfig& config,
                          const ContentTrace& content,
                          const BandwidthTrace& network,
                          const SimulationOptions& options = {});

}  // namespace pdstream

#endif  // PDSTREAM_SIMULATOR_H_
