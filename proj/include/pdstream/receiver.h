#ifndef PDSTREAM_RECEIVER_H_
#define PDSTREAM_RECEIVER_H_

#include <cstdint>
#include <optional>
#include <unordered_map>
#include <vector>

#include "pdstream/dual_stream.h"
#include "pdstream/media.h"

namespace pdstream {

struct DelayBreakdown {
  double d_encode = 0.0;
  double d_pacer = 0.0;
  double d_trans = 0.0;
  double d_jitter = 0.0;
  double d_decode = 0.0;
  double d_other = 0.0;
  double d_e2e = 0.0;

  double Sum() const {
    return d_encode + d_pacer + d_trans + d_jitter + d_decode + d_other;
  }
};

struct FrameRecord {
  int64_t frame_id = 0;
  int64_t content_index = 0;
  StreamId stream = StreamId::kStream1;
  FrameType type = FrameType::kDelta;
  int64_t size_bits = 0;
  int qp_index = 0;
  double capture_ts = 0.0;
  double completion_ts = 0.0;
  double render_ts = 0.0;  // display time, valid when rendered
  DelayBreakdown delay;
  bool decodable = false;
  bool degraded = false;  // decodable but its stream-1 reference chain is broken
  bool rendered = false;
  bool stalled = false;
};

// Collects the packets of each frame. Lost packets make the frame
// undecodable; an undecodable stream-1 frame degrades every later stream-1
// delta until the next keyframe.
class FrameAssembler {
 public:
  struct Result {
    int64_t frame_id = 0;
    double completion_ts = 0.0;
    double first_sent_ts = 0.0;
    double first_enqueued_ts = 0.0;
    bool decodable = false;
    bool degraded = false;
  };

  void Register(const EncodedFrame& frame, int packets);
  // Feed every packet exactly once, delivered or lost, in resolution order.
  // Returns the frame once all of its packets are accounted for.
  std::optional<Result> OnPacket(const Packet& pkt);

  const EncodedFrame& frame(int64_t frame_id) const;
  bool s1_chain_broken() const { return s1_broken_; }

 private:
  struct Partial {
    EncodedFrame frame;
    int expected = 0;
    int seen = 0;
    bool any_lost = false;
    double last_arrival = 0.0;
    double first_sent = 0.0;
    double first_enqueued = 0.0;
  };
  std::unordered_map<int64_t, Partial> partial_;
  std::unordered_map<int64_t, EncodedFrame> resolved_;
  bool s1_broken_ = false;
};

struct JitterConfig {
  double weight = 0.05;
  double k_sigma = 3.0;
  double min_wait_ms = 0.0;
  double max_wait_ms = 500.0;
};

struct JitterBufferState {
  double target_wait = 0.0;
  double delay_var_ewma = 0.0;
  double min_wait = 0.0;
};

// EWMA of inter-arrival deviation; target = min_wait + k * ewma.
class JitterBuffer {
 public:
  explicit JitterBuffer(JitterConfig config = {});

  // One completed frame; the first call only primes the reference.
  const JitterBufferState& Update(double completion_ts, double capture_ts);
  const JitterBufferState& state() const { return state_; }

 private:
  JitterConfig config_;
  JitterBufferState state_;
  std::optional<std::pair<double, double>> prev_;  // (completion, capture)
};

struct ReceiverConfig {
  JitterConfig jitter;
  double decode_key_ms = 5.0;
  double decode_delta_ms = 3.0;
  int stall_fps = 12;
};

struct PlaybackStats {
  double mean_fps = 0.0;
  double stall_rate = 0.0;  // fraction of 1 s windows below stall_fps
  int64_t windows = 0;
  int64_t rendered = 0;
};

// Reassembly, jitter buffering and display for one run.
class Receiver {
 public:
  explicit Receiver(ReceiverConfig config = {});

  void RegisterFrame(const EncodedFrame& frame, int packets);
  // Returns the record of a frame resolved by this packet.
  std::optional<FrameRecord> OnPacket(const Packet& pkt);

  // Assigns 1 s FPS windows over [0, duration_ms) and stall flags.
  PlaybackStats Finish(double duration_ms);

  const std::vector<FrameRecord>& records() const { return records_; }
  const JitterBufferState& jitter_state() const { return jitter_.state(); }
  double last_render_ts() const { return last_render_; }

 private:
  ReceiverConfig config_;
  FrameAssembler assembler_;
  JitterBuffer jitter_;
  PlaybackSelector selector_;
  std::vector<FrameRecord> records_;
  double last_render_ = 0.0;
};

// Per-window rendered-frame counts over [0, duration_ms).
std::vector<int> RenderedPerWindow(const std::vector<double>& render_ts,
                                   double duration_ms, double window_ms = 1000.0);

}  // namespace pdstream

#endif  // PDSTREAM_RECEIVER_H_
