#ifndef PDSTREAM_DUAL_STREAM_H_
#define PDSTREAM_DUAL_STREAM_H_

#include <cstdint>
#include <optional>
#include <string_view>
#include <vector>

#include "pdstream/media.h"

namespace pdstream {

enum class DualPhase { kSingle, kDual };
std::string_view DualPhaseName(DualPhase phase);

struct DualStreamConfig {
  double theta = 1.2;            // "close to average" band
  double avg_half_life_s = 2.0;  // EWMA of stream-1 delta sizes
  double eta = 5.0;
};

struct DualStreamState {
  DualPhase phase = DualPhase::kSingle;
  double activation_ts = 0.0;
  double keyframe_size_R1 = 0.0;
  double encoded_bits_so_far = 0.0;  // stream 1 since activation
  double avg_delta_size = 0.0;
  int s1_deltas_since_activation = 0;
  int64_t last_s1_index = -1;
  int64_t skipped = 0;
  int64_t activations = 0;
};

struct EncodeDirective {
  StreamId stream = StreamId::kStream1;
  FrameType type = FrameType::kDelta;
  // Native frames between this capture and the stream's previous frame.
  double gap_frames = 1.0;

  bool operator==(const EncodeDirective&) const = default;
};

struct CaptureEvent {
  int64_t content_index = 0;
  double ts = 0.0;
  bool keyframe_due = false;
  // Packets of the previous stream-1 frame are still waiting in the pacer.
  bool s1_busy = false;
};

// Keyframe-triggered pseudo-dual-stream state machine. Stream 2 exists only
// while DUAL and never carries a keyframe.
class DualStreamController {
 public:
  explicit DualStreamController(DualStreamConfig config = {});

  const DualStreamState& state() const { return state_; }
  const DualStreamConfig& config() const { return config_; }

  // SINGLE + keyframe due -> {s1 KEY, s2 DELTA} and DUAL. DUAL -> s2 DELTA
  // always, then s1 DELTA unless stream 1 is busy or its reduced frame rate
  // `min_s1_gap` has not elapsed; a skipped stream-1 capture is dropped.
  std::vector<EncodeDirective> OnFrameCaptured(const CaptureEvent& event,
                                               double min_s1_gap = 1.0);

  // Records the stream-1 keyframe that opened the dual phase.
  void OnKeyframeEncoded(double bits);
  // Records a stream-1 delta; in SINGLE it also feeds the size average.
  void OnStream1Delta(double bits, double ts);

  // Throws std::logic_error in SINGLE or before any stream-1 delta since
  // activation. `f_k` is the average keyframe rate in Hz.
  bool ShouldDeactivate(double latest_s1_delta_bits, double now,
                        double f_k) const;
  // The dual phase has reached its 1 / (eta f_k) cap.
  bool Expired(double now, double f_k) const;
  void Deactivate();
  // Abandons a dual phase whose allocation was infeasible.
  void Abort();

 private:
  DualStreamConfig config_;
  DualStreamState state_;
  double last_avg_ts_ = 0.0;
  bool has_avg_ = false;
};

// First-come-first-rendered choice between the two copies of a capture.
class PlaybackSelector {
 public:
  // Returns true when this decodable copy should be displayed. A copy is
  // rejected once any frame with the same or a later capture time was
  // chosen. `PreferFirst` orders same-instant ties.
  bool Offer(double capture_ts, StreamId stream);

  // Orders copies completing at the same instant: stream 2 first.
  static bool PreferFirst(StreamId a, StreamId b) {
    return a == StreamId::kStream2 && b == StreamId::kStream1;
  }

  std::optional<double> last_rendered_capture() const { return last_; }

 private:
  std::optional<double> last_;
};

}  // namespace pdstream

#endif  // PDSTREAM_DUAL_STREAM_H_
