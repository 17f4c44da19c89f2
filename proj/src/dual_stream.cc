#include "pdstream/dual_stream.h"

#include <cmath>
#include <stdexcept>

namespace pdstream {

std::string_view DualPhaseName(DualPhase phase) {
  return phase == DualPhase::kDual ? "DUAL" : "SINGLE";
}

DualStreamController::DualStreamController(DualStreamConfig config)
    : config_(config) {}

std::vector<EncodeDirective> DualStreamController::OnFrameCaptured(
    const CaptureEvent& event, double min_s1_gap) {
  const double s1_gap =
      state_.last_s1_index < 0 ? 1.0
                               : static_cast<double>(event.content_index - state_.last_s1_index);
  if (state_.phase == DualPhase::kSingle) {
    state_.last_s1_index = event.content_index;
    if (!event.keyframe_due) {
      return {{StreamId::kStream1, FrameType::kDelta, s1_gap}};
    }
    state_.phase = DualPhase::kDual;
    state_.activation_ts = event.ts;
    state_.keyframe_size_R1 = 0.0;
    state_.encoded_bits_so_far = 0.0;
    state_.s1_deltas_since_activation = 0;
    ++state_.activations;
    return {{StreamId::kStream1, FrameType::kKey, s1_gap},
            {StreamId::kStream2, FrameType::kDelta, 1.0}};
  }

  std::vector<EncodeDirective> out{{StreamId::kStream2, FrameType::kDelta, 1.0}};
  if (event.s1_busy || s1_gap + 1e-9 < min_s1_gap) {
    ++state_.skipped;
  } else {
    state_.last_s1_index = event.content_index;
    out.push_back({StreamId::kStream1, FrameType::kDelta, s1_gap});
  }
  return out;
}

void DualStreamController::OnKeyframeEncoded(double bits) {
  state_.keyframe_size_R1 = bits;
  state_.encoded_bits_so_far = bits;
}

void DualStreamController::OnStream1Delta(double bits, double ts) {
  if (state_.phase == DualPhase::kDual) {
    state_.encoded_bits_so_far += bits;
    ++state_.s1_deltas_since_activation;
    return;
  }
  if (!has_avg_) {
    state_.avg_delta_size = bits;
    has_avg_ = true;
  } else {
    const double dt = std::max(0.0, ts - last_avg_ts_) / 1000.0;
    const double w = 1.0 - std::exp2(-dt / config_.avg_half_life_s);
    state_.avg_delta_size += w * (bits - state_.avg_delta_size);
  }
  last_avg_ts_ = ts;
}

bool DualStreamController::ShouldDeactivate(double latest_s1_delta_bits,
                                            double now, double f_k) const {
  if (state_.phase != DualPhase::kDual) {
    throw std::logic_error("ShouldDeactivate called outside the dual phase");
  }
  if (state_.s1_deltas_since_activation < 1) {
    throw std::logic_error("no stream-1 delta encoded since activation");
  }
  if (Expired(now, f_k)) return true;
  return has_avg_ && latest_s1_delta_bits <= config_.theta * state_.avg_delta_size;
}

bool DualStreamController::Expired(double now, double f_k) const {
  if (state_.phase != DualPhase::kDual) return false;
  const double cap_ms = 1000.0 / (config_.eta * f_k);
  return now - state_.activation_ts >= cap_ms - 1e-9;
}

void DualStreamController::Deactivate() { state_.phase = DualPhase::kSingle; }

void DualStreamController::Abort() {
  state_.phase = DualPhase::kSingle;
  state_.keyframe_size_R1 = 0.0;
}

bool PlaybackSelector::Offer(double capture_ts, StreamId /*stream*/) {
  if (last_ && capture_ts <= *last_) return false;
  last_ = capture_ts;
  return true;
}

}  // namespace pdstream
