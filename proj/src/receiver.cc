#include "pdstream/receiver.h"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <fmt/format.h>

namespace pdstream {

void FrameAssembler::Register(const EncodedFrame& frame, int packets) {
  Partial p;
  p.frame = frame;
  p.expected = packets;
  if (!partial_.emplace(frame.frame_id, p).second) {
    throw std::logic_error(fmt::format("frame {} registered twice", frame.frame_id));
  }
}

std::optional<FrameAssembler::Result> FrameAssembler::OnPacket(const Packet& pkt) {
  auto it = partial_.find(pkt.frame_id);
  if (it == partial_.end()) {
    throw std::logic_error(fmt::format("packet for unknown frame {}", pkt.frame_id));
  }
  Partial& p = it->second;
  ++p.seen;
  if (pkt.lost) {
    p.any_lost = true;
  } else {
    p.last_arrival = std::max(p.last_arrival, pkt.ts_arrived);
  }
  if (pkt.seq_in_frame == 0) {
    p.first_sent = pkt.ts_sent;
    p.first_enqueued = pkt.ts_enqueued;
  }
  if (p.seen < p.expected) return std::nullopt;

  Result r;
  r.frame_id = pkt.frame_id;
  r.completion_ts = p.last_arrival;
  r.first_sent_ts = p.first_sent;
  r.first_enqueued_ts = p.first_enqueued;
  r.decodable = !p.any_lost;
  if (p.frame.stream == StreamId::kStream1) {
    if (p.frame.type == FrameType::kKey) s1_broken_ = false;
    r.degraded = r.decodable && s1_broken_;
    if (!r.decodable) s1_broken_ = true;
  }
  resolved_.emplace(pkt.frame_id, p.frame);
  partial_.erase(it);
  return r;
}

const EncodedFrame& FrameAssembler::frame(int64_t frame_id) const {
  auto it = resolved_.find(frame_id);
  if (it != resolved_.end()) return it->second;
  auto pit = partial_.find(frame_id);
  if (pit == partial_.end()) throw std::out_of_range("unknown frame id");
  return pit->second.frame;
}

JitterBuffer::JitterBuffer(JitterConfig config) : config_(config) {
  state_.min_wait = config_.min_wait_ms;
  state_.target_wait = std::clamp(config_.min_wait_ms, 0.0, config_.max_wait_ms);
}

const JitterBufferState& JitterBuffer::Update(double completion_ts,
                                              double capture_ts) {
  if (prev_) {
    const double observed = completion_ts - prev_->first;
    const double expected = capture_ts - prev_->second;
    state_.delay_var_ewma = (1.0 - config_.weight) * state_.delay_var_ewma +
                            config_.weight * std::abs(observed - expected);
  }
  prev_ = {completion_ts, capture_ts};
  state_.target_wait = std::clamp(config_.min_wait_ms + config_.k_sigma * state_.delay_var_ewma,
                                  0.0, config_.max_wait_ms);
  return state_;
}

Receiver::Receiver(ReceiverConfig config)
    : config_(config), jitter_(config.jitter) {}

void Receiver::RegisterFrame(const EncodedFrame& frame, int packets) {
  assembler_.Register(frame, packets);
}

std::optional<FrameRecord> Receiver::OnPacket(const Packet& pkt) {
  const auto result = assembler_.OnPacket(pkt);
  if (!result) return std::nullopt;
  const EncodedFrame& f = assembler_.frame(result->frame_id);

  FrameRecord rec;
  rec.frame_id = f.frame_id;
  rec.content_index = f.content_index;
  rec.stream = f.stream;
  rec.type = f.type;
  rec.size_bits = f.size_bits;
  rec.qp_index = f.qp_index;
  rec.capture_ts = f.capture_ts;
  rec.completion_ts = result->completion_ts;
  rec.decodable = result->decodable;
  rec.degraded = result->degraded;
  rec.delay.d_encode = f.encode_done_ts - f.capture_ts;
  rec.delay.d_other = result->first_enqueued_ts - f.encode_done_ts;
  rec.delay.d_pacer = result->first_sent_ts - result->first_enqueued_ts;

  if (rec.decodable) {
    rec.delay.d_trans = result->completion_ts - result->first_sent_ts;
    if (selector_.Offer(f.capture_ts, f.stream)) {
      const double target = jitter_.Update(result->completion_ts, f.capture_ts).target_wait;
      // One decoder: a frame waits for the previous one to finish.
      const double decode_start = std::max(result->completion_ts + target, last_render_);
      rec.rendered = true;
      rec.delay.d_jitter = decode_start - result->completion_ts;
      rec.delay.d_decode =
          f.type == FrameType::kKey ? config_.decode_key_ms : config_.decode_delta_ms;
      rec.render_ts = decode_start + rec.delay.d_decode;
      last_render_ = rec.render_ts;
    }
  }
  rec.delay.d_e2e = rec.delay.Sum();
  records_.push_back(rec);
  return rec;
}

std::vector<int> RenderedPerWindow(const std::vector<double>& render_ts,
                                   double duration_ms, double window_ms) {
  const auto n = static_cast<size_t>(std::max(1.0, std::floor(duration_ms / window_ms)));
  std::vector<int> counts(n, 0);
  for (double t : render_ts) {
    if (t < 0.0) continue;
    const auto w = static_cast<size_t>(t / window_ms);
    if (w < n) ++counts[w];
  }
  return counts;
}

PlaybackStats Receiver::Finish(double duration_ms) {
  std::vector<double> ts;
  for (const auto& r : records_) {
    if (r.rendered) ts.push_back(r.render_ts);
  }
  const auto counts = RenderedPerWindow(ts, duration_ms);
  PlaybackStats stats;
  stats.windows = static_cast<int64_t>(counts.size());
  int64_t stalled = 0;
  int64_t total = 0;
  for (int c : counts) {
    total += c;
    if (c < config_.stall_fps) ++stalled;
  }
  stats.rendered = static_cast<int64_t>(ts.size());
  stats.mean_fps = static_cast<double>(total) / counts.size();
  stats.stall_rate = static_cast<double>(stalled) / counts.size();
  for (auto& r : records_) {
    if (!r.rendered) continue;
    const auto w = static_cast<size_t>(r.render_ts / 1000.0);
    r.stalled = w < counts.size() && counts[w] < config_.stall_fps;
  }
  return stats;
}

}  // namespace pdstream
