#include "pdstream/simulator.h"

#include <algorithm>
#include <cmath>
#include <deque>
#include <memory>
#include <optional>
#include <queue>
#include <stdexcept>

#include <fmt/format.h>

#include "pdstream/dual_stream.h"
#include "pdstream/encoder.h"
#include "pdstream/errors.h"
#include "pdstream/pacer.h"
#include "pdstream/rate_control.h"

namespace pdstream {
namespace {

constexpr double kSampleMs = 100.0;

// Timestamped values kept for a bounded look-back.
class Series {
 public:
  void Add(double ts, double value) { items_.emplace_back(ts, value); }
  void Prune(double before) {
    while (!items_.empty() && items_.front().first < before) items_.pop_front();
  }
  // Sum, count over (from, to].
  std::pair<double, int> Window(double from, double to) const {
    double sum = 0.0;
    int n = 0;
    for (const auto& [ts, v] : items_) {
      if (ts > from && ts <= to) {
        sum += v;
        ++n;
      }
    }
    return {sum, n};
  }

 private:
  std::deque<std::pair<double, double>> items_;
};

struct PendingFrame {
  EncodedFrame frame;
  PriorityClass priority;
};

struct ArrivalEvent {
  double ts;
  int64_t order;
  Packet pkt;
  bool operator>(const ArrivalEvent& o) const {
    return ts != o.ts ? ts > o.ts : order > o.order;
  }
};

EncoderMode ToEncoderMode(StreamingMode mode) {
  switch (mode) {
    case StreamingMode::kCbrS:
      return EncoderMode::kCbrS;
    case StreamingMode::kKeyMin:
      return EncoderMode::kKeyMin;
    case StreamingMode::kCbrL:
    case StreamingMode::kPdStream:
      return EncoderMode::kCbrL;
  }
  return EncoderMode::kCbrL;
}

class Session {
 public:
  Session(const ExperimentConfig& config, const ContentTrace& content,
          const BandwidthTrace& network, const SimulationOptions& options)
      : cfg_(config),
        options_(options),
        mode_(config.Mode()),
        policy_kind_(config.Policy()),
        pdstream_(mode_ == StreamingMode::kPdStream),
        oracle_(content, config.gap_rho),
        enc1_(config.Encoder(ToEncoderMode(mode_), config.seed * 2 + 1), &oracle_),
        dual_(config.Dual()),
        pacer_(config.Pacer()),
        link_(&network, {config.queue_cap_ms, config.seed * 7919 + 13}),
        receiver_(config.Receiver()),
        gcc_(config.Gcc(), config.bitrate_bps),
        state_builder_(static_cast<size_t>(config.state_samples)),
        explore_rng_(options.explore_seed),
        target_bps_(config.bitrate_bps),
        packetization_(config.Packetization()) {
    if (policy_kind_ == RatePolicy::kRl) {
      if (options_.policy == nullptr) throw ConfigError("RL policy run without a policy network");
      if (options_.policy->input_dim() != static_cast<int>(state_builder_.dim())) {
        throw ConfigError("policy input size does not match rl.state_samples");
      }
      target_bps_ = options_.policy->grid()[options_.policy->grid().size() / 2];
    }
    pacer_.set_pacing_rate(PacingRate(target_bps_));
    const double needed = config.duration_s * config.fps;
    if (static_cast<double>(content.frames.size()) < needed) {
      throw ConfigError(fmt::format("content trace has {} frames, run needs {:.0f}",
                                    content.frames.size(), needed));
    }
    f_k_ = 1.0 / config.keyframe_period_s;
  }

  SimulationResult Run() {
    result_.duration_ms = cfg_.duration_s * 1000.0;
    const double frame_ms = 1000.0 / cfg_.fps;
    const double end = result_.duration_ms;
    int64_t next_capture = 0;
    double next_sample = kSampleMs;
    double next_gcc = cfg_.gcc_interval_ms;
    const double rl_ms = cfg_.rl_dt_s * 1000.0;
    double next_rl = 0.0;
    Event(0.0, "target_bps", "", target_bps_);

    const auto ticks = static_cast<int64_t>(std::ceil(end / cfg_.tick_ms));
    for (int64_t k = 0; k <= ticks; ++k) {
      const double t = k * cfg_.tick_ms;
      if (t > end) break;
      while (next_capture * frame_ms <= t && next_capture * frame_ms < end) {
        Capture(next_capture, next_capture * frame_ms);
        ++next_capture;
      }
      EnqueueReady(t);
      const auto released = pacer_.Tick(t);
      if (!released.empty()) {
        for (auto& p : link_.Send(released, t)) {
          ++result_.network.packets_sent;
          if (p.lost) ++result_.network.packets_lost;
          const double when = p.lost && p.ts_arrived == 0.0 ? t : p.ts_arrived;
          arrivals_.push({when, arrival_order_++, p});
        }
      }
      DeliverUntil(t);

      if (t >= next_sample) {
        const double rtt = link_.RttProbe(t);
        result_.rtt_samples.push_back(rtt);
        rtt_series_.Add(t, rtt);
        next_sample += kSampleMs;
      }
      if (policy_kind_ == RatePolicy::kGcc && t >= next_gcc) {
        GccStep(t);
        next_gcc += cfg_.gcc_interval_ms;
      }
      if (policy_kind_ == RatePolicy::kRl && t >= next_rl) {
        RlStep(t, rl_ms);
        next_rl += rl_ms;
      }
      if (k % 200 == 0) Prune(t);
    }
    if (policy_kind_ == RatePolicy::kRl) FinishTrajectory();

    result_.playback = receiver_.Finish(end);
    result_.frames = receiver_.records();
    double rtt_sum = 0.0;
    for (double r : result_.rtt_samples) rtt_sum += r;
    result_.network.mean_rtt_ms =
        result_.rtt_samples.empty() ? 0.0 : rtt_sum / result_.rtt_samples.size();
    return std::move(result_);
  }

 private:
  // The target counts payload; packet headers ride on top of it.
  double PacingRate(double bps) const {
    return bps * (packetization_.mtu_payload_bytes + packetization_.header_bytes) /
           packetization_.mtu_payload_bytes;
  }

  void Event(double ts, std::string event, std::string key, double value) {
    result_.events.push_back({ts, std::move(event), std::move(key), value});
  }

  void Schedule(const EncodedFrame& frame, PriorityClass priority) {
    result_.encoded.push_back(frame);
    encoded_bits_.Add(frame.capture_ts, static_cast<double>(frame.size_bits));
    if (frame.stream == StreamId::kStream1) ++s1_pending_;
    pending_.push_back({frame, priority});
  }

  void EnqueueReady(double t) {
    // Frames of one capture finish together; stream 2 goes first.
    std::stable_sort(pending_.begin(), pending_.end(), [](const PendingFrame& a, const PendingFrame& b) {
      if (a.frame.encode_done_ts != b.frame.encode_done_ts) {
        return a.frame.encode_done_ts < b.frame.encode_done_ts;
      }
      return a.priority < b.priority;
    });
    while (!pending_.empty() && pending_.front().frame.encode_done_ts <= t) {
      const PendingFrame pf = pending_.front();
      pending_.pop_front();
      if (pf.frame.stream == StreamId::kStream1) --s1_pending_;
      auto packets = Packetize(pf.frame, packetization_, pf.priority, next_pkt_id_);
      receiver_.RegisterFrame(pf.frame, static_cast<int>(packets.size()));
      for (auto& p : packets) pacer_.Enqueue(p, pf.frame.encode_done_ts);
    }
  }

  void DeliverUntil(double t) {
    while (!arrivals_.empty() && arrivals_.top().ts <= t) {
      const ArrivalEvent ev = arrivals_.top();
      arrivals_.pop();
      if (ev.pkt.lost) {
        lost_series_.Add(ev.ts, 1.0);
      } else {
        delivered_series_.Add(ev.ts, ev.pkt.size_bytes * 8.0);
        lost_series_.Add(ev.ts, 0.0);
      }
      if (auto rec = receiver_.OnPacket(ev.pkt); rec && rec->rendered) {
        rendered_e2e_.Add(rec->render_ts, rec->delay.d_e2e);
        rendered_qp_.Add(rec->render_ts, rec->qp_index);
      }
    }
  }

  void Prune(double t) {
    const double horizon = t - 3000.0;
    encoded_bits_.Prune(horizon);
    delivered_series_.Prune(horizon);
    lost_series_.Prune(horizon);
    rendered_e2e_.Prune(horizon);
    rendered_qp_.Prune(horizon);
    rtt_series_.Prune(horizon);
  }

  EncodedFrame EncodeS1(int64_t idx, double ts, FrameType type, RateTarget target,
                        double gap) {
    return enc1_.Encode({idx, ts, StreamId::kStream1, type, target,
                         static_cast<double>(cfg_.fps), gap},
                        next_frame_id_++);
  }

  RateTarget SingleStreamTarget() const {
    if (mode_ == StreamingMode::kCbrS) return RateTarget::FrameBits(target_bps_ / cfg_.fps);
    return RateTarget::WindowedBitrate(target_bps_);
  }

  void Capture(int64_t idx, double ts) {
    if (!pdstream_) {
      const bool key = enc1_.KeyframeDue(idx, ts);
      const auto frame =
          EncodeS1(idx, ts, key ? FrameType::kKey : FrameType::kDelta, SingleStreamTarget(), 1.0);
      Schedule(frame, PriorityClass::kVideoS1);
      return;
    }

    if (dual_.Expired(ts, f_k_)) EndDual(ts, "cap");
    const bool key_due = enc1_.KeyframeDue(idx, ts);
    const bool s1_busy = s1_pending_ > 0 || pacer_.depth(PriorityClass::kVideoS1) > 0;
    const double min_gap =
        dual_.state().phase == DualPhase::kDual && alloc_.f_prime > 0
            ? static_cast<double>(cfg_.fps) / alloc_.f_prime
            : 1.0;
    const int64_t skipped_before = dual_.state().skipped;
    const auto directives = dual_.OnFrameCaptured({idx, ts, key_due, s1_busy}, min_gap);
    if (dual_.state().skipped > skipped_before) Event(ts, "s1_skip", "content_index", idx);

    bool first_s2 = false;
    for (const auto& d : directives) {
      if (d.stream == StreamId::kStream1 && d.type == FrameType::kKey) {
        const auto key = EncodeS1(idx, ts, FrameType::kKey, RateTarget::WindowedBitrate(target_bps_),
                                  d.gap_frames);
        Schedule(key, PriorityClass::kVideoS1);
        dual_.OnKeyframeEncoded(static_cast<double>(key.size_bits));
        if (!StartDual(key, ts)) return;
        first_s2 = true;
        key_qp_ = key.qp_index;
      } else if (d.stream == StreamId::kStream2) {
        const int qp = first_s2 ? key_qp_ : alloc_.q_index;
        const auto frame = enc2_->Encode({idx, ts, StreamId::kStream2, FrameType::kDelta,
                                          RateTarget::Quantizer(qp),
                                          static_cast<double>(cfg_.fps), 1.0},
                                         next_frame_id_++);
        enc1_.AccountExternalBits(ts, frame.size_bits);
        Schedule(frame, PriorityClass::kVideoS2);
      } else if (dual_.state().phase == DualPhase::kDual) {
        const auto frame = EncodeS1(idx, ts, FrameType::kDelta,
                                    RateTarget::Quantizer(alloc_.q_index), d.gap_frames);
        Schedule(frame, PriorityClass::kVideoS1);
        dual_.OnStream1Delta(static_cast<double>(frame.size_bits), ts);
        if (dual_.ShouldDeactivate(static_cast<double>(frame.size_bits), ts, f_k_)) {
          EndDual(ts, "converged");
        }
      } else {
        const auto frame = EncodeS1(idx, ts, FrameType::kDelta,
                                    RateTarget::WindowedBitrate(target_bps_), d.gap_frames);
        Schedule(frame, PriorityClass::kVideoS1);
        dual_.OnStream1Delta(static_cast<double>(frame.size_bits), ts);
      }
    }
  }

  AllocationRequest BuildRequest(double R1, double q1, int64_t idx) const {
    AllocationRequest req;
    req.b = target_bps_;
    req.f = cfg_.fps;
    req.f_k = f_k_;
    req.R1 = R1;
    req.q1 = q1;
    req.eta = cfg_.eta;
    req.table = enc1_.table();
    req.models.rq = enc1_.rq_model();
    if (enc1_.has_sad_model()) req.models.sad_cubic = enc1_.sad_model();
    const auto pred = enc1_.PredictComplexity(idx + 1);
    req.models.c_bar = pred.value > 0.0 ? pred.value : oracle_.DeltaComplexity(idx, 1.0);
    req.models.c1_dprime = req.models.c_bar;
    req.models.sad_bar = enc1_.recent_sad() > 0.0 ? enc1_.recent_sad() : oracle_.SadIn(idx);
    req.models.rho = cfg_.gap_rho;
    req.models.sad_cap = oracle_.cut_level();
    return req;
  }

  bool StartDual(const EncodedFrame& key, double ts) {
    request_ = BuildRequest(static_cast<double>(key.size_bits), key.quant_step, key.content_index);
    alloc_ = Allocate(request_);
    result_.allocations.push_back({ts, request_.b, request_.R1, false, alloc_});
    if (!alloc_.feasible) {
      dual_.Abort();
      Event(ts, "dual_infeasible", "R1", request_.R1);
      return false;
    }
    enc2_ = std::make_unique<Encoder>(enc1_);
    // The keyframe drains at the plain rate behind stream 2.
    pacer_.set_burst_suppressed(true);
    Event(ts, "dual_on", "R1", request_.R1);
    return true;
  }

  void EndDual(double ts, const char* reason) {
    const double length = ts - dual_.state().activation_ts;
    dual_.Deactivate();
    pacer_.set_burst_suppressed(false);
    enc2_.reset();
    Event(ts, "dual_off", reason, length);
  }

  void SetTarget(double t, double bps) {
    if (bps == target_bps_) return;
    target_bps_ = bps;
    pacer_.set_pacing_rate(PacingRate(bps));
    Event(t, "target_bps", "", bps);
    if (pdstream_ && dual_.state().phase == DualPhase::kDual) {
      const double elapsed = (t - dual_.state().activation_ts) / 1000.0;
      const auto next = Reallocate(request_, bps, dual_.state().encoded_bits_so_far, elapsed);
      result_.allocations.push_back({t, bps, dual_.state().encoded_bits_so_far, true, next});
      if (next.feasible) alloc_ = next;
      Event(t, "realloc", next.feasible ? "feasible" : "infeasible", next.q_bar_prime);
    }
  }

  // Metrics the sender has heard about by `t`.
  double FeedbackTime(double t) const { return t - cfg_.prop_ms; }

  void GccStep(double t) {
    const double to = FeedbackTime(t);
    const double from = to - cfg_.gcc_interval_ms;
    const auto [rtt_sum, rtt_n] = rtt_series_.Window(t - cfg_.gcc_interval_ms, t);
    const auto [lost, n] = lost_series_.Window(from, to);
    const double rtt = rtt_n > 0 ? rtt_sum / rtt_n : link_.RttProbe(t);
    SetTarget(t, gcc_.Update(rtt, n > 0 ? lost / n : 0.0));
  }

  FeatureSample Features(double t, double dt_ms, RewardMetrics* metrics) {
    const double to = FeedbackTime(t);
    const double from = to - dt_ms;
    const double dt_s = dt_ms / 1000.0;
    FeatureSample f{};
    const auto [bits, nb] = delivered_series_.Window(from, to);
    (void)nb;
    const auto [lost, n] = lost_series_.Window(from, to);
    const auto [e2e, ne] = rendered_e2e_.Window(from, to);
    const auto [qp, nq] = rendered_qp_.Window(from, to);
    const auto [sent, ns] = encoded_bits_.Window(t - dt_ms, t);
    (void)ns;
    const auto [fps_1s, nf] = rendered_e2e_.Window(to - 1000.0, to);
    (void)fps_1s;
    const double loss = n > 0 ? lost / n : 0.0;
    const double delay_ms = ne > 0 ? e2e / ne : last_delay_ms_;
    last_delay_ms_ = delay_ms;
    const double mean_qp = nq > 0 ? qp / nq : last_qp_;
    last_qp_ = mean_qp;
    const double fps = ne / dt_s;

    f[static_cast<int>(Feature::kThroughput)] = bits / dt_s;
    f[static_cast<int>(Feature::kLoss)] = loss;
    f[static_cast<int>(Feature::kRtt)] = link_.RttProbe(t);
    f[static_cast<int>(Feature::kDelay)] = delay_ms;
    f[static_cast<int>(Feature::kFps)] = fps;
    f[static_cast<int>(Feature::kQp)] = mean_qp;
    f[static_cast<int>(Feature::kTargetBitrate)] = target_bps_;
    f[static_cast<int>(Feature::kActualBitrate)] = sent / dt_s;
    if (dual_.state().phase == DualPhase::kDual) {
      f[static_cast<int>(Feature::kDualActive)] = 1.0;
      for (auto it = result_.encoded.rbegin(); it != result_.encoded.rend(); ++it) {
        if (it->capture_ts < dual_.state().activation_ts) break;
        auto& slot = f[static_cast<int>(it->stream == StreamId::kStream1 ? Feature::kDualS1Size
                                                                         : Feature::kDualS2Size)];
        if (slot == 0.0) slot = static_cast<double>(it->size_bits);
      }
      f[static_cast<int>(Feature::kAllocS1)] = alloc_.b_prime;
      f[static_cast<int>(Feature::kAllocS2)] = alloc_.b_dprime;
    }
    if (metrics) {
      metrics->bitrate_bps = bits / dt_s;
      metrics->fps = fps;
      metrics->qp = mean_qp;
      metrics->delay_s = delay_ms / 1000.0;
      metrics->stall = (t >= 1000.0 && nf < cfg_.stall_fps) ? 1.0 : 0.0;
    }
    return f;
  }

  void RlStep(double t, double dt_ms) {
    RewardMetrics m;
    state_builder_.Push(Features(t, dt_ms, &m));
    const Eigen::VectorXd state = state_builder_.Vector();
    if (has_prev_) {
      const double r = Reward(m, cfg_.Reward());
      result_.rewards.push_back(r);
      if (options_.explore) {
        Transition tr;
        tr.state = prev_state_;
        tr.next_state = state;
        tr.action = prev_action_;
        tr.old_prob = prev_prob_;
        tr.reward = r * cfg_.reward_scale;
        result_.transitions.push_back(std::move(tr));
      }
    }
    const PolicyNet& net = *options_.policy;
    int action = 0;
    if (options_.explore) {
      action = net.Sample(state, explore_rng_);
      prev_prob_ = net.Probabilities(state)[action];
    } else {
      action = net.Argmax(state);
    }
    prev_state_ = state;
    prev_action_ = action;
    has_prev_ = true;
    SetTarget(t, net.grid()[action]);
  }

  void FinishTrajectory() {
    if (result_.transitions.empty()) return;
    std::vector<double> scaled;
    scaled.reserve(result_.transitions.size());
    for (const auto& tr : result_.transitions) scaled.push_back(tr.reward);
    const auto returns = DiscountedReturns(scaled, cfg_.gamma, static_cast<size_t>(cfg_.horizon));
    for (size_t i = 0; i < returns.size(); ++i) result_.transitions[i].ret = returns[i];
    result_.transitions.back().terminal = true;
  }

  const ExperimentConfig& cfg_;
  SimulationOptions options_;
  StreamingMode mode_;
  RatePolicy policy_kind_;
  bool pdstream_;
  ContentOracle oracle_;
  Encoder enc1_;
  std::unique_ptr<Encoder> enc2_;
  DualStreamController dual_;
  PacerQueue pacer_;
  Link link_;
  Receiver receiver_;
  GccController gcc_;
  PolicyStateBuilder state_builder_;
  std::mt19937_64 explore_rng_;

  double target_bps_;
  double f_k_ = 0.5;
  PacketizationConfig packetization_;
  AllocationRequest request_;
  Allocation alloc_;
  int key_qp_ = 0;

  std::deque<PendingFrame> pending_;
  int s1_pending_ = 0;
  std::priority_queue<ArrivalEvent, std::vector<ArrivalEvent>, std::greater<>> arrivals_;
  int64_t arrival_order_ = 0;
  int64_t next_pkt_id_ = 0;
  int64_t next_frame_id_ = 0;

  Series encoded_bits_;
  Series delivered_series_;
  Series lost_series_;
  Series rendered_e2e_;
  Series rendered_qp_;
  Series rtt_series_;
  double last_delay_ms_ = 0.0;
  double last_qp_ = 0.0;

  bool has_prev_ = false;
  Eigen::VectorXd prev_state_;
  int prev_action_ = 0;
  double prev_prob_ = 1.0;

  SimulationResult result_;
};

}  // namespace

SimulationResult Simulate(const ExperimentConfig& config,
                          const ContentTrace& content,
                          const BandwidthTrace& network,
                          const SimulationOptions& options) {
  config.Validate();
  network.Validate();
  Session session(config, content, network, options);
  return session.Run();
}

}  // namespace pdstream
