#include <cmath>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "pdstream/receiver.h"

namespace pdstream {
namespace {

EncodedFrame Frame(int64_t id, double capture, StreamId s = StreamId::kStream1,
                   FrameType t = FrameType::kDelta) {
  EncodedFrame f;
  f.frame_id = id;
  f.content_index = id;
  f.stream = s;
  f.type = t;
  f.size_bits = 8000;
  f.capture_ts = capture;
  f.encode_done_ts = capture + 4.0;
  return f;
}

Packet Pkt(int64_t frame, int seq, int count, double sent, double arrived, bool lost = false) {
  Packet p;
  p.pkt_id = frame * 100 + seq;
  p.frame_id = frame;
  p.seq_in_frame = seq;
  p.packets_in_frame = count;
  p.ts_enqueued = sent - 2.0;
  p.ts_sent = sent;
  p.ts_arrived = arrived;
  p.lost = lost;
  return p;
}

TEST(DelayBreakdown, SumsComponents) {
  DelayBreakdown d{4, 2, 60, 38, 3, 0, 0};
  EXPECT_DOUBLE_EQ(d.Sum(), 107.0);
}

TEST(Assembler, CompletesOnLastPacket) {
  FrameAssembler a;
  a.Register(Frame(1, 0), 3);
  EXPECT_FALSE(a.OnPacket(Pkt(1, 0, 3, 10, 20)));
  EXPECT_FALSE(a.OnPacket(Pkt(1, 1, 3, 10, 25)));
  const auto r = a.OnPacket(Pkt(1, 2, 3, 10, 30));
  ASSERT_TRUE(r);
  EXPECT_TRUE(r->decodable);
  EXPECT_DOUBLE_EQ(r->completion_ts, 30.0);
  EXPECT_DOUBLE_EQ(r->first_sent_ts, 10.0);
}

TEST(Assembler, LostMiddlePacketMakesFrameUndecodable) {
  FrameAssembler a;
  a.Register(Frame(1, 0), 3);
  a.OnPacket(Pkt(1, 0, 3, 10, 20));
  a.OnPacket(Pkt(1, 1, 3, 10, 0, true));
  const auto r = a.OnPacket(Pkt(1, 2, 3, 10, 30));
  ASSERT_TRUE(r);
  EXPECT_FALSE(r->decodable);
}

TEST(Assembler, DegradationLastsUntilTheNextKey) {
  FrameAssembler a;
  a.Register(Frame(1, 0, StreamId::kStream1, FrameType::kKey), 1);
  a.Register(Frame(2, 33), 1);
  a.Register(Frame(3, 66), 1);
  a.Register(Frame(4, 100), 1);
  a.Register(Frame(5, 133, StreamId::kStream2), 1);
  a.Register(Frame(6, 166, StreamId::kStream1, FrameType::kKey), 1);
  a.Register(Frame(7, 200), 1);
  EXPECT_FALSE(a.OnPacket(Pkt(1, 0, 1, 1, 2))->degraded);
  EXPECT_FALSE(a.OnPacket(Pkt(2, 0, 1, 1, 0, true))->decodable);
  EXPECT_TRUE(a.OnPacket(Pkt(3, 0, 1, 1, 2))->degraded);
  EXPECT_TRUE(a.OnPacket(Pkt(4, 0, 1, 1, 2))->degraded);
  EXPECT_FALSE(a.OnPacket(Pkt(5, 0, 1, 1, 2))->degraded);  // stream 2 has its own chain
  EXPECT_FALSE(a.OnPacket(Pkt(6, 0, 1, 1, 2))->degraded);
  EXPECT_FALSE(a.OnPacket(Pkt(7, 0, 1, 1, 2))->degraded);
}

TEST(Jitter, PeriodicArrivalsSettleAtMinWait) {
  JitterConfig cfg;
  cfg.min_wait_ms = 7.0;
  JitterBuffer jb(cfg);
  for (int i = 0; i < 100; ++i) jb.Update(50.0 + i * 33.3, i * 33.3);
  EXPECT_NEAR(jb.state().target_wait, 7.0, 1e-9);
  EXPECT_GE(jb.state().target_wait, jb.state().min_wait);
}

TEST(Jitter, SpikeDecaysWithFourteenFrameHalfLife) {
  JitterBuffer jb;
  double cap = 0.0, done = 50.0;
  jb.Update(done, cap);
  cap += 33.0;
  done += 33.0 + 80.0;  // one late frame
  const double peak = jb.Update(done, cap).target_wait;
  EXPECT_NEAR(peak, 3.0 * 0.05 * 80.0, 1e-9);
  // The next frame arrives on time relative to its capture again.
  cap += 33.0;
  done = cap + 50.0;
  jb.Update(done, cap);
  const double after = jb.state().target_wait;
  int frames = 0;
  while (jb.state().target_wait > after / 2.0) {
    cap += 33.0;
    done += 33.0;
    jb.Update(done, cap);
    ++frames;
  }
  EXPECT_NEAR(frames, std::log(2.0) / -std::log(0.95), 1.0);
}

TEST(Jitter, ClampedToMaxWait) {
  JitterBuffer jb;
  jb.Update(0, 0);
  jb.Update(1e6, 33);
  EXPECT_DOUBLE_EQ(jb.state().target_wait, 500.0);
}

TEST(Receiver, RecordAccountsEveryComponent) {
  Receiver rx;
  rx.RegisterFrame(Frame(1, 0, StreamId::kStream1, FrameType::kKey), 2);
  rx.OnPacket(Pkt(1, 0, 2, 10, 40));
  const auto r = rx.OnPacket(Pkt(1, 1, 2, 12, 70));
  ASSERT_TRUE(r);
  EXPECT_TRUE(r->rendered);
  EXPECT_DOUBLE_EQ(r->delay.d_encode, 4.0);
  EXPECT_DOUBLE_EQ(r->delay.d_other, 4.0);  // encode done at 4, queued at 8
  EXPECT_DOUBLE_EQ(r->delay.d_pacer, 2.0);
  EXPECT_DOUBLE_EQ(r->delay.d_trans, 60.0);
  EXPECT_DOUBLE_EQ(r->delay.d_decode, 5.0);
  EXPECT_DOUBLE_EQ(r->delay.d_e2e, r->delay.Sum());
  EXPECT_DOUBLE_EQ(r->render_ts, r->capture_ts + r->delay.d_e2e);
}

TEST(Receiver, SecondCopyOfACaptureIsNotShown) {
  Receiver rx;
  rx.RegisterFrame(Frame(1, 0, StreamId::kStream1, FrameType::kKey), 1);
  rx.RegisterFrame(Frame(2, 0, StreamId::kStream2), 1);
  const auto s2 = rx.OnPacket(Pkt(2, 0, 1, 10, 20));
  const auto s1 = rx.OnPacket(Pkt(1, 0, 1, 10, 60));
  EXPECT_TRUE(s2->rendered);
  EXPECT_FALSE(s1->rendered);
  EXPECT_TRUE(s1->decodable);
}

TEST(Receiver, StallWindowBelowTwelveFps) {
  ReceiverConfig cfg;
  Receiver rx(cfg);
  int64_t id = 0;
  // 30 frames in the first second, 11 in the second.
  for (int i = 0; i < 41; ++i) {
    const double cap = i < 30 ? i * 33.0 : 1000.0 + (i - 30) * 80.0;
    rx.RegisterFrame(Frame(++id, cap), 1);
    rx.OnPacket(Pkt(id, 0, 1, cap + 5, cap + 6));
  }
  const auto stats = rx.Finish(2000.0);
  EXPECT_EQ(stats.windows, 2);
  EXPECT_DOUBLE_EQ(stats.stall_rate, 0.5);
  int stalled = 0;
  for (const auto& r : rx.records()) stalled += r.stalled;
  EXPECT_EQ(stalled, 11);
}

// Random arrival jitter and losses: render order, non-negative parts and
// exact sums.
TEST(Receiver, RandomizedInvariants) {
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> trans(5.0, 150.0);
  std::bernoulli_distribution lost(0.02), dual(0.1);
  Receiver rx;
  int64_t id = 0;
  for (int i = 0; i < 3000; ++i) {
    const double cap = i * 1000.0 / 30.0;
    const bool two = dual(rng);
    for (int s = 0; s < (two ? 2 : 1); ++s) {
      const auto stream = s == 0 ? StreamId::kStream1 : StreamId::kStream2;
      const auto type = (s == 0 && i % 120 == 0) ? FrameType::kKey : FrameType::kDelta;
      rx.RegisterFrame(Frame(++id, cap, stream, type), 2);
      const double sent = cap + 6.0;
      rx.OnPacket(Pkt(id, 0, 2, sent, sent + 3.0, lost(rng)));
      rx.OnPacket(Pkt(id, 1, 2, sent, sent + trans(rng), lost(rng)));
    }
  }
  double last_capture = -1.0, last_render = -1.0;
  for (const auto& r : rx.records()) {
    const auto& d = r.delay;
    for (double part : {d.d_encode, d.d_pacer, d.d_trans, d.d_jitter, d.d_decode, d.d_other}) {
      ASSERT_GE(part, 0.0);
    }
    ASSERT_EQ(d.d_e2e, d.Sum());
    if (!r.rendered) continue;
    ASSERT_TRUE(r.decodable);
    ASSERT_GT(r.capture_ts, last_capture);
    ASSERT_GE(r.render_ts, last_render);
    ASSERT_DOUBLE_EQ(r.delay.d_decode, r.type == FrameType::kKey ? 5.0 : 3.0);
    last_capture = r.capture_ts;
    last_render = r.render_ts;
  }
}

TEST(Receiver, RenderedPerWindowCounts) {
  const auto c = RenderedPerWindow({10, 20, 999, 1000, 2500, 5000}, 3000);
  ASSERT_EQ(c.size(), 3u);
  EXPECT_EQ(c[0], 3);
  EXPECT_EQ(c[1], 1);
  EXPECT_EQ(c[2], 1);
}

}  // namespace
}  // namespace pdstream
