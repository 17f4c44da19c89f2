#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "pdstream/dual_stream.h"

namespace pdstream {
namespace {

using D = EncodeDirective;

CaptureEvent Capture(int64_t idx, bool key = false, bool busy = false) {
  return {idx, idx * 1000.0 / 30.0, key, busy};
}

TEST(DualStream, SingleDeltaPassesThrough) {
  DualStreamController c;
  const auto d = c.OnFrameCaptured(Capture(0));
  ASSERT_EQ(d.size(), 1u);
  EXPECT_EQ(d[0], (D{StreamId::kStream1, FrameType::kDelta, 1.0}));
  EXPECT_EQ(c.state().phase, DualPhase::kSingle);
}

TEST(DualStream, KeyframeOpensDualPhase) {
  DualStreamController c;
  c.OnFrameCaptured(Capture(0));
  const auto d = c.OnFrameCaptured(Capture(1, true));
  ASSERT_EQ(d.size(), 2u);
  EXPECT_EQ(d[0].stream, StreamId::kStream1);
  EXPECT_EQ(d[0].type, FrameType::kKey);
  EXPECT_EQ(d[1], (D{StreamId::kStream2, FrameType::kDelta, 1.0}));
  EXPECT_EQ(c.state().phase, DualPhase::kDual);
  EXPECT_EQ(c.state().activations, 1);
}

TEST(DualStream, BusyStreamOneIsSkipped) {
  DualStreamController c;
  c.OnFrameCaptured(Capture(0, true));
  c.OnKeyframeEncoded(200000);
  const auto d = c.OnFrameCaptured(Capture(1, false, true));
  ASSERT_EQ(d.size(), 1u);
  EXPECT_EQ(d[0].stream, StreamId::kStream2);
  EXPECT_EQ(c.state().skipped, 1);
  // Once free, stream 1 codes against its last frame, two captures back.
  const auto e = c.OnFrameCaptured(Capture(2));
  ASSERT_EQ(e.size(), 2u);
  EXPECT_EQ(e[1], (D{StreamId::kStream1, FrameType::kDelta, 2.0}));
}

TEST(DualStream, ReducedFrameRateGap) {
  DualStreamController c;
  c.OnFrameCaptured(Capture(0, true));
  EXPECT_EQ(c.OnFrameCaptured(Capture(1), 3.0).size(), 1u);
  EXPECT_EQ(c.OnFrameCaptured(Capture(2), 3.0).size(), 1u);
  const auto d = c.OnFrameCaptured(Capture(3), 3.0);
  ASSERT_EQ(d.size(), 2u);
  EXPECT_DOUBLE_EQ(d[1].gap_frames, 3.0);
}

TEST(DualStream, DeactivationThreshold) {
  DualStreamConfig cfg;
  DualStreamController c(cfg);
  for (int i = 0; i < 30; ++i) {
    c.OnFrameCaptured(Capture(i));
    c.OnStream1Delta(10000, i * 1000.0 / 30.0);
  }
  c.OnFrameCaptured(Capture(30, true));
  c.OnKeyframeEncoded(100000);
  const double t = 30 * 1000.0 / 30.0;
  EXPECT_THROW(c.ShouldDeactivate(10000, t + 10, 0.25), std::logic_error);
  c.OnFrameCaptured(Capture(31));
  c.OnStream1Delta(20000, t + 33);
  const double avg = c.state().avg_delta_size;
  EXPECT_DOUBLE_EQ(avg, 10000);
  EXPECT_TRUE(c.ShouldDeactivate(avg, t + 40, 0.25));
  EXPECT_TRUE(c.ShouldDeactivate(1.2 * avg, t + 40, 0.25));
  EXPECT_FALSE(c.ShouldDeactivate(2.0 * avg, t + 40, 0.25));
  // 1 / (5 * 0.25) = 0.8 s cap.
  EXPECT_FALSE(c.Expired(t + 799, 0.25));
  EXPECT_TRUE(c.ShouldDeactivate(2.0 * avg, t + 800, 0.25));
}

TEST(DualStream, ShouldDeactivateInSingleIsLogicError) {
  DualStreamController c;
  EXPECT_THROW(c.ShouldDeactivate(1.0, 0.0, 0.5), std::logic_error);
  EXPECT_FALSE(c.Expired(1e9, 0.5));
}

TEST(DualStream, AbortReturnsToSingle) {
  DualStreamController c;
  c.OnFrameCaptured(Capture(0, true));
  c.Abort();
  EXPECT_EQ(c.state().phase, DualPhase::kSingle);
  EXPECT_EQ(c.OnFrameCaptured(Capture(1)).size(), 1u);
}

// Random capture sequences with a driver that honours the deactivation
// rule: stream 2 never carries a key, covers every capture while dual, and
// the phase never outlives its cap.
TEST(DualStream, RandomizedInvariants) {
  std::mt19937_64 rng(17);
  std::bernoulli_distribution key(0.02), busy(0.5);
  std::uniform_real_distribution<double> size(5000, 40000);
  const double f_k = 0.5;
  DualStreamController c;
  for (int64_t i = 0; i < 20000; ++i) {
    const double ts = i * 1000.0 / 30.0;
    if (c.Expired(ts, f_k)) c.Deactivate();
    const bool was_dual = c.state().phase == DualPhase::kDual;
    const auto d = c.OnFrameCaptured({i, ts, key(rng), busy(rng)}, 2.0);
    int s2 = 0;
    for (const auto& x : d) {
      if (x.stream == StreamId::kStream2) {
        ++s2;
        ASSERT_EQ(x.type, FrameType::kDelta);
      }
      if (x.stream == StreamId::kStream1) {
        if (x.type == FrameType::kKey) {
          c.OnKeyframeEncoded(8 * size(rng));
        } else {
          c.OnStream1Delta(size(rng), ts);
        }
      }
    }
    if (c.state().phase == DualPhase::kDual) {
      ASSERT_EQ(s2, 1);
      ASSERT_GT(c.state().keyframe_size_R1, 0.0);
      ASSERT_LT(ts - c.state().activation_ts, 1000.0 / (5.0 * f_k));
      const bool has_delta = c.state().s1_deltas_since_activation > 0;
      if (was_dual && has_delta && c.ShouldDeactivate(size(rng), ts, f_k)) c.Deactivate();
    } else {
      ASSERT_EQ(s2, 0);
    }
  }
}

TEST(PlaybackSelector, FirstComeFirstRendered) {
  PlaybackSelector s;
  EXPECT_TRUE(s.Offer(100.0, StreamId::kStream2));
  EXPECT_FALSE(s.Offer(100.0, StreamId::kStream1));  // the later copy
  EXPECT_TRUE(s.Offer(133.0, StreamId::kStream1));
  EXPECT_FALSE(s.Offer(120.0, StreamId::kStream1));  // older than shown
  EXPECT_EQ(*s.last_rendered_capture(), 133.0);
}

TEST(PlaybackSelector, SameInstantPrefersStreamTwo) {
  EXPECT_TRUE(PlaybackSelector::PreferFirst(StreamId::kStream2, StreamId::kStream1));
  EXPECT_FALSE(PlaybackSelector::PreferFirst(StreamId::kStream1, StreamId::kStream2));
}

}  // namespace
}  // namespace pdstream
