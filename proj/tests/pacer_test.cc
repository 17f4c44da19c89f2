#include <map>
#include <random>
#include <set>
#include <vector>

#include <gtest/gtest.h>

#include "pdstream/pacer.h"

namespace pdstream {
namespace {

Packet Pkt(int64_t id, PriorityClass c, int bytes = 1212) {
  Packet p;
  p.pkt_id = id;
  p.frame_id = id;
  p.size_bytes = bytes;
  p.priority = c;
  p.stream = c == PriorityClass::kVideoS2 ? StreamId::kStream2 : StreamId::kStream1;
  return p;
}

PacerConfig Never() {
  PacerConfig c;
  c.burst_policy = BurstPolicy::kNever;
  return c;
}

TEST(Pacer, BudgetArithmeticAndCarry) {
  PacerQueue q(Never());
  q.set_pacing_rate(2.4e6);
  q.Enqueue(Pkt(1, PriorityClass::kVideoS1), 0);
  q.Enqueue(Pkt(2, PriorityClass::kVideoS1), 0);
  const auto out = q.Tick(5);
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(out[0].pkt_id, 1);
  EXPECT_DOUBLE_EQ(q.budget_bytes(), 288.0);
  EXPECT_EQ(out[0].ts_sent, 5.0);
  EXPECT_EQ(out[0].ts_enqueued, 0.0);
}

TEST(Pacer, IdleBudgetIsCapped) {
  PacerQueue q(Never());
  q.set_pacing_rate(2.4e6);
  for (int i = 1; i <= 50; ++i) q.Tick(5.0 * i);
  EXPECT_DOUBLE_EQ(q.budget_bytes(), 1500.0);
  // Low rates still carry one full packet.
  PacerQueue slow(Never());
  slow.set_pacing_rate(0.3e6);
  for (int i = 1; i <= 50; ++i) slow.Tick(5.0 * i);
  EXPECT_DOUBLE_EQ(slow.budget_bytes(), 1212.0);
}

TEST(Pacer, FifoWithinClass) {
  PacerQueue q(Never());
  q.set_pacing_rate(50e6);
  for (int i = 0; i < 10; ++i) q.Enqueue(Pkt(i, PriorityClass::kVideoS1, 100), 0);
  std::vector<int64_t> order;
  for (int t = 1; !q.empty(); ++t) {
    for (const auto& p : q.Tick(5.0 * t)) order.push_back(p.pkt_id);
  }
  for (int i = 0; i < 10; ++i) EXPECT_EQ(order[i], i);
}

TEST(Pacer, PriorityOrderAcrossClasses) {
  PacerQueue q(Never());
  q.set_pacing_rate(50e6);
  q.Enqueue(Pkt(1, PriorityClass::kFec, 100), 0);
  q.Enqueue(Pkt(2, PriorityClass::kVideoS1, 100), 0);
  q.Enqueue(Pkt(3, PriorityClass::kVideoS2, 100), 0);
  q.Enqueue(Pkt(4, PriorityClass::kAudio, 100), 0);
  const auto out = q.Tick(5);
  ASSERT_EQ(out.size(), 4u);
  EXPECT_EQ(out[0].pkt_id, 4);
  EXPECT_EQ(out[1].pkt_id, 3);
  EXPECT_EQ(out[2].pkt_id, 2);
  EXPECT_EQ(out[3].pkt_id, 1);
}

TEST(Pacer, StreamOneWaitsForStreamTwo) {
  PacerQueue q(Never());
  q.set_pacing_rate(2.4e6);  // 1500 bytes per tick
  q.Enqueue(Pkt(1, PriorityClass::kVideoS1, 500), 0);
  for (int i = 0; i < 3; ++i) q.Enqueue(Pkt(10 + i, PriorityClass::kVideoS2, 1000), 0);
  auto out = q.Tick(5);
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(out[0].stream, StreamId::kStream2);
  EXPECT_GE(q.budget_bytes(), 0.0);
  out = q.Tick(10);
  for (const auto& p : out) EXPECT_EQ(p.stream, StreamId::kStream2);
  // Stream 2 drained; the leftover budget goes to stream 1.
  std::vector<Packet> all;
  for (int t = 3; t < 6; ++t) {
    for (const auto& p : q.Tick(5.0 * t)) all.push_back(p);
  }
  ASSERT_FALSE(all.empty());
  EXPECT_EQ(all.back().pkt_id, 1);
}

TEST(Pacer, DuplicateIdIsLogicError) {
  PacerQueue q;
  q.Enqueue(Pkt(1, PriorityClass::kVideoS1), 0);
  EXPECT_THROW(q.Enqueue(Pkt(1, PriorityClass::kVideoS2), 0), std::logic_error);
}

TEST(Pacer, BurstMultiplierPolicies) {
  PacerConfig cfg;
  cfg.burst_policy = BurstPolicy::kWhenBacklogged;
  PacerQueue q(cfg);
  q.set_pacing_rate(1e6);
  q.Tick(5);
  EXPECT_DOUBLE_EQ(q.last_multiplier(), 1.0);
  for (int i = 0; i < 20; ++i) q.Enqueue(Pkt(i, PriorityClass::kVideoS1), 5);
  q.Tick(10);
  EXPECT_DOUBLE_EQ(q.last_multiplier(), 2.5);
  q.set_burst_suppressed(true);
  q.Tick(15);
  EXPECT_DOUBLE_EQ(q.last_multiplier(), 1.0);
  q.set_burst_suppressed(false);
  q.Tick(20);
  EXPECT_DOUBLE_EQ(q.last_multiplier(), 2.5);
}

// Drain slope of a queued keyframe under each multiplier.
TEST(Pacer, KeyframeDrainsAtMultipliedRate) {
  for (double mult : {1.0, 2.5}) {
    PacerConfig cfg;
    cfg.burst_policy = mult > 1.0 ? BurstPolicy::kAlways : BurstPolicy::kNever;
    PacerQueue q(cfg);
    q.set_pacing_rate(1e6);
    for (int i = 0; i < 400; ++i) q.Enqueue(Pkt(i, PriorityClass::kVideoS1), 0);
    int64_t bytes = 0;
    for (int t = 1; t <= 200; ++t) {
      for (const auto& p : q.Tick(5.0 * t)) bytes += p.size_bytes;
    }
    EXPECT_NEAR(bytes * 8.0, 1e6 * mult, 0.02 * 1e6 * mult) << "multiplier " << mult;
  }
}

// Random traffic: conservation, priority soundness, non-negative budget and
// rate compliance while the queue stays full.
TEST(Pacer, RandomizedProperties) {
  std::mt19937_64 rng(23);
  std::uniform_int_distribution<int> cls(0, kNumPriorityClasses - 1);
  std::uniform_int_distribution<int> size(60, 1212);
  std::uniform_real_distribution<double> rate(0.3e6, 4e6);
  for (auto policy : {BurstPolicy::kNever, BurstPolicy::kWhenBacklogged, BurstPolicy::kAlways}) {
    PacerConfig cfg;
    cfg.burst_policy = policy;
    PacerQueue q(cfg);
    q.set_pacing_rate(rate(rng));
    std::set<int64_t> pending;
    int64_t next_id = 0;
    for (int t = 1; t <= 4000; ++t) {
      const double now = 5.0 * t;
      if (t % 400 == 0) q.set_pacing_rate(rate(rng));
      const int arrivals = t < 3000 ? static_cast<int>(rng() % 4) : 0;
      for (int a = 0; a < arrivals; ++a) {
        q.Enqueue(Pkt(next_id, static_cast<PriorityClass>(cls(rng)), size(rng)), now);
        pending.insert(next_id++);
      }
      const auto out = q.Tick(now);
      ASSERT_GE(q.budget_bytes(), 0.0);
      int last_class = -1;
      for (const auto& p : out) {
        ASSERT_EQ(pending.erase(p.pkt_id), 1u) << "released twice or never queued";
        const int c = static_cast<int>(p.priority);
        ASSERT_GE(c, last_class);
        last_class = c;
        ASSERT_GE(p.ts_sent, p.ts_enqueued);
      }
      // Nothing of a strictly higher class may be left behind.
      for (int c = 0; c < last_class; ++c) {
        ASSERT_EQ(q.depth(static_cast<PriorityClass>(c)), 0u);
      }
    }
    for (int t = 4001; !q.empty(); ++t) {
      for (const auto& p : q.Tick(5.0 * t)) pending.erase(p.pkt_id);
    }
    EXPECT_TRUE(pending.empty());
  }
}

TEST(Pacer, RateComplianceOverFullQueueSeconds) {
  std::mt19937_64 rng(29);
  std::uniform_int_distribution<int> size(60, 1212);
  for (auto policy : {BurstPolicy::kNever, BurstPolicy::kAlways}) {
    for (double r : {0.5e6, 1.3e6, 3.7e6}) {
      PacerConfig cfg;
      cfg.burst_policy = policy;
      PacerQueue q(cfg);
      q.set_pacing_rate(r);
      const double mult = policy == BurstPolicy::kAlways ? cfg.burst_multiplier : 1.0;
      int64_t id = 0;
      std::map<int, int64_t> per_second;
      for (int t = 1; t <= 1000; ++t) {
        while (q.queued_bytes() < 200000) q.Enqueue(Pkt(id++, PriorityClass::kVideoS1, size(rng)), 5.0 * t);
        for (const auto& p : q.Tick(5.0 * t)) per_second[(t - 1) / 200] += p.size_bytes;
      }
      for (const auto& [s, bytes] : per_second) {
        const double expect = r * mult / 8.0;
        EXPECT_GE(bytes, 0.95 * expect) << "second " << s;
        EXPECT_LE(bytes, 1.05 * expect) << "second " << s;
      }
    }
  }
}

}  // namespace
}  // namespace pdstream
