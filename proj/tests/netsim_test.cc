#include <cmath>
#include <sstream>
#include <vector>

#include <gtest/gtest.h>

#include "pdstream/errors.h"
#include "pdstream/netsim.h"

namespace pdstream {
namespace {

BandwidthTrace Constant(double bps, double prop, double loss = 0.0) {
  BandwidthTrace t;
  t.samples.push_back({0.0, bps, loss, prop});
  return t;
}

Packet Pkt(int64_t id, int bytes = 1212) {
  Packet p;
  p.pkt_id = id;
  p.size_bytes = bytes;
  return p;
}

TEST(Trace, ParsesMinimalRow) {
  std::stringstream ss("0,2000\n");
  const auto t = ReadTraceCsv(ss, 10.0);
  ASSERT_EQ(t.samples.size(), 1u);
  EXPECT_DOUBLE_EQ(t.samples[0].bw_bps, 2e6);
  EXPECT_DOUBLE_EQ(t.samples[0].loss_rate, 0.0);
  EXPECT_DOUBLE_EQ(t.samples[0].prop_ms, 10.0);
}

TEST(Trace, OptionalColumnsHeaderAndComments) {
  std::stringstream ss("# comment\nt_ms,bw_kbps,loss_rate,prop_ms\n0,1000,0.01,20\n1000,500\n");
  const auto t = ReadTraceCsv(ss, 7.0);
  ASSERT_EQ(t.samples.size(), 2u);
  EXPECT_DOUBLE_EQ(t.samples[0].loss_rate, 0.01);
  EXPECT_DOUBLE_EQ(t.samples[0].prop_ms, 20.0);
  EXPECT_DOUBLE_EQ(t.samples[1].prop_ms, 7.0);
}

TEST(Trace, MalformedRowReportsLine) {
  std::stringstream ss("0,1000\n1000,abc\n");
  try {
    ReadTraceCsv(ss, 10.0);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2);
  }
}

TEST(Trace, NonMonotoneTimeIsValidationError) {
  std::stringstream ss("0,1000\n500,1000\n400,1000\n");
  EXPECT_THROW(ReadTraceCsv(ss, 10.0), ValidationError);
  std::stringstream neg("0,-5\n");
  EXPECT_THROW(ReadTraceCsv(neg, 10.0), ValidationError);
}

TEST(Trace, FixedIsOnePointOneTimesBitrate) {
  const auto t = FixedBandwidthTrace(1e6, 1.1, 10.0);
  EXPECT_DOUBLE_EQ(t.At(12345.0).bw_bps, 1.1e6);
}

TEST(Trace, ZeroOrderHoldAndWrap) {
  BandwidthTrace t;
  t.samples = {{0, 1e6, 0, 10}, {1000, 2e6, 0, 10}, {2000, 3e6, 0, 10}};
  EXPECT_DOUBLE_EQ(t.At(999).bw_bps, 1e6);
  EXPECT_DOUBLE_EQ(t.At(1000).bw_bps, 2e6);
  EXPECT_DOUBLE_EQ(t.At(2500).bw_bps, 3e6);
  EXPECT_DOUBLE_EQ(t.Period(), 3000.0);
  EXPECT_DOUBLE_EQ(t.At(3500).bw_bps, 1e6);
}

TEST(Trace, CsvRoundTrip) {
  const auto t = GenerateNetworkTrace(NetworkKind::kWifi, 3, 30, 500, 10);
  std::stringstream ss;
  WriteTraceCsv(ss, t);
  const auto r = ReadTraceCsv(ss, 10.0);
  ASSERT_EQ(r.samples.size(), t.samples.size());
  for (size_t i = 0; i < t.samples.size(); ++i) {
    EXPECT_NEAR(r.samples[i].bw_bps, t.samples[i].bw_bps, 1.0);
  }
}

class Envelope : public ::testing::TestWithParam<NetworkKind> {};

TEST_P(Envelope, GeneratedTraceMatchesMeanAndStd) {
  const auto env = DefaultEnvelope(GetParam());
  const auto t = GenerateNetworkTrace(GetParam(), 1, 600, 1000, 10);
  EXPECT_NO_THROW(t.Validate());
  EXPECT_NEAR(t.MeanBps() / 1e6, env.mean_mbps, 0.02 * env.mean_mbps);
  EXPECT_NEAR(t.StdBps() / 1e6, env.std_mbps, 0.05 * env.std_mbps);
}

INSTANTIATE_TEST_SUITE_P(Kinds, Envelope,
                         ::testing::Values(NetworkKind::k4G, NetworkKind::k5G, NetworkKind::kWifi));

TEST(Envelope, PublishedFigures) {
  EXPECT_DOUBLE_EQ(DefaultEnvelope(NetworkKind::k5G).mean_mbps, 2.23);
  EXPECT_DOUBLE_EQ(DefaultEnvelope(NetworkKind::k5G).std_mbps, 1.41);
  EXPECT_DOUBLE_EQ(DefaultEnvelope(NetworkKind::k4G).mean_mbps, 1.83);
  EXPECT_DOUBLE_EQ(DefaultEnvelope(NetworkKind::k4G).std_mbps, 0.53);
  EXPECT_DOUBLE_EQ(DefaultEnvelope(NetworkKind::kWifi).mean_mbps, 1.18);
  EXPECT_DOUBLE_EQ(DefaultEnvelope(NetworkKind::kWifi).std_mbps, 0.20);
}

TEST(Link, SinglePacketArithmetic) {
  const auto t = Constant(2e6, 10.0);
  Link link(&t, {});
  std::vector<Packet> pkts{Pkt(1)};
  pkts[0].ts_sent = 100.0;
  const auto out = link.Send(pkts, 100.0);
  EXPECT_NEAR(out[0].ts_arrived, 100.0 + 4.848 + 10.0, 1e-9);
  EXPECT_FALSE(out[0].lost);
}

TEST(Link, BurstQueuesLinearly) {
  const auto t = Constant(1e6, 0.0);
  Link link(&t, {});
  std::vector<Packet> pkts;
  for (int i = 0; i < 20; ++i) pkts.push_back(Pkt(i, 1250));  // 10 ms each
  const auto out = link.Send(pkts, 0.0);
  for (int i = 0; i < 20; ++i) EXPECT_NEAR(out[i].ts_arrived, 10.0 * (i + 1), 1e-9);
  EXPECT_NEAR(link.QueueDelay(0.0), 200.0, 1e-9);
}

TEST(Link, RttProbe) {
  const auto t = Constant(1e6, 10.0);
  Link link(&t, {});
  EXPECT_DOUBLE_EQ(link.RttProbe(0.0), 20.0);
  std::vector<Packet> pkts{Pkt(1, 3750)};  // 30 ms of data
  link.Send(pkts, 0.0);
  EXPECT_DOUBLE_EQ(link.RttProbe(0.0), 50.0);
}

TEST(Link, DropTailBeyondCap) {
  const auto t = Constant(1e6, 0.0);
  Link link(&t, {100.0, 1});
  std::vector<Packet> pkts;
  for (int i = 0; i < 15; ++i) pkts.push_back(Pkt(i, 1250));
  const auto out = link.Send(pkts, 0.0);
  int dropped = 0;
  for (const auto& p : out) dropped += p.lost;
  EXPECT_EQ(dropped, 5);
  EXPECT_EQ(link.dropped(), 5);
  EXPECT_NEAR(link.QueueDelay(0.0), 100.0, 1e-9);
}

TEST(Link, NoLossAtZeroRateAndFifoCausality) {
  const auto t = GenerateNetworkTrace(NetworkKind::k4G, 2, 60, 200, 15);
  Link link(&t, {1e9, 3});
  double last = -1.0;
  int64_t id = 0;
  for (int tick = 1; tick <= 12000; ++tick) {
    const double now = 5.0 * tick;
    std::vector<Packet> pkts;
    for (int k = 0; k < 1; ++k) {
      pkts.push_back(Pkt(id++, 600));
      pkts.back().ts_sent = now;
    }
    for (const auto& p : link.Send(pkts, now)) {
      ASSERT_FALSE(p.lost);
      ASSERT_GT(p.ts_arrived, p.ts_sent);
      ASSERT_GE(p.ts_arrived, last);
      last = p.ts_arrived;
    }
  }
}

TEST(Link, SeededLossIsDeterministic) {
  const auto t = Constant(5e6, 10.0, 0.1);
  auto run = [&](uint64_t seed) {
    Link link(&t, {300.0, seed});
    std::vector<bool> lost;
    for (int tick = 1; tick <= 2000; ++tick) {
      std::vector<Packet> pkts{Pkt(tick, 300)};
      for (const auto& p : link.Send(pkts, 5.0 * tick)) lost.push_back(p.lost);
    }
    return lost;
  };
  const auto a = run(4), b = run(4), c = run(5);
  EXPECT_EQ(a, b);
  EXPECT_NE(a, c);
  double rate = 0;
  for (bool l : a) rate += l;
  EXPECT_NEAR(rate / a.size(), 0.1, 0.02);
}

}  // namespace
}  // namespace pdstream
