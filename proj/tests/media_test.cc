#include <cmath>
#include <sstream>

#include <gtest/gtest.h>

#include "pdstream/errors.h"
#include "pdstream/media.h"

namespace pdstream {
namespace {

ContentTrace Flat(int n, double sad, double satd = 100.0) {
  ContentTrace t;
  t.frames.assign(n, FrameContent{satd, sad, false});
  return t;
}

TEST(Content, GeneratedTracesValidate) {
  for (auto p : {ContentProfile::kStreet, ContentProfile::kConference,
                 ContentProfile::kSports, ContentProfile::kGaming}) {
    const auto t = GenerateSyntheticContent(7, 60.0, 30.0, p);
    EXPECT_EQ(t.frames.size(), 1800u);
    EXPECT_NO_THROW(t.Validate());
    EXPECT_EQ(t.profile_name, ProfileName(p));
  }
}

TEST(Content, SameSeedSameTrace) {
  const auto a = GenerateSyntheticContent(3, 20.0, 30.0, ContentProfile::kSports);
  const auto b = GenerateSyntheticContent(3, 20.0, 30.0, ContentProfile::kSports);
  const auto c = GenerateSyntheticContent(4, 20.0, 30.0, ContentProfile::kSports);
  ASSERT_EQ(a.frames.size(), b.frames.size());
  bool differs = false;
  for (size_t i = 0; i < a.frames.size(); ++i) {
    EXPECT_EQ(a.frames[i].satd_base, b.frames[i].satd_base);
    EXPECT_EQ(a.frames[i].sad_next, b.frames[i].sad_next);
    differs |= a.frames[i].sad_next != c.frames[i].sad_next;
  }
  EXPECT_TRUE(differs);
}

TEST(Content, UnknownProfileIsConfigError) {
  EXPECT_THROW(ParseProfile("cartoon"), ConfigError);
  EXPECT_EQ(ParseProfile("gaming"), ContentProfile::kGaming);
}

TEST(Content, ValidateRejectsWeakSceneCut) {
  auto t = Flat(20, 10.0);
  t.frames[5].scene_cut = true;
  t.frames[5].sad_next = 20.0;  // only 2x the median
  EXPECT_THROW(t.Validate(), ValidationError);
  t.frames[5].sad_next = 60.0;
  EXPECT_NO_THROW(t.Validate());
}

TEST(Content, CsvRoundTrip) {
  const auto t = GenerateSyntheticContent(11, 5.0, 30.0, ContentProfile::kStreet);
  std::stringstream ss;
  WriteContentCsv(ss, t);
  const auto r = ReadContentCsv(ss, 30.0);
  ASSERT_EQ(r.frames.size(), t.frames.size());
  for (size_t i = 0; i < t.frames.size(); ++i) {
    EXPECT_NEAR(r.frames[i].satd_base, t.frames[i].satd_base, 1e-6);
    EXPECT_NEAR(r.frames[i].sad_next, t.frames[i].sad_next, 1e-6);
    EXPECT_EQ(r.frames[i].scene_cut, t.frames[i].scene_cut);
  }
}

TEST(Content, CsvErrorsCarryLineNumbers) {
  std::stringstream bad("frame_idx,satd_base,sad_next,scene_cut\n0,1,2,0\n1,x,2,0\n");
  try {
    ReadContentCsv(bad, 30.0);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 3);
  }
  std::stringstream no_header("0,1,2,0\n");
  EXPECT_THROW(ReadContentCsv(no_header, 30.0), ParseError);
}

TEST(SadAtGap, GrowsAsPowerOfGap) {
  const auto t = Flat(100, 10.0);
  EXPECT_DOUBLE_EQ(SadAtGap(t, 50, 1.0, 0.75), 10.0);
  EXPECT_NEAR(SadAtGap(t, 50, 4.0, 0.75), 10.0 * std::pow(4.0, 0.75), 1e-12);
  // 5x median caps the growth.
  EXPECT_DOUBLE_EQ(SadAtGap(t, 50, 40.0, 0.75), 50.0);
}

TEST(SadAtGap, MonotoneInGap) {
  const auto t = GenerateSyntheticContent(5, 10.0, 30.0, ContentProfile::kSports);
  for (int64_t idx : {40, 120, 250}) {
    double prev = 0.0;
    for (double g = 1.0; g <= 30.0; g += 0.5) {
      const double s = SadAtGap(t, idx, g);
      EXPECT_GE(s, prev - 1e-12);
      prev = s;
    }
  }
}

TEST(SadAtGap, SpanAcrossCutIsAtLeastTheCut) {
  auto t = Flat(100, 10.0);
  t.frames[47].scene_cut = true;
  t.frames[47].sad_next = 90.0;
  EXPECT_DOUBLE_EQ(SadAtGap(t, 50, 3.0, 0.75), 90.0);
  EXPECT_LT(SadAtGap(t, 50, 2.0, 0.75), 90.0);
}

TEST(SadAtGap, OutsideTraceThrows) {
  const auto t = Flat(10, 10.0);
  EXPECT_THROW(SadAtGap(t, 3, 5.0), std::out_of_range);
  EXPECT_THROW(SadAtGap(t, 10, 1.0), std::out_of_range);
  EXPECT_THROW(SadAtGap(t, 5, 0.5), std::out_of_range);
}

TEST(Packetize, SplitsAtMtuAndConservesBytes) {
  EncodedFrame f;
  f.frame_id = 9;
  f.size_bits = 8 * 3000;
  int64_t next = 100;
  const PacketizationConfig cfg{1200, 12};
  const auto pkts = Packetize(f, cfg, PriorityClass::kVideoS2, next);
  ASSERT_EQ(pkts.size(), 3u);
  EXPECT_EQ(next, 103);
  EXPECT_EQ(pkts[0].size_bytes, 1212);
  EXPECT_EQ(pkts[1].size_bytes, 1212);
  EXPECT_EQ(pkts[2].size_bytes, 612);
  for (int i = 0; i < 3; ++i) {
    EXPECT_EQ(pkts[i].pkt_id, 100 + i);
    EXPECT_EQ(pkts[i].seq_in_frame, i);
    EXPECT_EQ(pkts[i].packets_in_frame, 3);
    EXPECT_EQ(pkts[i].priority, PriorityClass::kVideoS2);
  }
  EXPECT_EQ(ReassembledBits(pkts, cfg), f.size_bits);
}

TEST(Packetize, TinyFrameStillOnePacket) {
  EncodedFrame f;
  f.size_bits = 8;
  int64_t next = 0;
  const auto pkts = Packetize(f, {}, PriorityClass::kVideoS1, next);
  ASSERT_EQ(pkts.size(), 1u);
  EXPECT_EQ(pkts[0].size_bytes, 13);
}

}  // namespace
}  // namespace pdstream
