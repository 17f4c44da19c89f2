#include <sstream>
#include <string>

#include <gtest/gtest.h>

#include "pdstream/config.h"
#include "pdstream/errors.h"

namespace pdstream {
namespace {

ExperimentConfig Parse(const std::string& text) {
  std::stringstream ss(text);
  return ParseConfig(ss);
}

std::string ConfigErrorText(const std::string& text) {
  try {
    Parse(text);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

TEST(Config, EmptyFileGivesDefaults) {
  const auto c = Parse("");
  EXPECT_EQ(c.mode, "PDSTREAM");
  EXPECT_EQ(c.Mode(), StreamingMode::kPdStream);
  EXPECT_EQ(c.Policy(), RatePolicy::kFixed);
  EXPECT_DOUBLE_EQ(c.eta, 5.0);
  EXPECT_DOUBLE_EQ(c.theta, 1.2);
  EXPECT_DOUBLE_EQ(c.tick_ms, 5.0);
  EXPECT_DOUBLE_EQ(c.burst_multiplier, 2.5);
  EXPECT_EQ(c.grid_points, 17);
  EXPECT_EQ(c.Hidden(), (std::vector<int>{128, 64, 32}));
}

TEST(Config, SectionsAndKeys) {
  const auto c = Parse("[run]\nmode = CBR_L\nseed = 9\n[network]\nkind = 4g\n[pacer]\nburst_policy = never\n");
  EXPECT_EQ(c.Mode(), StreamingMode::kCbrL);
  EXPECT_EQ(c.seed, 9u);
  EXPECT_EQ(c.network, "4g");
  EXPECT_EQ(c.Pacer().burst_policy, BurstPolicy::kNever);
}

TEST(Config, UnknownKeyIsNamed) {
  EXPECT_NE(ConfigErrorText("[run]\nmodee = CBR_L\n").find("run.modee"), std::string::npos);
  EXPECT_NE(ConfigErrorText("[nope]\nx = 1\n").find("nope.x"), std::string::npos);
}

TEST(Config, ValidationNamesTheKey) {
  EXPECT_NE(ConfigErrorText("[dual]\ntheta = 0.5\n").find("dual.theta"), std::string::npos);
  EXPECT_NE(ConfigErrorText("[run]\nfps = 0\n").find("run.fps"), std::string::npos);
  EXPECT_NE(ConfigErrorText("[run]\nbitrate_bps = abc\n").find("run.bitrate_bps"),
            std::string::npos);
  EXPECT_NE(ConfigErrorText("[network]\nkind = file\n").find("network.trace"), std::string::npos);
  EXPECT_FALSE(ConfigErrorText("[run]\nmode = FAST\n").empty());
  EXPECT_FALSE(ConfigErrorText("[rl]\nhidden = 4,,0\n").empty());
}

TEST(Config, OverridesApplyAndReject) {
  ExperimentConfig c;
  ApplyOverride(c, "encoder.keyframe_period_s=2");
  EXPECT_DOUBLE_EQ(c.keyframe_period_s, 2.0);
  ApplyOverride(c, "run.mode=KEY_MIN");
  EXPECT_EQ(c.Mode(), StreamingMode::kKeyMin);
  EXPECT_THROW(ApplyOverride(c, "encoder.nope=1"), ConfigError);
  EXPECT_THROW(ApplyOverride(c, "encoder.kappa"), ConfigError);
  EXPECT_THROW(ApplyOverride(c, "encoder.kappa=x"), ConfigError);
}

TEST(Config, DumpRoundTripsAndHashIsStable) {
  ExperimentConfig c;
  c.seed = 77;
  c.network = "wifi";
  c.hidden = "16,8";
  const auto text = DumpConfig(c);
  const auto back = Parse(text);
  EXPECT_EQ(DumpConfig(back), text);
  EXPECT_EQ(ConfigHash(back), ConfigHash(c));
  EXPECT_EQ(ConfigHash(c).size(), 16u);
  ExperimentConfig d = c;
  d.seed = 78;
  EXPECT_NE(ConfigHash(d), ConfigHash(c));
}

TEST(Config, DerivedModuleConfigs) {
  ExperimentConfig c;
  c.mtu_payload_bytes = 1000;
  c.header_bytes = 20;
  EXPECT_EQ(c.Pacer().max_packet_bytes, 1020);
  EXPECT_EQ(c.Packetization().mtu_payload_bytes, 1000);
  EXPECT_DOUBLE_EQ(c.Dual().eta, 5.0);
  EXPECT_DOUBLE_EQ(c.Encoder(EncoderMode::kCbrL, 3).keyframe_period_s, c.keyframe_period_s);
  EXPECT_EQ(c.Encoder(EncoderMode::kCbrL, 3).seed, 3u);
}

TEST(Config, ParseErrorCarriesLine) {
  try {
    Parse("[run]\nseed = 1\n[broken\n");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 3);
  }
}

}  // namespace
}  // namespace pdstream
