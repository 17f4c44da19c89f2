#ifndef PDSTREAM_MEDIA_H_
#define PDSTREAM_MEDIA_H_

#include <array>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace pdstream {

enum class ContentProfile { kStreet, kConference, kSports, kGaming };

// Throws ConfigError for names other than street/conference/sports/gaming.
ContentProfile ParseProfile(std::string_view name);
std::string_view ProfileName(ContentProfile profile);

// Generator constants for one content profile. Complexity and SAD are in
// arbitrary but mutually consistent units; only ratios reach the rate models.
struct ProfileParams {
  double sad_median = 400.0;
  // Log-domain standard deviation and lag-1 autocorrelation of the SAD
  // process between scene cuts.
  double sad_log_sigma = 0.35;
  double sad_log_ar = 0.9;
  double scene_cuts_per_s = 0.05;
  // Scene-cut SAD as a multiple of the median, drawn uniformly.
  double cut_sad_min = 6.0;
  double cut_sad_max = 10.0;
  // Ground-truth SATD as a cubic in x = sad / sad_median, scaled so that
  // satd(x = 1) = satd_at_median * (w0 + w1 + w2 + w3).
  double satd_at_median = 1000.0;
  std::array<double, 4> satd_shape = {0.20, 0.70, 0.09, 0.01};
  // Multiplicative log-normal noise on the SAD to SATD mapping.
  double satd_noise_sigma = 0.05;
};

ProfileParams DefaultProfileParams(ContentProfile profile);

struct FrameContent {
  double satd_base = 0.0;  // complexity of coding this frame from its predecessor
  double sad_next = 0.0;   // SAD between this frame and the next one
  bool scene_cut = false;  // the transition to the next frame is a cut
};

struct ContentTrace {
  double fps_native = 30.0;
  std::vector<FrameContent> frames;
  std::string profile_name;

  double MedianSad() const;
  // Throws ValidationError on any broken invariant.
  void Validate() const;
};

ContentTrace GenerateSyntheticContent(uint64_t seed, double duration_s,
                                      double fps, ContentProfile profile);
ContentTrace GenerateSyntheticContent(uint64_t seed, double duration_s,
                                      double fps, ContentProfile profile,
                                      const ProfileParams& params);

// SAD between frame `frame_idx` and the frame `gap_frames` earlier.
//
// s(i, g) = s(i, 1) * g^rho, capped at the scene-cut level (5x the trace
// median). When the span crosses a scene cut the value is at least the
// largest cut SAD inside the span. Accepts fractional gaps >= 1 for the
// allocator's f / f' ratios. Throws std::out_of_range when the span leaves
// the trace.
double SadAtGap(const ContentTrace& trace, int64_t frame_idx, double gap_frames,
                double rho = 0.75);
// Same, with the scene-cut cap precomputed by the caller.
double SadAtGap(const ContentTrace& trace, int64_t frame_idx, double gap_frames,
                double rho, double cut_level);

// Multiple of the trace median that marks a scene cut.
inline constexpr double kSceneCutFactor = 5.0;

// Content trace CSV: `frame_idx,satd_base,sad_next,scene_cut`.
void WriteContentCsv(std::ostream& out, const ContentTrace& trace);
ContentTrace ReadContentCsv(std::istream& in, double fps,
                            std::string profile_name = "imported");

enum class FrameType { kKey, kDelta };
enum class StreamId : uint8_t { kStream1 = 1, kStream2 = 2 };

inline int ToInt(StreamId id) { return static_cast<int>(id); }
std::string_view FrameTypeName(FrameType type);

struct EncodedFrame {
  int64_t frame_id = 0;       // monotone across both streams
  int64_t content_index = 0;  // index of the captured frame in the trace
  StreamId stream = StreamId::kStream1;
  FrameType type = FrameType::kDelta;
  int64_t size_bits = 0;  // whole bytes, so always a multiple of 8
  double quant_step = 0.0;
  int qp_index = 0;
  double capture_ts = 0.0;
  double encode_done_ts = 0.0;
  bool saturated = false;  // rate target not reachable within the quant table
};

// Strict priority order, highest first.
enum class PriorityClass : uint8_t {
  kAudio = 0,
  kRetransmission = 1,
  kVideoS2 = 2,
  kVideoS1 = 3,
  kFec = 4,
};
inline constexpr int kNumPriorityClasses = 5;
std::string_view PriorityClassName(PriorityClass c);

struct Packet {
  int64_t pkt_id = 0;
  int64_t frame_id = 0;
  StreamId stream = StreamId::kStream1;
  int seq_in_frame = 0;
  int packets_in_frame = 0;
  int size_bytes = 0;  // payload + header
  PriorityClass priority = PriorityClass::kVideoS1;
  double ts_enqueued = 0.0;
  double ts_sent = 0.0;
  double ts_arrived = 0.0;
  bool lost = false;
};

struct PacketizationConfig {
  int mtu_payload_bytes = 1200;
  int header_bytes = 12;
};

// Splits a frame into MTU-sized packets. Ids are taken from `next_pkt_id`,
// which is advanced.
std::vector<Packet> Packetize(const EncodedFrame& frame,
                              const PacketizationConfig& config,
                              PriorityClass priority, int64_t& next_pkt_id);

// Payload bits carried by a complete set of packets of one frame.
int64_t ReassembledBits(std::span<const Packet> packets,
                        const PacketizationConfig& config);

}  // namespace pdstream

#endif  // PDSTREAM_MEDIA_H_
