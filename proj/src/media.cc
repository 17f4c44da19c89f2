#include "pdstream/media.h"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <random>
#include <sstream>

#include <fmt/format.h>

#include "pdstream/errors.h"

namespace pdstream {
namespace {

double Median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  const size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + mid, v.end());
  const double hi = v[mid];
  if (v.size() % 2 == 1) return hi;
  const double lo = *std::max_element(v.begin(), v.begin() + mid);
  return 0.5 * (lo + hi);
}

double TruthSatd(const ProfileParams& p, double sad) {
  const double x = sad / p.sad_median;
  const auto& w = p.satd_shape;
  return p.satd_at_median * (w[0] + x * (w[1] + x * (w[2] + x * w[3])));
}

}  // namespace

ContentProfile ParseProfile(std::string_view name) {
  if (name == "street") return ContentProfile::kStreet;
  if (name == "conference") return ContentProfile::kConference;
  if (name == "sports") return ContentProfile::kSports;
  if (name == "gaming") return ContentProfile::kGaming;
  throw ConfigError(fmt::format("unknown content profile '{}'", name));
}

std::string_view ProfileName(ContentProfile profile) {
  switch (profile) {
    case ContentProfile::kStreet:
      return "street";
    case ContentProfile::kConference:
      return "conference";
    case ContentProfile::kSports:
      return "sports";
    case ContentProfile::kGaming:
      return "gaming";
  }
  return "unknown";
}

ProfileParams DefaultProfileParams(ContentProfile profile) {
  ProfileParams p;
  switch (profile) {
    case ContentProfile::kStreet:
      p.sad_median = 400.0;
      p.sad_log_sigma = 0.35;
      p.scene_cuts_per_s = 0.05;
      p.satd_at_median = 1000.0;
      p.satd_shape = {0.20, 0.70, 0.09, 0.01};
      break;
    case ContentProfile::kConference:
      // Mostly static background.
      p.sad_median = 150.0;
      p.sad_log_sigma = 0.25;
      p.scene_cuts_per_s = 0.01;
      p.satd_at_median = 600.0;
      p.satd_shape = {0.35, 0.55, 0.08, 0.02};
      break;
    case ContentProfile::kSports:
      p.sad_median = 650.0;
      p.sad_log_sigma = 0.45;
      p.scene_cuts_per_s = 0.08;
      p.satd_at_median = 1400.0;
      p.satd_shape = {0.10, 0.80, 0.085, 0.015};
      break;
    case ContentProfile::kGaming:
      p.sad_median = 220.0;
      p.sad_log_sigma = 0.30;
      p.scene_cuts_per_s = 0.03;
      p.satd_at_median = 800.0;
      p.satd_shape = {0.25, 0.60, 0.12, 0.03};
      break;
  }
  return p;
}

double ContentTrace::MedianSad() const {
  std::vector<double> sads;
  sads.reserve(frames.size());
  for (const auto& f : frames) sads.push_back(f.sad_next);
  return Median(std::move(sads));
}

void ContentTrace::Validate() const {
  if (!(fps_native >= 1.0 && fps_native <= 120.0)) {
    throw ValidationError(fmt::format("fps {} outside [1, 120]", fps_native));
  }
  for (size_t i = 0; i < frames.size(); ++i) {
    if (!(frames[i].satd_base > 0.0) || !(frames[i].sad_next >= 0.0)) {
      throw ValidationError(
          fmt::format("frame {}: satd_base must be > 0 and sad_next >= 0", i));
    }
  }
  const double cut_level = kSceneCutFactor * MedianSad();
  for (size_t i = 0; i < frames.size(); ++i) {
    if (frames[i].scene_cut && frames[i].sad_next < cut_level) {
      throw ValidationError(fmt::format(
          "frame {}: scene cut SAD {} below {}x median", i, frames[i].sad_next,
          kSceneCutFactor));
    }
  }
}

ContentTrace GenerateSyntheticContent(uint64_t seed, double duration_s,
                                      double fps, ContentProfile profile) {
  return GenerateSyntheticContent(seed, duration_s, fps, profile,
                                  DefaultProfileParams(profile));
}

ContentTrace GenerateSyntheticContent(uint64_t seed, double duration_s,
                                      double fps, ContentProfile profile,
                                      const ProfileParams& params) {
  if (!(duration_s > 0.0)) throw ConfigError("content duration must be > 0");
  if (!(fps >= 1.0 && fps <= 120.0)) throw ConfigError("fps must be in [1, 120]");

  const auto n = static_cast<size_t>(std::llround(duration_s * fps));
  ContentTrace trace;
  trace.fps_native = fps;
  trace.profile_name = std::string(ProfileName(profile));
  trace.frames.resize(n);

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);

  const double mu = std::log(params.sad_median);
  const double phi = params.sad_log_ar;
  const double innovation = params.sad_log_sigma * std::sqrt(1.0 - phi * phi);
  const double cut_prob = params.scene_cuts_per_s / fps;

  double log_sad = mu + params.sad_log_sigma * normal(rng);
  bool prev_cut = false;
  for (size_t i = 0; i < n; ++i) {
    log_sad = mu + phi * (log_sad - mu) + innovation * normal(rng);
    auto& f = trace.frames[i];
    const bool cut = !prev_cut && i + 1 < n && uniform(rng) < cut_prob;
    const double cut_scale =
        params.cut_sad_min +
        (params.cut_sad_max - params.cut_sad_min) * uniform(rng);
    f.scene_cut = cut;
    f.sad_next = cut ? params.sad_median * cut_scale : std::exp(log_sad);
    prev_cut = cut;
  }

  // Cuts must clear the realized median, not only the nominal one.
  const double cut_floor = 1.1 * kSceneCutFactor * trace.MedianSad();
  for (auto& f : trace.frames) {
    if (f.scene_cut) f.sad_next = std::max(f.sad_next, cut_floor);
  }

  for (size_t i = 0; i < n; ++i) {
    const double sad_in = i == 0 ? params.sad_median : trace.frames[i - 1].sad_next;
    const double noise = std::exp(params.satd_noise_sigma * normal(rng));
    trace.frames[i].satd_base = TruthSatd(params, sad_in) * noise;
  }
  return trace;
}

double SadAtGap(const ContentTrace& trace, int64_t frame_idx, double gap_frames,
                double rho) {
  return SadAtGap(trace, frame_idx, gap_frames, rho,
                  kSceneCutFactor * trace.MedianSad());
}

double SadAtGap(const ContentTrace& trace, int64_t frame_idx, double gap_frames,
                double rho, double cut_level) {
  const auto n = static_cast<int64_t>(trace.frames.size());
  if (!(gap_frames >= 1.0)) throw std::out_of_range("gap must be >= 1 frame");
  if (frame_idx < 1 || frame_idx >= n ||
      static_cast<double>(frame_idx) - gap_frames < 0.0) {
    throw std::out_of_range(fmt::format(
        "frame {} with gap {} outside trace of {} frames", frame_idx,
        gap_frames, n));
  }
  const double base = trace.frames[frame_idx - 1].sad_next;
  double value = std::min(base * std::pow(gap_frames, rho), cut_level);

  const auto span = static_cast<int64_t>(std::ceil(gap_frames - 1e-9));
  for (int64_t j = std::max<int64_t>(0, frame_idx - span); j < frame_idx; ++j) {
    if (trace.frames[j].scene_cut) value = std::max(value, trace.frames[j].sad_next);
  }
  return value;
}

void WriteContentCsv(std::ostream& out, const ContentTrace& trace) {
  out << "frame_idx,satd_base,sad_next,scene_cut\n";
  for (size_t i = 0; i < trace.frames.size(); ++i) {
    const auto& f = trace.frames[i];
    out << fmt::format("{},{:.6f},{:.6f},{}\n", i, f.satd_base, f.sad_next,
                       f.scene_cut ? 1 : 0);
  }
}

ContentTrace ReadContentCsv(std::istream& in, double fps,
                            std::string profile_name) {
  ContentTrace trace;
  trace.fps_native = fps;
  trace.profile_name = std::move(profile_name);

  std::string line;
  int line_no = 0;
  if (!std::getline(in, line)) throw ParseError("empty content trace", 0);
  ++line_no;
  if (line.rfind("frame_idx,satd_base,sad_next,scene_cut", 0) != 0) {
    throw ParseError("missing content trace header", line_no);
  }
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != 4) {
      throw ParseError("expected 4 columns", line_no);
    }
    try {
      size_t pos = 0;
      const long idx = std::stol(cells[0], &pos);
      if (idx != static_cast<long>(trace.frames.size())) {
        throw ParseError("frame_idx out of sequence", line_no);
      }
      FrameContent f;
      f.satd_base = std::stod(cells[1]);
      f.sad_next = std::stod(cells[2]);
      const int cut = std::stoi(cells[3]);
      if (cut != 0 && cut != 1) throw ParseError("scene_cut must be 0/1", line_no);
      f.scene_cut = cut == 1;
      trace.frames.push_back(f);
    } catch (const std::logic_error&) {
      throw ParseError("malformed number", line_no);
    }
  }
  trace.Validate();
  return trace;
}

std::string_view FrameTypeName(FrameType type) {
  return type == FrameType::kKey ? "KEY" : "DELTA";
}

std::string_view PriorityClassName(PriorityClass c) {
  switch (c) {
    case PriorityClass::kAudio:
      return "AUDIO";
    case PriorityClass::kRetransmission:
      return "RETX";
    case PriorityClass::kVideoS2:
      return "VIDEO_S2";
    case PriorityClass::kVideoS1:
      return "VIDEO_S1";
    case PriorityClass::kFec:
      return "FEC";
  }
  return "UNKNOWN";
}

std::vector<Packet> Packetize(const EncodedFrame& frame,
                              const PacketizationConfig& config,
                              PriorityClass priority, int64_t& next_pkt_id) {
  const int64_t payload = (frame.size_bits + 7) / 8;
  const int64_t mtu = config.mtu_payload_bytes;
  const auto count = static_cast<int>(std::max<int64_t>(1, (payload + mtu - 1) / mtu));
  std::vector<Packet> packets;
  packets.reserve(count);
  int64_t remaining = payload;
  for (int seq = 0; seq < count; ++seq) {
    Packet p;
    p.pkt_id = next_pkt_id++;
    p.frame_id = frame.frame_id;
    p.stream = frame.stream;
    p.seq_in_frame = seq;
    p.packets_in_frame = count;
    const int64_t chunk = std::min(remaining, mtu);
    remaining -= chunk;
    p.size_bytes = static_cast<int>(chunk) + config.header_bytes;
    p.priority = priority;
    packets.push_back(p);
  }
  return packets;
}

int64_t ReassembledBits(std::span<const Packet> packets,
                        const PacketizationConfig& config) {
  int64_t bytes = 0;
  for (const auto& p : packets) bytes += p.size_bytes - config.header_bytes;
  return bytes * 8;
}

}  // namespace pdstream
