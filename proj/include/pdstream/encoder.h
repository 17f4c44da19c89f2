#ifndef PDSTREAM_ENCODER_H_
#define PDSTREAM_ENCODER_H_

#include <array>
#include <cstdint>
#include <deque>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "pdstream/media.h"

namespace pdstream {

// 52 strictly increasing quantizer steps, geometric between q_min and q_max.
// The defaults reproduce the H.264 QP 0..51 step ladder (ratio 2^(1/6)).
class QuantTable {
 public:
  static constexpr int kSize = 52;

  QuantTable() : QuantTable(0.625, 224.0) {}
  QuantTable(double q_min, double q_max);

  double step(int index) const { return steps_[index]; }
  double min() const { return steps_.front(); }
  double max() const { return steps_.back(); }
  std::span<const double> steps() const { return steps_; }

  // Fractional position of `q` on the ladder, in QP index units.
  double ContinuousIndex(double q) const;
  // Nearest entry in the log domain, clamped to [0, 51].
  int NearestIndex(double q) const;

 private:
  std::array<double, kSize> steps_{};
  double log_ratio_ = 0.0;
};

struct RqObservation {
  double q = 0.0;
  double c = 0.0;
  double bits = 0.0;
};

// Frame-level rate-quantization model R(q, c) = c * (alpha1 / q + alpha2 / q^2).
struct RqModel {
  double alpha1 = 300.0;
  double alpha2 = 3000.0;
  std::deque<RqObservation> history;

  static constexpr size_t kHistoryCapacity = 32;
  // Per-observation weight decay; the newest sample has weight 1.
  static constexpr double kForgetting = 0.9;
};

// Throws std::domain_error when q <= 0 or c < 0.
double RqRequiredBits(double q, double c, const RqModel& m);
double RqRequiredBits(double q, double c, double alpha1, double alpha2);

// Appends the observation and refits (alpha1, alpha2) by exponentially
// weighted least squares on bits / c = alpha1 * u + alpha2 * u^2, u = 1 / q.
// Coefficients stay non-negative; underdetermined or singular windows keep
// the previous coefficients.
RqModel RqRefit(RqModel m, const RqObservation& observation);

// Continuous quantizer q with RqRequiredBits(q, c, m) == bits. Throws
// std::domain_error when bits <= 0 or c <= 0.
double RqInvert(double bits, double c, const RqModel& m);

struct QuantizerChoice {
  int index = 0;
  double step = 0.0;
  bool saturated = false;
};

// Table entry whose predicted size is closest to `bits` in the log domain.
// Targets outside the table's reachable range clamp to an endpoint and set
// `saturated`.
QuantizerChoice ChooseQuantizer(double bits, double c, const RqModel& m,
                                const QuantTable& table);

struct SadCubicModel {
  std::array<double, 4> beta{};
  double fit_rms = 0.0;
  // Set when the cubic design was rank deficient and a lower order was used.
  bool degenerate = false;
};

inline constexpr double kMinComplexity = 1e-3;

// beta0 + beta1 s + beta2 s^2 + beta3 s^3, floored at kMinComplexity.
double SatdFromSad(double sad, const SadCubicModel& m);

// Ordinary least squares over (sad, satd) pairs. Needs >= 8 samples
// (InsufficientDataError otherwise).
SadCubicModel FitSadCubic(std::span<const std::pair<double, double>> samples);

struct ComplexityPrediction {
  double value = 0.0;
  bool low_confidence = false;
};

// Linear extrapolation of frame complexity over frame index, kept within
// [min / 2, 2 max] of the window. History is dropped whenever the frame rate
// changes.
class ComplexityPredictor {
 public:
  explicit ComplexityPredictor(size_t window = 10) : window_(window) {}

  void Add(int64_t frame_idx, double complexity, double fps);
  ComplexityPrediction Predict(int64_t next_idx) const;
  size_t size() const { return history_.size(); }

 private:
  size_t window_;
  double fps_ = 0.0;
  std::deque<std::pair<int64_t, double>> history_;
};

enum class EncoderMode { kCbrL, kCbrS, kKeyMin };

std::string_view EncoderModeName(EncoderMode mode);

struct EncoderConfig {
  EncoderMode mode = EncoderMode::kCbrL;
  double keyframe_period_s = 4.0;  // CBR_L / CBR_S
  double kappa = 7.0;              // keyframe complexity multiplier
  double cbr_window_s = 1.0;       // CBR_L payback horizon
  double q_min = 0.625;
  double q_max = 224.0;
  // Coefficients of the simulated codec; the rate controller only sees its
  // own refitted estimate.
  double true_alpha1 = 400.0;
  double true_alpha2 = 2000.0;
  double size_noise_sigma = 0.05;
  double initial_alpha1 = 300.0;
  double initial_alpha2 = 3000.0;
  double encode_base_ms = 4.0;
  double encode_key_extra_ms = 2.0;
  int cubic_refit_frames = 300;
  double gap_rho = 0.75;
  uint64_t seed = 1;
};

// Ground-truth complexity of frames coded at arbitrary gaps. A cubic fitted
// once over the whole trace scales the per-frame gap-1 complexity.
class ContentOracle {
 public:
  ContentOracle(const ContentTrace& trace, double rho);

  const ContentTrace& trace() const { return *trace_; }
  double cut_level() const { return cut_level_; }
  double rho() const { return rho_; }

  // Complexity of coding frame `idx` as a delta against frame idx - gap.
  double DeltaComplexity(int64_t idx, double gap_frames) const;
  // Complexity-level of frame `idx` ignoring scene cuts into it.
  double Level(int64_t idx) const;
  bool CutBefore(int64_t idx) const;
  // SAD between idx-1 and idx (gap 1); the median for the first frame.
  double SadIn(int64_t idx) const;

 private:
  const ContentTrace* trace_;
  double rho_;
  double cut_level_;
  double median_sad_;
  SadCubicModel truth_;
};

// What the rate controller aims for when coding one frame.
struct RateTarget {
  enum class Kind { kWindowedBitrate, kFrameBits, kQuantizer };
  Kind kind = Kind::kWindowedBitrate;
  double value = 0.0;  // bps, bits or QP index

  static RateTarget WindowedBitrate(double bps) { return {Kind::kWindowedBitrate, bps}; }
  static RateTarget FrameBits(double bits) { return {Kind::kFrameBits, bits}; }
  static RateTarget Quantizer(int qp_index) { return {Kind::kQuantizer, static_cast<double>(qp_index)}; }
};

struct EncodeRequest {
  int64_t content_index = 0;
  double capture_ts = 0.0;
  StreamId stream = StreamId::kStream1;
  FrameType type = FrameType::kDelta;
  RateTarget target;
  double fps = 30.0;
  double gap_frames = 1.0;  // distance to the reference frame
};

// Analytic codec with frame-level rate control. One instance per stream.
class Encoder {
 public:
  Encoder(EncoderConfig config, const ContentOracle* oracle);

  const EncoderConfig& config() const { return config_; }
  const QuantTable& table() const { return table_; }
  const RqModel& rq_model() const { return rq_; }
  const SadCubicModel& sad_model() const { return sad_model_; }
  bool has_sad_model() const { return has_sad_model_; }

  // Whether the mode's own keyframe policy asks for a keyframe here.
  bool KeyframeDue(int64_t content_index, double capture_ts) const;

  EncodedFrame Encode(const EncodeRequest& request, int64_t frame_id);

  // Bits produced elsewhere (e.g. a parallel stream) that count against
  // this encoder's windowed budget.
  void AccountExternalBits(double ts, int64_t bits);

  ComplexityPrediction PredictComplexity(int64_t next_idx) const {
    return predictor_.Predict(next_idx);
  }
  // Typical quantizer index of recent delta frames.
  int ReferenceQpIndex() const;
  double last_key_ts() const { return last_key_ts_; }
  double average_key_interval_s() const;
  // Mean recent SAD at gap 1, for the allocator's gap model.
  double recent_sad() const { return recent_sad_; }

  std::string SnapshotJson() const;

 private:
  // Leaks the virtual buffer at `bps` up to `now`.
  void Drain(double now, double bps);
  double TrueBits(double q, double c, int64_t content_index, StreamId stream) const;
  double Noise(int64_t content_index, StreamId stream) const;

  EncoderConfig config_;
  const ContentOracle* oracle_;
  QuantTable table_;
  RqModel rq_;
  SadCubicModel sad_model_;
  bool has_sad_model_ = false;
  std::vector<std::pair<double, double>> sad_samples_;
  int frames_since_refit_ = 0;
  ComplexityPredictor predictor_;
  // Bits produced beyond the target rate; CBR_L pays it back over one window.
  double buffer_bits_ = 0.0;
  double buffer_ts_ = -1.0;
  double log_q_ref_ = 0.0;
  bool has_q_ref_ = false;
  double last_key_ts_ = -1.0;
  double first_key_ts_ = -1.0;
  int key_count_ = 0;
  double recent_sad_ = 0.0;
};

}  // namespace pdstream

#endif  // PDSTREAM_ENCODER_H_
