#ifndef PDSTREAM_RATE_CONTROL_H_
#define PDSTREAM_RATE_CONTROL_H_

#include <array>
#include <cstddef>
#include <deque>
#include <span>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace pdstream {

struct GccConfig {
  double interval_ms = 500.0;
  // Smoothed per-interval growth of the RTT that counts as overuse.
  double overuse_threshold_ms = 5.0;
  double smoothing = 0.6;  // weight of the previous smoothed gradient
  double decrease = 0.85;
  double increase = 1.05;
  double loss_threshold = 0.10;
  double b_min = 0.3e6;
  double b_max = 4.0e6;
};

struct GccFeedback {
  double delay_gradient_ms = 0.0;  // already smoothed
  double loss_fraction = 0.0;
};

// One step of the delay-gradient / loss rule.
double GccUpdate(const GccFeedback& feedback, double rate_bps,
                 const GccConfig& config);

// Keeps the gradient smoother between calls.
class GccController {
 public:
  GccController(GccConfig config, double initial_bps);

  // `rtt_ms` and `loss_fraction` summarize the interval that just ended.
  double Update(double rtt_ms, double loss_fraction);
  double rate() const { return rate_; }
  double smoothed_gradient() const { return gradient_; }
  const GccConfig& config() const { return config_; }

 private:
  GccConfig config_;
  double rate_;
  double gradient_ = 0.0;
  double last_rtt_ = -1.0;
};

struct RewardWeights {
  double w_bitrate = 1e-5;
  double w_fps = 1.0;
  double w_qp = 1.0;
  double w_delay = 200.0;
  double w_stall = 4000.0;
  double dt_s = 0.1;
};

// Averages over the last dt: bitrate in bps, frame rate, QP index, E2E delay
// in seconds and stall fraction in [0, 1].
struct RewardMetrics {
  double bitrate_bps = 0.0;
  double fps = 0.0;
  double qp = 0.0;
  double delay_s = 0.0;
  double stall = 0.0;
};

double Reward(const RewardMetrics& m, const RewardWeights& w);

// sum_{k < horizon} gamma^k r_k over the available rewards.
double DiscountedReturn(std::span<const double> rewards, double gamma,
                        size_t horizon);
// Return at every index of an episode, truncated at the horizon and the end.
std::vector<double> DiscountedReturns(std::span<const double> rewards,
                                      double gamma, size_t horizon);

// Geometric target-bitrate grid, ascending.
std::vector<double> BitrateGrid(double lo_bps = 0.3e6, double hi_bps = 4.0e6,
                                int points = 17);

enum class Feature {
  kThroughput,
  kLoss,
  kRtt,
  kDelay,
  kFps,
  kQp,
  kTargetBitrate,
  kActualBitrate,
  kDualActive,
  kDualS1Size,
  kDualS2Size,
  kAllocS1,
  kAllocS2,
};
inline constexpr int kNumFeatures = 13;
std::string_view FeatureName(Feature f);

// Divisors applied before the network sees a feature.
struct FeatureScales {
  std::array<double, kNumFeatures> divisor = {
      1e6,    // throughput, bps
      1.0,    // loss fraction
      100.0,  // RTT, ms
      100.0,  // E2E delay, ms
      30.0,   // frames/s
      51.0,   // QP index
      1e6,    // target bitrate
      1e6,    // actual bitrate
      1.0,    // dual indicator
      1e5,    // stream-1 frame bits
      1e5,    // stream-2 frame bits
      1e6,    // b'
      1e6,    // b''
  };
};

using FeatureSample = std::array<double, kNumFeatures>;

// Sliding window of the last `samples` feature vectors (2 s at 100 ms).
// Dual-stream entries are zero outside the dual phase, so the layout never
// changes. Missing history is zero-filled.
class PolicyStateBuilder {
 public:
  explicit PolicyStateBuilder(size_t samples = 20, FeatureScales scales = {});

  void Push(const FeatureSample& raw);
  // Normalized, oldest sample first, feature-major within a sample. Throws
  // std::domain_error naming the first non-finite entry.
  Eigen::VectorXd Vector() const;
  size_t dim() const { return samples_ * kNumFeatures; }
  const FeatureScales& scales() const { return scales_; }
  void Reset() { window_.clear(); }

 private:
  size_t samples_;
  FeatureScales scales_;
  std::deque<FeatureSample> window_;
};

}  // namespace pdstream

#endif  // PDSTREAM_RATE_CONTROL_H_
