#include "pdstream/rate_control.h"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <fmt/format.h>

namespace pdstream {

double GccUpdate(const GccFeedback& feedback, double rate_bps,
                 const GccConfig& config) {
  double next = rate_bps;
  if (feedback.delay_gradient_ms > config.overuse_threshold_ms) {
    next = rate_bps * config.decrease;
  } else if (feedback.loss_fraction > config.loss_threshold) {
    next = rate_bps * (1.0 - 0.5 * feedback.loss_fraction);
  } else {
    next = rate_bps * config.increase;
  }
  return std::clamp(next, config.b_min, config.b_max);
}

GccController::GccController(GccConfig config, double initial_bps)
    : config_(config),
      rate_(std::clamp(initial_bps, config.b_min, config.b_max)) {}

double GccController::Update(double rtt_ms, double loss_fraction) {
  const double raw = last_rtt_ < 0.0 ? 0.0 : rtt_ms - last_rtt_;
  last_rtt_ = rtt_ms;
  gradient_ = config_.smoothing * gradient_ + (1.0 - config_.smoothing) * raw;
  rate_ = GccUpdate({gradient_, loss_fraction}, rate_, config_);
  return rate_;
}

double Reward(const RewardMetrics& m, const RewardWeights& w) {
  return w.w_bitrate * m.bitrate_bps + w.w_fps * m.fps - w.w_qp * m.qp -
         w.w_delay * m.delay_s - w.w_stall * m.stall;
}

double DiscountedReturn(std::span<const double> rewards, double gamma,
                        size_t horizon) {
  double sum = 0.0;
  double discount = 1.0;
  const size_t n = std::min(horizon, rewards.size());
  for (size_t k = 0; k < n; ++k) {
    sum += discount * rewards[k];
    discount *= gamma;
  }
  return sum;
}

std::vector<double> DiscountedReturns(std::span<const double> rewards,
                                      double gamma, size_t horizon) {
  std::vector<double> out(rewards.size());
  for (size_t t = 0; t < rewards.size(); ++t) {
    out[t] = DiscountedReturn(rewards.subspan(t), gamma, horizon);
  }
  return out;
}

std::vector<double> BitrateGrid(double lo_bps, double hi_bps, int points) {
  if (points < 2 || !(lo_bps > 0.0) || !(hi_bps > lo_bps)) {
    throw std::domain_error("bitrate grid needs 0 < lo < hi and >= 2 points");
  }
  std::vector<double> grid(points);
  const double ratio = std::pow(hi_bps / lo_bps, 1.0 / (points - 1));
  for (int i = 0; i < points; ++i) grid[i] = lo_bps * std::pow(ratio, i);
  grid.back() = hi_bps;
  return grid;
}

std::string_view FeatureName(Feature f) {
  switch (f) {
    case Feature::kThroughput:
      return "throughput";
    case Feature::kLoss:
      return "loss";
    case Feature::kRtt:
      return "rtt";
    case Feature::kDelay:
      return "delay";
    case Feature::kFps:
      return "fps";
    case Feature::kQp:
      return "qp";
    case Feature::kTargetBitrate:
      return "target_bitrate";
    case Feature::kActualBitrate:
      return "actual_bitrate";
    case Feature::kDualActive:
      return "dual_active";
    case Feature::kDualS1Size:
      return "dual_s1_size";
    case Feature::kDualS2Size:
      return "dual_s2_size";
    case Feature::kAllocS1:
      return "alloc_s1";
    case Feature::kAllocS2:
      return "alloc_s2";
  }
  return "unknown";
}

PolicyStateBuilder::PolicyStateBuilder(size_t samples, FeatureScales scales)
    : samples_(samples), scales_(scales) {}

void PolicyStateBuilder::Push(const FeatureSample& raw) {
  window_.push_back(raw);
  while (window_.size() > samples_) window_.pop_front();
}

Eigen::VectorXd PolicyStateBuilder::Vector() const {
  Eigen::VectorXd v = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(dim()));
  const size_t offset = samples_ - window_.size();
  for (size_t s = 0; s < window_.size(); ++s) {
    for (int f = 0; f < kNumFeatures; ++f) {
      const double x = window_[s][f];
      if (!std::isfinite(x)) {
        throw std::domain_error(fmt::format("non-finite state entry: feature {} in sample {} is {}",
                                            FeatureName(static_cast<Feature>(f)), s, x));
      }
      v[static_cast<Eigen::Index>((offset + s) * kNumFeatures + f)] = x / scales_.divisor[f];
    }
  }
  return v;
}

}  // namespace pdstream
