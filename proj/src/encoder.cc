#include "pdstream/encoder.h"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include <Eigen/Dense>
#include <fmt/format.h>

#include "json.hpp"
#include "pdstream/errors.h"

namespace pdstream {
namespace {

uint64_t SplitMix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

double ToUnit(uint64_t x) {
  return (static_cast<double>(x >> 11) + 0.5) * (1.0 / 9007199254740992.0);
}

}  // namespace

QuantTable::QuantTable(double q_min, double q_max) {
  if (!(q_min > 0.0) || !(q_max > q_min)) {
    throw ConfigError("quant table needs 0 < q_min < q_max");
  }
  log_ratio_ = std::log(q_max / q_min) / (kSize - 1);
  for (int i = 0; i < kSize; ++i) steps_[i] = q_min * std::exp(log_ratio_ * i);
  steps_.back() = q_max;
}

double QuantTable::ContinuousIndex(double q) const {
  return std::log(q / steps_.front()) / log_ratio_;
}

int QuantTable::NearestIndex(double q) const {
  const double idx = std::round(ContinuousIndex(q));
  return static_cast<int>(std::clamp(idx, 0.0, static_cast<double>(kSize - 1)));
}

double RqRequiredBits(double q, double c, double alpha1, double alpha2) {
  if (!(q > 0.0)) throw std::domain_error("quantizer must be positive");
  if (!(c >= 0.0)) throw std::domain_error("complexity must be non-negative");
  return c * (alpha1 / q + alpha2 / (q * q));
}

double RqRequiredBits(double q, double c, const RqModel& m) {
  return RqRequiredBits(q, c, m.alpha1, m.alpha2);
}

RqModel RqRefit(RqModel m, const RqObservation& observation) {
  m.history.push_back(observation);
  while (m.history.size() > RqModel::kHistoryCapacity) m.history.pop_front();
  if (m.history.size() < 2) return m;

  // Weighted normal equations for y = a1 u + a2 u^2.
  double s11 = 0, s12 = 0, s22 = 0, b1 = 0, b2 = 0, w = 1.0;
  for (auto it = m.history.rbegin(); it != m.history.rend(); ++it) {
    if (it->q > 0.0 && it->c > 0.0) {
      const double u = 1.0 / it->q;
      const double u2 = u * u;
      const double y = it->bits / it->c;
      s11 += w * u2;
      s12 += w * u * u2;
      s22 += w * u2 * u2;
      b1 += w * y * u;
      b2 += w * y * u2;
    }
    w *= RqModel::kForgetting;
  }
  const double det = s11 * s22 - s12 * s12;
  if (!(s11 > 0.0) || std::abs(det) <= 1e-9 * s11 * s22) return m;

  double a1 = (b1 * s22 - b2 * s12) / det;
  double a2 = (s11 * b2 - s12 * b1) / det;
  if (a1 < 0.0 || a2 < 0.0) {
    // Best single-coefficient fit on the non-negative boundary.
    const double only_a1 = std::max(0.0, b1 / s11);
    const double only_a2 = std::max(0.0, b2 / s22);
    const double sse_a1 = -2 * only_a1 * b1 + only_a1 * only_a1 * s11;
    const double sse_a2 = -2 * only_a2 * b2 + only_a2 * only_a2 * s22;
    if (sse_a1 <= sse_a2) {
      a1 = only_a1;
      a2 = 0.0;
    } else {
      a1 = 0.0;
      a2 = only_a2;
    }
  }
  if (a1 > 0.0 || a2 > 0.0) {
    m.alpha1 = a1;
    m.alpha2 = a2;
  }
  return m;
}

double RqInvert(double bits, double c, const RqModel& m) {
  if (!(bits > 0.0)) throw std::domain_error("target bits must be positive");
  if (!(c > 0.0)) throw std::domain_error("complexity must be positive");
  const double a = c * m.alpha2;
  const double b = c * m.alpha1;
  if (a == 0.0) {
    if (b == 0.0) throw std::domain_error("degenerate rate model");
    return b / bits;
  }
  // Positive root of a u^2 + b u - bits = 0 in the cancellation-free form.
  const double u = 2.0 * bits / (b + std::sqrt(b * b + 4.0 * a * bits));
  return 1.0 / u;
}

QuantizerChoice ChooseQuantizer(double bits, double c, const RqModel& m,
                                const QuantTable& table) {
  QuantizerChoice choice;
  if (!(c > 0.0)) {
    choice.index = 0;
    choice.step = table.min();
    return choice;
  }
  if (!(bits > 0.0)) {
    choice.index = QuantTable::kSize - 1;
    choice.step = table.max();
    choice.saturated = true;
    return choice;
  }
  const double q = RqInvert(bits, c, m);
  if (q < table.min()) {
    choice.index = 0;
    choice.saturated = true;
  } else if (q > table.max()) {
    choice.index = QuantTable::kSize - 1;
    choice.saturated = true;
  } else {
    choice.index = table.NearestIndex(q);
  }
  choice.step = table.step(choice.index);
  return choice;
}

double SatdFromSad(double sad, const SadCubicModel& m) {
  const auto& b = m.beta;
  const double v = b[0] + sad * (b[1] + sad * (b[2] + sad * b[3]));
  return std::max(v, kMinComplexity);
}

SadCubicModel FitSadCubic(std::span<const std::pair<double, double>> samples) {
  if (samples.size() < 8) {
    throw InsufficientDataError(
        fmt::format("cubic fit needs >= 8 samples, got {}", samples.size()));
  }
  const auto n = static_cast<Eigen::Index>(samples.size());
  double scale = 0.0;
  for (const auto& [s, c] : samples) scale = std::max(scale, std::abs(s));
  if (scale == 0.0) scale = 1.0;

  Eigen::MatrixXd design(n, 4);
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double x = samples[i].first / scale;
    design(i, 0) = 1.0;
    design(i, 1) = x;
    design(i, 2) = x * x;
    design(i, 3) = x * x * x;
    y(i) = samples[i].second;
  }

  SadCubicModel model;
  Eigen::VectorXd coef = Eigen::VectorXd::Zero(4);
  for (const int order : {4, 2, 1}) {
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design.leftCols(order));
    qr.setThreshold(1e-10);
    if (qr.rank() == order) {
      coef.head(order) = qr.solve(y);
      model.degenerate = order < 4;
      break;
    }
  }
  for (int k = 0; k < 4; ++k) model.beta[k] = coef(k) / std::pow(scale, k);
  const Eigen::VectorXd residual = design * coef - y;
  model.fit_rms = std::sqrt(residual.squaredNorm() / static_cast<double>(n));
  return model;
}

void ComplexityPredictor::Add(int64_t frame_idx, double complexity, double fps) {
  if (!history_.empty() && fps != fps_) history_.clear();
  fps_ = fps;
  history_.emplace_back(frame_idx, complexity);
  while (history_.size() > window_) history_.pop_front();
}

ComplexityPrediction ComplexityPredictor::Predict(int64_t next_idx) const {
  if (history_.empty()) return {0.0, true};
  if (history_.size() < 2) return {history_.back().second, true};
  double mx = 0, my = 0;
  double lo = history_.front().second, hi = lo;
  for (const auto& [x, y] : history_) {
    mx += static_cast<double>(x);
    my += y;
    lo = std::min(lo, y);
    hi = std::max(hi, y);
  }
  const auto n = static_cast<double>(history_.size());
  mx /= n;
  my /= n;
  double sxx = 0, sxy = 0;
  for (const auto& [x, y] : history_) {
    const double dx = static_cast<double>(x) - mx;
    sxx += dx * dx;
    sxy += dx * (y - my);
  }
  if (sxx == 0.0) return {history_.back().second, true};
  const double slope = sxy / sxx;
  const double v = my + slope * (static_cast<double>(next_idx) - mx);
  // A spike at the edge of the window can tilt the line far outside the
  // observed range.
  return {std::max(std::clamp(v, lo, 2.0 * hi), kMinComplexity), false};
}

std::string_view EncoderModeName(EncoderMode mode) {
  switch (mode) {
    case EncoderMode::kCbrL:
      return "CBR_L";
    case EncoderMode::kCbrS:
      return "CBR_S";
    case EncoderMode::kKeyMin:
      return "KEY_MIN";
  }
  return "UNKNOWN";
}

ContentOracle::ContentOracle(const ContentTrace& trace, double rho)
    : trace_(&trace), rho_(rho) {
  median_sad_ = trace.MedianSad();
  cut_level_ = kSceneCutFactor * median_sad_;
  std::vector<std::pair<double, double>> samples;
  samples.reserve(trace.frames.size());
  for (int64_t i = 0; i < static_cast<int64_t>(trace.frames.size()); ++i) {
    samples.emplace_back(SadIn(i), trace.frames[i].satd_base);
  }
  if (samples.size() >= 8) {
    truth_ = FitSadCubic(samples);
  } else {
    double mean = 0.0;
    for (const auto& s : samples) mean += s.second;
    truth_.beta = {samples.empty() ? 1.0 : mean / samples.size(), 0, 0, 0};
  }
}

double ContentOracle::SadIn(int64_t idx) const {
  return idx == 0 ? median_sad_ : trace_->frames[idx - 1].sad_next;
}

bool ContentOracle::CutBefore(int64_t idx) const {
  return idx > 0 && trace_->frames[idx - 1].scene_cut;
}

double ContentOracle::Level(int64_t idx) const {
  while (idx > 0 && CutBefore(idx)) --idx;
  return trace_->frames[idx].satd_base;
}

double ContentOracle::DeltaComplexity(int64_t idx, double gap_frames) const {
  const double base = trace_->frames[idx].satd_base;
  const double gap = std::min(gap_frames, static_cast<double>(idx));
  if (gap <= 1.0) return base;
  const double s1 = SadIn(idx);
  const double sg = SadAtGap(*trace_, idx, gap, rho_, cut_level_);
  const double ratio = SatdFromSad(sg, truth_) / SatdFromSad(s1, truth_);
  return base * std::max(1.0, ratio);
}

Encoder::Encoder(EncoderConfig config, const ContentOracle* oracle)
    : config_(config),
      oracle_(oracle),
      table_(config.q_min, config.q_max) {
  rq_.alpha1 = config.initial_alpha1;
  rq_.alpha2 = config.initial_alpha2;
}

bool Encoder::KeyframeDue(int64_t content_index, double capture_ts) const {
  if (key_count_ == 0) return true;
  switch (config_.mode) {
    case EncoderMode::kCbrL:
    case EncoderMode::kCbrS:
      return capture_ts - last_key_ts_ >= config_.keyframe_period_s * 1000.0 - 1e-6;
    case EncoderMode::kKeyMin:
      return oracle_->CutBefore(content_index);
  }
  return false;
}

double Encoder::Noise(int64_t content_index, StreamId stream) const {
  const uint64_t key = SplitMix64(config_.seed ^ SplitMix64(
      static_cast<uint64_t>(content_index) * 4 + static_cast<uint64_t>(stream)));
  const double u1 = ToUnit(key);
  const double u2 = ToUnit(SplitMix64(key));
  const double z = std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  return std::exp(config_.size_noise_sigma * z);
}

double Encoder::TrueBits(double q, double c, int64_t content_index,
                         StreamId stream) const {
  return RqRequiredBits(q, c, config_.true_alpha1, config_.true_alpha2) *
         Noise(content_index, stream);
}

void Encoder::Drain(double now, double bps) {
  if (buffer_ts_ >= 0.0 && now > buffer_ts_) buffer_bits_ -= bps * (now - buffer_ts_) / 1000.0;
  buffer_ts_ = std::max(buffer_ts_, now);
  // Idle time banks at most one window of credit.
  buffer_bits_ = std::max(buffer_bits_, -bps * config_.cbr_window_s);
}

int Encoder::ReferenceQpIndex() const {
  if (!has_q_ref_) return QuantTable::kSize / 2;
  return table_.NearestIndex(std::exp(log_q_ref_));
}

double Encoder::average_key_interval_s() const {
  if (key_count_ < 2) return config_.keyframe_period_s;
  return (last_key_ts_ - first_key_ts_) / 1000.0 / (key_count_ - 1);
}

void Encoder::AccountExternalBits(double ts, int64_t bits) {
  (void)ts;
  buffer_bits_ += static_cast<double>(bits);
}

EncodedFrame Encoder::Encode(const EncodeRequest& request, int64_t frame_id) {
  const int64_t idx = request.content_index;
  const bool key = request.type == FrameType::kKey;
  const double c = key ? config_.kappa * oracle_->Level(idx)
                       : oracle_->DeltaComplexity(idx, request.gap_frames);

  EncodedFrame frame;
  frame.frame_id = frame_id;
  frame.content_index = idx;
  frame.stream = request.stream;
  frame.type = request.type;
  frame.capture_ts = request.capture_ts;

  double q = 0.0;
  switch (request.target.kind) {
    case RateTarget::Kind::kWindowedBitrate: {
      const double bps = request.target.value;
      const double per_frame = bps / request.fps;
      Drain(request.capture_ts, bps);
      QuantizerChoice choice;
      if (key && has_q_ref_) {
        choice.index = ReferenceQpIndex();
        choice.step = table_.step(choice.index);
      } else {
        double target = key ? config_.kappa * per_frame : per_frame;
        if (!key) {
          target = std::max(0.1 * per_frame,
                            per_frame - buffer_bits_ / (config_.cbr_window_s * request.fps));
        }
        choice = ChooseQuantizer(target, c, rq_, table_);
      }
      q = choice.step;
      frame.qp_index = choice.index;
      frame.saturated = choice.saturated;
      break;
    }
    case RateTarget::Kind::kFrameBits: {
      // Strict mode re-encodes until the frame lands on the target, which the
      // analytic codec can do in one step.
      RqModel truth;
      truth.alpha1 = config_.true_alpha1;
      truth.alpha2 = config_.true_alpha2;
      const double exact =
          RqInvert(std::max(request.target.value, 8.0) / Noise(idx, request.stream), c, truth);
      q = std::clamp(exact, table_.min(), table_.max());
      frame.saturated = q != exact;
      frame.qp_index = static_cast<int>(std::clamp(
          std::round(table_.ContinuousIndex(q)), 0.0, QuantTable::kSize - 1.0));
      break;
    }
    case RateTarget::Kind::kQuantizer: {
      frame.qp_index = std::clamp(static_cast<int>(request.target.value), 0,
                                  QuantTable::kSize - 1);
      q = table_.step(frame.qp_index);
      break;
    }
  }
  frame.quant_step = q;

  const double bits = TrueBits(q, c, idx, request.stream);
  frame.size_bits = std::max<int64_t>(8, static_cast<int64_t>(std::ceil(bits / 8.0)) * 8);
  frame.encode_done_ts = request.capture_ts + config_.encode_base_ms +
                         (key ? config_.encode_key_extra_ms : 0.0);

  rq_ = RqRefit(std::move(rq_), {q, c, static_cast<double>(frame.size_bits)});
  buffer_bits_ += static_cast<double>(frame.size_bits);
  if (buffer_ts_ < 0.0) buffer_ts_ = request.capture_ts;

  if (key) {
    if (key_count_ == 0) first_key_ts_ = request.capture_ts;
    last_key_ts_ = request.capture_ts;
    ++key_count_;
  } else {
    const double log_q = std::log(q);
    log_q_ref_ = has_q_ref_ ? 0.9 * log_q_ref_ + 0.1 * log_q : log_q;
    has_q_ref_ = true;
  }

  if (!key && request.gap_frames <= 1.0) {
    predictor_.Add(idx, c, request.fps);
    const double sad = oracle_->SadIn(idx);
    recent_sad_ = recent_sad_ == 0.0 ? sad : 0.9 * recent_sad_ + 0.1 * sad;
    sad_samples_.emplace_back(sad, c);
    if (sad_samples_.size() > 600) {
      sad_samples_.erase(sad_samples_.begin(), sad_samples_.begin() + 300);
    }
    ++frames_since_refit_;
    const bool first_fit = !has_sad_model_ && sad_samples_.size() >= 30;
    if (first_fit || (has_sad_model_ && frames_since_refit_ >= config_.cubic_refit_frames)) {
      sad_model_ = FitSadCubic(sad_samples_);
      has_sad_model_ = true;
      frames_since_refit_ = 0;
    }
  }
  return frame;
}

std::string Encoder::SnapshotJson() const {
  nlohmann::json j;
  j["alpha1"] = rq_.alpha1;
  j["alpha2"] = rq_.alpha2;
  j["betas"] = sad_model_.beta;
  j["fit_rms"] = sad_model_.fit_rms;
  return j.dump(2);
}

}  // namespace pdstream
