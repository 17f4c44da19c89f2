#ifndef PDSTREAM_ANALYTICS_H_
#define PDSTREAM_ANALYTICS_H_

#include <cstdint>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "pdstream/receiver.h"

namespace pdstream {

// Tail density y = k (x - x_high)^(-alpha), with k normalized to the full
// sample so that TailMass returns P(X >= x) of the whole distribution.
struct TailFit {
  double k = 0.0;
  double alpha = 0.0;
  double x_high = 0.0;
  int64_t n_tail = 0;
  int64_t n_total = 0;
  double r2 = 0.0;
  int bins = 0;
  bool integrable = false;  // alpha > 1
};

// Count-weighted least squares of log density on log(x - x_high) over
// log-spaced bins (>= 8 bins holding >= 3 samples each). Throws
// InsufficientDataError with fewer than 30 samples above x_high or too few
// populated bins.
TailFit FitPowerTail(std::span<const double> samples, double x_high);

// k / (alpha - 1) * (x - x_high)^(1 - alpha). Throws std::domain_error for
// x <= x_high or a non-integrable fit.
double TailMass(const TailFit& fit, double x);
double TailMass(double k, double alpha, double x_high, double x);

// 1 - P2(x) / P1(x).
double TailSlash(const TailFit& baseline, const TailFit& improved, double x);

// Fraction of samples >= x.
double EmpiricalCcdf(std::span<const double> samples, double x);

// Nearest-rank percentile: the ceil(p / 100 * n)-th smallest sample. Throws
// std::invalid_argument on an empty sample and std::domain_error for p
// outside (0, 100].
double Percentile(std::span<const double> samples, double p);

// PSNR change implied by a QP-index change, in dB.
inline double PsnrProxy(double delta_qp) { return 0.89 * delta_qp; }

struct PsnrProxyConfig {
  double anchor_db = 60.0;  // proxy PSNR at QP index 0
  double degraded_penalty_db = 3.0;
};

// Per-frame output schema.
inline constexpr const char* kFrameColumns[] = {
    "capture_ts", "stream_id", "frame_type", "d_encode", "d_pacer", "d_trans",
    "d_jitter",   "d_decode",  "d_e2e",      "rendered", "stalled", "frame_id",
    "size_bits",  "qp_index",  "d_other",    "decodable", "degraded", "render_ts"};

void WriteFramesCsv(std::ostream& out, const std::vector<FrameRecord>& records);
// Throws SchemaError listing absent columns; ParseError on bad rows.
std::vector<FrameRecord> ReadFramesCsv(std::istream& in);

// Network-side summary that the frame log does not carry.
struct NetworkSummary {
  double mean_rtt_ms = 0.0;
  int64_t packets_sent = 0;
  int64_t packets_lost = 0;
};

struct QoeReport {
  std::string run;
  double fps = 0.0;
  double stall_rate_pct = 0.0;
  double d_trans = 0.0;
  double d_pacer = 0.0;
  double d_jitter = 0.0;
  double rtt = 0.0;
  double loss_pct = 0.0;
  double e2e_mean = 0.0;
  double e2e_p97 = 0.0;
  double psnr_proxy_db = 0.0;
  double mean_qp = 0.0;
  int64_t rendered = 0;
};

inline constexpr const char* kReportColumns[] = {
    "run",      "fps",      "stall_rate_pct", "d_trans", "d_pacer",       "d_jitter",
    "rtt",      "loss_pct", "e2e_mean",       "e2e_p97", "psnr_proxy_db", "mean_qp",
    "rendered"};

// Delay columns average the rendered frames. FPS and stalls come from 1 s
// windows over [0, duration_ms).
QoeReport BuildQoeReport(const std::string& run,
                         const std::vector<FrameRecord>& records,
                         const NetworkSummary& net, double duration_ms,
                         int stall_fps = 12, PsnrProxyConfig psnr = {});

void WriteReportCsv(std::ostream& out, const std::vector<QoeReport>& rows,
                    const std::string& preamble = "");
// Throws SchemaError listing absent columns.
std::vector<QoeReport> ReadReportCsv(std::istream& in);

// Plain comma split; the formats here never quote.
std::vector<std::string> SplitCsvLine(const std::string& line);

}  // namespace pdstream

#endif  // PDSTREAM_ANALYTICS_H_
