#include "pdstream/analytics.h"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

#include <fmt/format.h>

#include "pdstream/errors.h"

namespace pdstream {
namespace {

constexpr int kMinTail = 30;
constexpr int kMinBins = 8;
constexpr int kMinPerBin = 3;
constexpr int kMaxBins = 60;

struct Line {
  double intercept = 0.0;
  double slope = 0.0;
  double r2 = 0.0;
};

Line WeightedLine(const std::vector<double>& x, const std::vector<double>& y,
                  const std::vector<double>& w) {
  double sw = 0.0, sx = 0.0, sy = 0.0;
  for (size_t i = 0; i < x.size(); ++i) {
    sw += w[i];
    sx += w[i] * x[i];
    sy += w[i] * y[i];
  }
  const double mx = sx / sw;
  const double my = sy / sw;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (size_t i = 0; i < x.size(); ++i) {
    sxx += w[i] * (x[i] - mx) * (x[i] - mx);
    sxy += w[i] * (x[i] - mx) * (y[i] - my);
    syy += w[i] * (y[i] - my) * (y[i] - my);
  }
  Line line;
  line.slope = sxy / sxx;
  line.intercept = my - line.slope * mx;
  line.r2 = syy > 0.0 ? (sxy * sxy) / (sxx * syy) : 1.0;
  return line;
}

double Mean(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  double s = 0.0;
  for (double x : v) s += x;
  return s / v.size();
}

}  // namespace

TailFit FitPowerTail(std::span<const double> samples, double x_high) {
  std::vector<double> u;
  for (double x : samples) {
    if (x > x_high) u.push_back(x - x_high);
  }
  if (static_cast<int>(u.size()) < kMinTail) {
    throw InsufficientDataError(fmt::format(
        "{} samples above x_high = {}, need at least {}", u.size(), x_high, kMinTail));
  }
  std::sort(u.begin(), u.end());
  const double lo = std::log(u.front());
  const double hi = std::log(u.back()) + 1e-12;
  const double n_total = static_cast<double>(samples.size());

  for (int nb = kMaxBins; nb >= kMinBins; --nb) {
    const double step = (hi - lo) / nb;
    if (!(step > 0.0)) break;
    std::vector<double> counts(nb, 0.0);
    for (double v : u) {
      const int b = std::min(nb - 1, static_cast<int>((std::log(v) - lo) / step));
      counts[b] += 1.0;
    }
    std::vector<double> lx, ly, w;
    for (int b = 0; b < nb; ++b) {
      if (counts[b] < kMinPerBin) continue;
      const double a = std::exp(lo + b * step);
      const double e = std::exp(lo + (b + 1) * step);
      lx.push_back(0.5 * (std::log(a) + std::log(e)));
      ly.push_back(std::log(counts[b] / (n_total * (e - a))));
      w.push_back(counts[b]);
    }
    if (static_cast<int>(lx.size()) < kMinBins) continue;
    const Line line = WeightedLine(lx, ly, w);
    TailFit fit;
    fit.alpha = -line.slope;
    fit.k = std::exp(line.intercept);
    fit.x_high = x_high;
    fit.n_tail = static_cast<int64_t>(u.size());
    fit.n_total = static_cast<int64_t>(samples.size());
    fit.r2 = line.r2;
    fit.bins = static_cast<int>(lx.size());
    fit.integrable = fit.alpha > 1.0;
    return fit;
  }
  throw InsufficientDataError(fmt::format(
      "tail above x_high = {} does not fill {} bins with {} samples each", x_high,
      kMinBins, kMinPerBin));
}

double TailMass(double k, double alpha, double x_high, double x) {
  if (!(x > x_high)) throw std::domain_error("tail mass needs x > x_high");
  if (!(alpha > 1.0)) throw std::domain_error("tail is not integrable (alpha <= 1)");
  return k / (alpha - 1.0) * std::pow(x - x_high, 1.0 - alpha);
}

double TailMass(const TailFit& fit, double x) {
  return TailMass(fit.k, fit.alpha, fit.x_high, x);
}

double TailSlash(const TailFit& baseline, const TailFit& improved, double x) {
  return 1.0 - TailMass(improved, x) / TailMass(baseline, x);
}

double EmpiricalCcdf(std::span<const double> samples, double x) {
  if (samples.empty()) return 0.0;
  const auto n = std::count_if(samples.begin(), samples.end(), [x](double v) { return v >= x; });
  return static_cast<double>(n) / samples.size();
}

double Percentile(std::span<const double> samples, double p) {
  if (samples.empty()) throw std::invalid_argument("percentile of an empty sample");
  if (!(p > 0.0 && p <= 100.0)) throw std::domain_error("percentile p must be in (0, 100]");
  std::vector<double> sorted(samples.begin(), samples.end());
  const auto n = sorted.size();
  auto rank = static_cast<size_t>(std::ceil(p / 100.0 * n - 1e-9));
  rank = std::clamp<size_t>(rank, 1, n);
  std::nth_element(sorted.begin(), sorted.begin() + (rank - 1), sorted.end());
  return sorted[rank - 1];
}

std::vector<std::string> SplitCsvLine(const std::string& line) {
  std::vector<std::string> cells;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

void WriteFramesCsv(std::ostream& out, const std::vector<FrameRecord>& records) {
  bool first = true;
  for (const char* c : kFrameColumns) {
    out << (first ? "" : ",") << c;
    first = false;
  }
  out << "\n";
  for (const auto& r : records) {
    const auto& d = r.delay;
    out << fmt::format("{:.3f},{},{},{:.3f},{:.3f},{:.3f},{:.3f},{:.3f},{:.3f},{},{},{},{},{},{:.3f},{},{},{:.3f}\n",
                       r.capture_ts, ToInt(r.stream), FrameTypeName(r.type), d.d_encode,
                       d.d_pacer, d.d_trans, d.d_jitter, d.d_decode, d.d_e2e,
                       r.rendered ? 1 : 0, r.stalled ? 1 : 0, r.frame_id, r.size_bits,
                       r.qp_index, d.d_other, r.decodable ? 1 : 0, r.degraded ? 1 : 0,
                       r.render_ts);
  }
}

namespace {

// Reads the header of a schema'd CSV, skipping `#` lines, and maps column
// names to positions. Throws SchemaError naming the missing columns.
template <size_t N>
std::unordered_map<std::string, size_t> ReadHeader(std::istream& in,
                                                   const char* const (&required)[N],
                                                   int& line_no) {
  std::string line;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    std::unordered_map<std::string, size_t> pos;
    const auto names = SplitCsvLine(line);
    for (size_t i = 0; i < names.size(); ++i) pos[names[i]] = i;
    std::vector<std::string> missing;
    for (const char* c : required) {
      if (!pos.count(c)) missing.emplace_back(c);
    }
    if (!missing.empty()) {
      std::string list;
      for (const auto& m : missing) list += (list.empty() ? "" : ", ") + m;
      throw SchemaError("missing columns: " + list);
    }
    return pos;
  }
  throw SchemaError("no header row");
}

double Num(const std::vector<std::string>& cells, size_t i, int line_no) {
  if (i >= cells.size()) throw ParseError("short row", line_no);
  try {
    size_t used = 0;
    const double v = std::stod(cells[i], &used);
    if (used != cells[i].size()) throw ParseError("malformed number", line_no);
    return v;
  } catch (const std::logic_error&) {
    throw ParseError("malformed number", line_no);
  }
}

}  // namespace

std::vector<FrameRecord> ReadFramesCsv(std::istream& in) {
  int line_no = 0;
  const auto pos = ReadHeader(in, kFrameColumns, line_no);
  auto at = [&](const char* name) { return pos.at(name); };
  std::vector<FrameRecord> out;
  std::string line;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const auto c = SplitCsvLine(line);
    FrameRecord r;
    r.capture_ts = Num(c, at("capture_ts"), line_no);
    r.stream = Num(c, at("stream_id"), line_no) == 2 ? StreamId::kStream2 : StreamId::kStream1;
    if (at("frame_type") >= c.size()) throw ParseError("short row", line_no);
    r.type = c[at("frame_type")] == "KEY" ? FrameType::kKey : FrameType::kDelta;
    r.delay.d_encode = Num(c, at("d_encode"), line_no);
    r.delay.d_pacer = Num(c, at("d_pacer"), line_no);
    r.delay.d_trans = Num(c, at("d_trans"), line_no);
    r.delay.d_jitter = Num(c, at("d_jitter"), line_no);
    r.delay.d_decode = Num(c, at("d_decode"), line_no);
    r.delay.d_e2e = Num(c, at("d_e2e"), line_no);
    r.delay.d_other = Num(c, at("d_other"), line_no);
    r.rendered = Num(c, at("rendered"), line_no) != 0.0;
    r.stalled = Num(c, at("stalled"), line_no) != 0.0;
    r.frame_id = static_cast<int64_t>(Num(c, at("frame_id"), line_no));
    r.size_bits = static_cast<int64_t>(Num(c, at("size_bits"), line_no));
    r.qp_index = static_cast<int>(Num(c, at("qp_index"), line_no));
    r.decodable = Num(c, at("decodable"), line_no) != 0.0;
    r.degraded = Num(c, at("degraded"), line_no) != 0.0;
    r.render_ts = Num(c, at("render_ts"), line_no);
    out.push_back(r);
  }
  return out;
}

QoeReport BuildQoeReport(const std::string& run,
                         const std::vector<FrameRecord>& records,
                         const NetworkSummary& net, double duration_ms,
                         int stall_fps, PsnrProxyConfig psnr) {
  QoeReport rep;
  rep.run = run;
  std::vector<double> trans, pacer, jitter, e2e, render, qp, quality;
  for (const auto& r : records) {
    if (!r.rendered) continue;
    trans.push_back(r.delay.d_trans);
    pacer.push_back(r.delay.d_pacer);
    jitter.push_back(r.delay.d_jitter);
    e2e.push_back(r.delay.d_e2e);
    render.push_back(r.render_ts);
    qp.push_back(r.qp_index);
    quality.push_back(psnr.anchor_db - PsnrProxy(r.qp_index) -
                      (r.degraded ? psnr.degraded_penalty_db : 0.0));
  }
  rep.rendered = static_cast<int64_t>(e2e.size());
  if (duration_ms > 0.0) {
    const auto counts = RenderedPerWindow(render, duration_ms);
    int64_t total = 0, stalled = 0;
    for (int c : counts) {
      total += c;
      if (c < stall_fps) ++stalled;
    }
    rep.fps = static_cast<double>(total) / counts.size();
    rep.stall_rate_pct = 100.0 * stalled / counts.size();
  }
  rep.d_trans = Mean(trans);
  rep.d_pacer = Mean(pacer);
  rep.d_jitter = Mean(jitter);
  rep.e2e_mean = Mean(e2e);
  rep.e2e_p97 = e2e.empty() ? 0.0 : Percentile(e2e, 97.0);
  rep.mean_qp = Mean(qp);
  rep.psnr_proxy_db = Mean(quality);
  rep.rtt = net.mean_rtt_ms;
  rep.loss_pct = net.packets_sent > 0 ? 100.0 * net.packets_lost / net.packets_sent : 0.0;
  return rep;
}

void WriteReportCsv(std::ostream& out, const std::vector<QoeReport>& rows,
                    const std::string& preamble) {
  if (!preamble.empty()) out << preamble << "\n";
  bool first = true;
  for (const char* c : kReportColumns) {
    out << (first ? "" : ",") << c;
    first = false;
  }
  out << "\n";
  for (const auto& r : rows) {
    out << fmt::format("{},{:.3f},{:.3f},{:.3f},{:.3f},{:.3f},{:.3f},{:.4f},{:.3f},{:.3f},{:.3f},{:.3f},{}\n",
                       r.run, r.fps, r.stall_rate_pct, r.d_trans, r.d_pacer, r.d_jitter,
                       r.rtt, r.loss_pct, r.e2e_mean, r.e2e_p97, r.psnr_proxy_db,
                       r.mean_qp, r.rendered);
  }
}

std::vector<QoeReport> ReadReportCsv(std::istream& in) {
  int line_no = 0;
  const auto pos = ReadHeader(in, kReportColumns, line_no);
  auto at = [&](const char* name) { return pos.at(name); };
  std::vector<QoeReport> out;
  std::string line;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const auto c = SplitCsvLine(line);
    QoeReport r;
    if (at("run") >= c.size()) throw ParseError("short row", line_no);
    r.run = c[at("run")];
    r.fps = Num(c, at("fps"), line_no);
    r.stall_rate_pct = Num(c, at("stall_rate_pct"), line_no);
    r.d_trans = Num(c, at("d_trans"), line_no);
    r.d_pacer = Num(c, at("d_pacer"), line_no);
    r.d_jitter = Num(c, at("d_jitter"), line_no);
    r.rtt = Num(c, at("rtt"), line_no);
    r.loss_pct = Num(c, at("loss_pct"), line_no);
    r.e2e_mean = Num(c, at("e2e_mean"), line_no);
    r.e2e_p97 = Num(c, at("e2e_p97"), line_no);
    r.psnr_proxy_db = Num(c, at("psnr_proxy_db"), line_no);
    r.mean_qp = Num(c, at("mean_qp"), line_no);
    r.rendered = static_cast<int64_t>(Num(c, at("rendered"), line_no));
    out.push_back(r);
  }
  return out;
}

}  // namespace pdstream
