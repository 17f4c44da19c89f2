#include "pdstream/allocator.h"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <omp.h>

namespace pdstream {
namespace {

constexpr double kTimeEps = 1e-9;

struct Candidate {
  bool valid = false;
  double delta_q = 0.0;
  double q_bar_prime = 0.0;
  double q_bar_single = 0.0;
  int q_index = 0;
  int f_prime = 0;
  int t_steps = 0;
  double T = 0.0;
  double b_prime = 0.0;
  double b_dprime = 0.0;
};

// Strict weak order on feasible candidates: smaller objective first, then the
// documented tie-break.
bool Better(const Candidate& a, const Candidate& b) {
  if (!b.valid) return a.valid;
  if (!a.valid) return false;
  if (a.delta_q != b.delta_q) return a.delta_q < b.delta_q;
  if (a.q_bar_prime != b.q_bar_prime) return a.q_bar_prime < b.q_bar_prime;
  if (a.f_prime != b.f_prime) return a.f_prime > b.f_prime;
  return a.T < b.T;
}

// Least bitrate overshoot, same tie-break.
bool LessViolating(const Candidate& a, const Candidate& b, double budget) {
  if (!b.valid) return a.valid;
  if (!a.valid) return false;
  const double va = a.b_prime + a.b_dprime - budget;
  const double vb = b.b_prime + b.b_dprime - budget;
  if (va != vb) return va < vb;
  return Better(a, b);
}

struct SearchState {
  Candidate best;
  Candidate least_violating;
  int64_t evaluated = 0;

  void Merge(const SearchState& other, double budget) {
    if (Better(other.best, best)) best = other.best;
    if (LessViolating(other.least_violating, least_violating, budget)) {
      least_violating = other.least_violating;
    }
    evaluated += other.evaluated;
  }
};

int MaxSteps(const AllocationRequest& req, int f_prime) {
  return static_cast<int>(std::floor(req.TMax() * f_prime + kTimeEps));
}

int MinSteps(const AllocationRequest& req, int f_prime) {
  return std::max(1, static_cast<int>(std::ceil(req.t_min * f_prime - kTimeEps)));
}

// All candidates sharing one reduced frame rate.
void SearchFramerate(const AllocationRequest& req, int f_prime,
                     SearchState& state) {
  const double f = req.f;
  const int hi = MaxSteps(req, f_prime);
  for (int m = MinSteps(req, f_prime); m <= hi; ++m) {
    const double T = static_cast<double>(m) / f_prime;
    const auto q_single = ExpectedSingleStreamQuantizer(req.b, f, T, req.R1,
                                                        req.models.c_bar, req.models.rq);
    for (int qi = 0; qi < QuantTable::kSize; ++qi) {
      Candidate c;
      c.valid = true;
      c.q_index = qi;
      c.q_bar_prime = req.table.step(qi);
      c.f_prime = f_prime;
      c.t_steps = m;
      c.T = T;
      c.b_prime = ModelStream1Rate(f, f_prime, T, c.q_bar_prime, req.R1, req.models);
      c.b_dprime = ModelStream2Rate(f, T, c.q_bar_prime, req.q1, req.models.c1_dprime,
                                    req.models.c_bar, req.models.rq);
      ++state.evaluated;
      if (LessViolating(c, state.least_violating, req.b)) {
        c.q_bar_single = q_single.value_or(0.0);
        c.delta_q = c.q_bar_prime - c.q_bar_single;
        state.least_violating = c;
      }
      if (!q_single) continue;
      if (c.b_prime + c.b_dprime <= req.b) {
        c.q_bar_single = *q_single;
        c.delta_q = c.q_bar_prime - *q_single;
        if (Better(c, state.best)) state.best = c;
        // Rates fall with q, so larger steps only worsen the objective.
        break;
      }
    }
  }
}

Allocation Finish(const AllocationRequest& req, const SearchState& state) {
  Allocation out;
  out.candidates = state.evaluated;
  const Candidate& c = state.best.valid ? state.best : state.least_violating;
  out.feasible = state.best.valid;
  if (!c.valid) return out;
  out.f_prime = c.f_prime;
  out.t_steps = c.t_steps;
  out.T = c.T;
  out.q_index = c.q_index;
  out.q_bar_prime = c.q_bar_prime;
  out.q_bar_single = c.q_bar_single;
  out.delta_q = c.delta_q;
  out.delta_qp_index =
      c.q_bar_single > 0.0
          ? req.table.ContinuousIndex(c.q_bar_prime) - req.table.ContinuousIndex(c.q_bar_single)
          : 0.0;
  out.b_prime_model = c.b_prime;
  out.b_dprime_model = c.b_dprime;
  out.b_prime = c.b_prime;
  out.b_dprime = c.b_dprime;
  const double sum = c.b_prime + c.b_dprime;
  if (out.feasible && sum < req.b && sum > 0.0) {
    const double scale = req.b / sum;
    out.b_prime = c.b_prime * scale;
    out.b_dprime = req.b - out.b_prime;
    out.scaled = true;
  }
  return out;
}

void CheckRequest(const AllocationRequest& req) {
  if (!(req.b > 0.0)) throw std::domain_error("target bitrate must be positive");
  if (!(req.R1 > 0.0)) throw std::domain_error("keyframe size must be positive");
  if (!(req.f_k > 0.0)) throw std::domain_error("keyframe rate must be positive");
  if (req.f < 1) throw std::domain_error("frame rate must be >= 1");
}

}  // namespace

double RateModels::InflatedComplexity(double gap) const {
  if (gap <= 1.0) return c_bar;
  const double s1 = sad_bar;
  const double sg = std::min(s1 * std::pow(gap, rho), std::max(sad_cap, s1));
  const double ratio = SatdFromSad(sg, sad_cubic) / SatdFromSad(s1, sad_cubic);
  return c_bar * std::max(1.0, ratio);
}

double ModelSingleStreamRate(double f, double T, double q_bar, double c_bar,
                             double R1, const RqModel& rq) {
  if (T * f < 1.0 - kTimeEps) throw std::domain_error("unit shorter than one frame");
  return R1 / T + (T * f - 1.0) / T * RqRequiredBits(q_bar, c_bar, rq);
}

double ModelStream1Rate(double f, double f_prime, double T, double q_bar_prime,
                        double R1, const RateModels& models) {
  if (T * f_prime < 1.0 - kTimeEps) throw std::domain_error("unit shorter than one frame");
  const double c_prime = models.InflatedComplexity(f / f_prime);
  return R1 / T + (T * f_prime - 1.0) / T * RqRequiredBits(q_bar_prime, c_prime, models.rq);
}

double ModelStream2Rate(double f, double T, double q_bar_prime, double q1,
                        double c1_dprime, double c_bar, const RqModel& rq) {
  if (T * f < 1.0 - kTimeEps) throw std::domain_error("unit shorter than one frame");
  return RqRequiredBits(q1, c1_dprime, rq) / T +
         (T * f - 1.0) / T * RqRequiredBits(q_bar_prime, c_bar, rq);
}

std::optional<double> ExpectedSingleStreamQuantizer(double b, double f, double T,
                                                    double R1, double c_bar,
                                                    const RqModel& rq) {
  const double deltas = T * f - 1.0;
  if (deltas <= kTimeEps) return std::nullopt;
  const double per_frame = (b * T - R1) / deltas;
  if (!(per_frame > 0.0) || !(c_bar > 0.0)) return std::nullopt;
  return RqInvert(per_frame, c_bar, rq);
}

double CandidateBound(const AllocationRequest& request) {
  return 52.0 * request.f * request.f * request.TMax();
}

Allocation AllocateSerial(const AllocationRequest& request) {
  CheckRequest(request);
  SearchState state;
  for (int f_prime = 1; f_prime <= request.f; ++f_prime) {
    SearchFramerate(request, f_prime, state);
  }
  return Finish(request, state);
}

Allocation Allocate(const AllocationRequest& request) {
  CheckRequest(request);
  SearchState total;
#pragma omp parallel
  {
    SearchState local;
#pragma omp for schedule(dynamic) nowait
    for (int f_prime = 1; f_prime <= request.f; ++f_prime) {
      SearchFramerate(request, f_prime, local);
    }
#pragma omp critical(pdstream_allocate_merge)
    total.Merge(local, request.b);
  }
  return Finish(request, total);
}

Allocation Reallocate(const AllocationRequest& original, double new_b,
                      double encoded_bits_so_far, double elapsed_s) {
  AllocationRequest req = original;
  req.b = new_b;
  req.R1 = encoded_bits_so_far;
  req.t_min = std::max(original.t_min, elapsed_s);
  return Allocate(req);
}

}  // namespace pdstream
