#ifndef PDSTREAM_ALLOCATOR_H_
#define PDSTREAM_ALLOCATOR_H_

#include <cstdint>
#include <limits>
#include <optional>

#include "pdstream/encoder.h"

namespace pdstream {

// Everything the stream-level rate models need from the encoder side.
struct RateModels {
  RqModel rq;
  // SAD -> SATD map used to inflate complexity at reduced frame rates. The
  // default is the identity, which reduces inflation to gap^rho.
  SadCubicModel sad_cubic{{0.0, 1.0, 0.0, 0.0}, 0.0, false};
  double c_bar = 1.0;      // predicted delta complexity at the native rate
  double c1_dprime = 1.0;  // stream 2's stand-in for the keyframe
  double sad_bar = 1.0;    // recent gap-1 SAD
  double rho = 0.75;
  double sad_cap = std::numeric_limits<double>::infinity();

  // Delta complexity when frames are `gap` native intervals apart. Anchored
  // so that gap = 1 returns c_bar exactly.
  double InflatedComplexity(double gap) const;
};

// Original single stream over a dual-stream unit of T seconds:
// R1 / T + (T f - 1) / T * R(q_bar, c_bar). Throws std::domain_error when
// T f < 1.
double ModelSingleStreamRate(double f, double T, double q_bar, double c_bar,
                             double R1, const RqModel& rq);

// Stream 1 at the reduced rate f_prime, with complexity inflated by the
// larger inter-frame gap f / f_prime.
double ModelStream1Rate(double f, double f_prime, double T, double q_bar_prime,
                        double R1, const RateModels& models);

// Stream 2: the keyframe replaced by a delta at the keyframe's quantizer q1,
// then native-rate deltas at q_bar_prime.
double ModelStream2Rate(double f, double T, double q_bar_prime, double q1,
                        double c1_dprime, double c_bar, const RqModel& rq);

// Expected delta quantizer of the single stream when it must also carry the
// R1-bit keyframe within T. Empty when the unit has no delta frames (T f <= 1)
// or the keyframe alone exhausts the budget.
std::optional<double> ExpectedSingleStreamQuantizer(double b, double f, double T,
                                                    double R1, double c_bar,
                                                    const RqModel& rq);

struct AllocationRequest {
  double b = 0.0;    // overall target, bps
  int f = 30;        // native frame rate
  double f_k = 0.5;  // average keyframe rate, Hz
  double R1 = 0.0;   // keyframe bits (or bits spent so far on re-allocation)
  double q1 = 1.0;   // keyframe quantizer step
  double eta = 5.0;
  // Admissible unit durations, seconds. t_max defaults to 1 / (eta f_k).
  double t_min = 0.0;
  std::optional<double> t_max;
  RateModels models;
  QuantTable table;

  double TMax() const { return t_max ? *t_max : 1.0 / (eta * f_k); }
};

struct Allocation {
  double b_prime = 0.0;
  double b_dprime = 0.0;
  // Model rates before the proportional scale-up.
  double b_prime_model = 0.0;
  double b_dprime_model = 0.0;
  int f_prime = 0;
  int t_steps = 0;  // T = t_steps / f_prime
  double T = 0.0;
  int q_index = 0;
  double q_bar_prime = 0.0;
  double q_bar_single = 0.0;
  double delta_q = 0.0;           // quantizer step units
  double delta_qp_index = 0.0;    // QP index units
  bool scaled = false;
  bool feasible = false;
  int64_t candidates = 0;
};

// Exhaustive traversal over (f', T, q_bar'), parallel over f'. Ties resolve
// to the smaller q_bar', then the larger f', then the smaller T, so the
// result does not depend on evaluation order. When nothing is feasible the
// least-violating candidate is returned with feasible = false.
Allocation Allocate(const AllocationRequest& request);

// Single-threaded reference implementation of Allocate.
Allocation AllocateSerial(const AllocationRequest& request);

// Re-solves after a target change mid-unit: R1 becomes the bits spent so far
// and T may not end before `elapsed_s`.
Allocation Reallocate(const AllocationRequest& original, double new_b,
                      double encoded_bits_so_far, double elapsed_s);

// Upper bound on candidates: 52 * f * f / (eta f_k).
double CandidateBound(const AllocationRequest& request);

}  // namespace pdstream

#endif  // PDSTREAM_ALLOCATOR_H_
