#pragma once

#include <vector>

#include <Eigen/Dense>

#include "coevolve/coevolve_state.hpp"
#include "coevolve/event_store.hpp"

namespace coevolve {

// Inner products are clamped to this range before exponentiation.
inline constexpr double kCompatibilityClamp = 30.0;

// exp(f . g) with the clamp applied; `clamped` records whether it bit.
struct Compatibility {
  double log_alpha = 0.0;
  double alpha = 1.0;
  bool clamped = false;
};

Compatibility compatibility(const Eigen::Ref<const Eigen::VectorXd>& f,
                            const Eigen::Ref<const Eigen::VectorXd>& g);

// alpha * (t - t_prime). Throws NumericalError when t < t_prime.
double intensity(double alpha, double t_prime, double t);

// Rayleigh density on the interval since t_prime: alpha*D*exp(-alpha*D^2/2).
double conditional_density(double alpha, double t_prime, double t);

// log of conditional_density; -inf at zero lapse.
double log_conditional_density(double log_alpha, double t_prime, double t);

// Integral of alpha*(tau - t_prime) over [start, end], start >= t_prime.
double linear_intensity_integral(double alpha, double t_prime, double start, double end);

// t_prime + sqrt(pi / (2 alpha)): mean of the Rayleigh next-event time.
double expected_return_time(double alpha, double t_prime);

struct SurvivalSegment {
  double start;
  double end;
  double alpha;
  double t_prime;  // last change of the dimension at or before `start`
  double contribution;
};

struct SurvivalBreakdown {
  std::vector<SurvivalSegment> segments;
  double total = 0.0;
  int clamp_events = 0;
};

// Integral of the (u, i) intensity over [window_begin, window_end], split at
// relevant_times. Alpha on each segment comes from the post-update snapshots
// at the segment start; the lapse is measured from the last time u or i
// changed, which is the segment start except possibly for the first one.
SurvivalBreakdown survival_integral(const EventLog& log, const Timelines& timelines, UserId u,
                                    ItemId i, double window_begin, double window_end);

}  // namespace coevolve
