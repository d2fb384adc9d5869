#include "coevolve/point_process.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "coevolve/errors.hpp"

namespace coevolve {

Compatibility compatibility(const Eigen::Ref<const Eigen::VectorXd>& f,
                            const Eigen::Ref<const Eigen::VectorXd>& g) {
  const double dot = f.dot(g);
  if (!std::isfinite(dot)) throw NumericalError("non-finite inner product");
  Compatibility c;
  c.log_alpha = std::clamp(dot, -kCompatibilityClamp, kCompatibilityClamp);
  c.clamped = c.log_alpha != dot;
  c.alpha = std::exp(c.log_alpha);
  return c;
}

double intensity(double alpha, double t_prime, double t) {
  if (t < t_prime) throw NumericalError("intensity queried before its segment start");
  return alpha * (t - t_prime);
}

double conditional_density(double alpha, double t_prime, double t) {
  if (t < t_prime) throw NumericalError("density queried before its segment start");
  const double lapse = t - t_prime;
  return alpha * lapse * std::exp(-0.5 * alpha * lapse * lapse);
}

double log_conditional_density(double log_alpha, double t_prime, double t) {
  if (t < t_prime) throw NumericalError("density queried before its segment start");
  const double lapse = t - t_prime;
  if (lapse == 0.0) return -std::numeric_limits<double>::infinity();
  return log_alpha + std::log(lapse) - 0.5 * std::exp(log_alpha) * lapse * lapse;
}

double linear_intensity_integral(double alpha, double t_prime, double start, double end) {
  const double a = start - t_prime;
  const double b = end - t_prime;
  // (b^2 - a^2)/2 written to stay exact when a == 0
  return 0.5 * alpha * (b - a) * (b + a);
}

double expected_return_time(double alpha, double t_prime) {
  if (!(alpha > 0.0)) throw NumericalError("expected_return_time needs alpha > 0");
  return t_prime + std::sqrt(std::numbers::pi / (2.0 * alpha));
}

SurvivalBreakdown survival_integral(const EventLog& log, const Timelines& timelines, UserId u,
                                    ItemId i, double window_begin, double window_end) {
  SurvivalBreakdown out;
  if (window_end <= window_begin) return out;
  const std::vector<double> times = relevant_times(log, u, i, window_begin, window_end);
  for (std::size_t s = 0; s + 1 < times.size(); ++s) {
    const double start = times[s];
    const double end = times[s + 1];
    const Compatibility c = compatibility(timelines.users.at(u, start), timelines.items.at(i, start));
    if (c.clamped) ++out.clamp_events;
    const double t_prime = s == 0 ? last_change_time(log, u, i, start) : start;
    const double contribution = linear_intensity_integral(c.alpha, t_prime, start, end);
    out.segments.push_back({start, end, c.alpha, t_prime, contribution});
    out.total += contribution;
  }
  return out;
}

}  // namespace coevolve
