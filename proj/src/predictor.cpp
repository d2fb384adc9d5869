#include "coevolve/predictor.hpp"

#include <algorithm>
#include <numeric>
#include <string>

#include "coevolve/errors.hpp"
#include "coevolve/point_process.hpp"

namespace coevolve {

std::size_t PredictionRanking::competition_rank(ItemId item) const {
  const double mine = log_scores.at(item);
  std::size_t better = 0;
  for (double s : log_scores)
    if (s > mine) ++better;
  return better + 1;
}

PredictionRanking rank_items(const DynamicState& state, UserId u, double t) {
  if (t < state.frontier)
    throw DataError("query time " + std::to_string(t) + " precedes the replay frontier " +
                    std::to_string(state.frontier));
  if (u >= static_cast<std::size_t>(state.user.rows())) throw DataError("query user out of range");

  const auto n = static_cast<std::size_t>(state.item.rows());
  PredictionRanking r;
  r.user = u;
  r.time = t;
  r.scores.resize(n);
  r.log_scores.resize(n);
  r.intensities.resize(n);
  const Eigen::VectorXd f = state.user.row(static_cast<Eigen::Index>(u)).transpose();
  for (ItemId i = 0; i < n; ++i) {
    const Compatibility c = compatibility(f, state.item.row(static_cast<Eigen::Index>(i)).transpose());
    const double t_prime = state.last_change(u, i);
    r.intensities[i] = intensity(c.alpha, t_prime, t);
    r.scores[i] = conditional_density(c.alpha, t_prime, t);
    r.log_scores[i] = log_conditional_density(c.log_alpha, t_prime, t);
  }
  r.order.resize(n);
  std::iota(r.order.begin(), r.order.end(), ItemId{0});
  std::stable_sort(r.order.begin(), r.order.end(), [&](ItemId a, ItemId b) {
    return r.log_scores[a] > r.log_scores[b];
  });
  r.rank_of.resize(n);
  for (std::size_t pos = 0; pos < n; ++pos) r.rank_of[r.order[pos]] = pos + 1;
  return r;
}

double predict_return_time(const DynamicState& state, UserId u, ItemId i, double t_now) {
  if (t_now < state.frontier) throw DataError("prediction time precedes the replay frontier");
  const Compatibility c = compatibility(state.user.row(static_cast<Eigen::Index>(u)).transpose(),
                                        state.item.row(static_cast<Eigen::Index>(i)).transpose());
  return expected_return_time(c.alpha, state.last_change(u, i));
}

}  // namespace coevolve
