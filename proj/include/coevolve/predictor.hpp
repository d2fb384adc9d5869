#pragma once

#include <cstddef>
#include <vector>

#include "coevolve/coevolve_state.hpp"
#include "coevolve/event_store.hpp"

namespace coevolve {

// Items scored for a (user, time) query by their conditional density.
struct PredictionRanking {
  UserId user = 0;
  double time = 0.0;
  std::vector<double> scores;        // density p^{u,i}(t) per item
  std::vector<double> log_scores;    // log density, used for ordering
  std::vector<double> intensities;   // lambda^{u,i}(t), diagnostics only
  std::vector<ItemId> order;         // items best first; ties by ascending id
  std::vector<std::size_t> rank_of;  // rank_of[i] in 1..n

  // 1 + number of items with a strictly larger score (ties share the best rank).
  std::size_t competition_rank(ItemId item) const;
};

// Scores every item for user u at time t from the state replayed up to t.
// Throws DataError when t precedes the state's frontier.
PredictionRanking rank_items(const DynamicState& state, UserId u, double t);

// t' + sqrt(pi / (2 alpha)) for the (u, i) dimension at the current state.
double predict_return_time(const DynamicState& state, UserId u, ItemId i, double t_now);

}  // namespace coevolve
