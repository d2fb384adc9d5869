#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "coevolve/event_store.hpp"
#include "coevolve/params.hpp"

namespace coevolve {

using EmbeddingMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Current piecewise-constant embeddings: row u of `user` is f_u, row i of
// `item` is g_i. Entities without events hold zeros and last time 0.
struct DynamicState {
  EmbeddingMatrix user;
  EmbeddingMatrix item;
  Eigen::VectorXd last_user_time;
  Eigen::VectorXd last_item_time;
  double frontier = 0.0;  // time of the latest applied event

  static DynamicState zeros(std::size_t num_users, std::size_t num_items, int k);

  int k() const { return static_cast<int>(user.cols()); }
  // Last time either embedding of the (u, i) dimension changed.
  double last_change(UserId u, ItemId i) const {
    return std::max(last_user_time[static_cast<Eigen::Index>(u)],
                    last_item_time[static_cast<Eigen::Index>(i)]);
  }
};

Eigen::VectorXd activate(const Eigen::VectorXd& pre, Activation act);

// sigma'(z) expressed through the activation output.
Eigen::VectorXd activation_slope(const Eigen::VectorXd& out, Activation act);

// sigma(W1*dt + W2*self + W3*other + W4*q). Pass `drift`, `self_w`, `cross_w`,
// `context_w` from either the W or the V family.
Eigen::VectorXd embedding_update(const Eigen::VectorXd& drift, const Eigen::MatrixXd& self_w,
                                 const Eigen::MatrixXd& cross_w, const Eigen::MatrixXd& context_w,
                                 Activation act, double dt, const Eigen::VectorXd& self,
                                 const Eigen::VectorXd& other, const Eigen::VectorXd& context);

// Applies one interaction: both updates read the pre-event embeddings.
// Throws DataError if the event precedes either entity's last update.
void apply_event(DynamicState& state, const ModelParams& params, const Event& e);

// Append-only per-entity history of post-event embeddings. Several events of
// one entity at the same instant collapse into one snapshot holding the
// value after the last of them.
class EmbeddingTimeline {
 public:
  struct Snapshot {
    double time;
    Eigen::VectorXd value;
  };

  EmbeddingTimeline() = default;
  EmbeddingTimeline(std::size_t num_entities, int k);

  void record(std::size_t entity, double time, const Eigen::VectorXd& value);

  // Value in force at t (right-continuous: an event at exactly t is included).
  Eigen::VectorXd at(std::size_t entity, double t) const;
  // Value just before t (events at exactly t excluded).
  Eigen::VectorXd before(std::size_t entity, double t) const;

  std::span<const Snapshot> snapshots(std::size_t entity) const { return history_[entity]; }
  std::size_t num_entities() const { return history_.size(); }
  std::size_t total_snapshots() const;
  int k() const { return k_; }

 private:
  std::vector<std::vector<Snapshot>> history_;
  int k_ = 0;
};

// Free-function form of EmbeddingTimeline::at.
inline Eigen::VectorXd embedding_at(const EmbeddingTimeline& timeline, std::size_t entity,
                                    double t) {
  return timeline.at(entity, t);
}

struct Timelines {
  EmbeddingTimeline users;
  EmbeddingTimeline items;
};

struct ReplayResult {
  DynamicState state;
  Timelines timelines;
};

// Applies every event of the log in order, recording each post-event snapshot.
ReplayResult replay(const EventLog& log, const ModelParams& params);

// Continues from `state` with the given events (no timeline bookkeeping).
void replay_into(DynamicState& state, const ModelParams& params, std::span<const Event> events);

}  // namespace coevolve
