#include "coevolve/coevolve_state.hpp"

#include <algorithm>
#include <string>

#include "coevolve/errors.hpp"

namespace coevolve {

DynamicState DynamicState::zeros(std::size_t num_users, std::size_t num_items, int k) {
  DynamicState s;
  s.user = EmbeddingMatrix::Zero(static_cast<Eigen::Index>(num_users), k);
  s.item = EmbeddingMatrix::Zero(static_cast<Eigen::Index>(num_items), k);
  s.last_user_time = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(num_users));
  s.last_item_time = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(num_items));
  return s;
}

Eigen::VectorXd activate(const Eigen::VectorXd& pre, Activation act) {
  if (act == Activation::kTanh) return pre.array().tanh().matrix();
  return (1.0 / (1.0 + (-pre.array()).exp())).matrix();
}

Eigen::VectorXd activation_slope(const Eigen::VectorXd& out, Activation act) {
  if (act == Activation::kTanh) return (1.0 - out.array().square()).matrix();
  return (out.array() * (1.0 - out.array())).matrix();
}

Eigen::VectorXd embedding_update(const Eigen::VectorXd& drift, const Eigen::MatrixXd& self_w,
                                 const Eigen::MatrixXd& cross_w, const Eigen::MatrixXd& context_w,
                                 Activation act, double dt, const Eigen::VectorXd& self,
                                 const Eigen::VectorXd& other, const Eigen::VectorXd& context) {
  Eigen::VectorXd pre = drift * dt;
  pre.noalias() += self_w * self;
  pre.noalias() += cross_w * other;
  if (context.size() > 0) pre.noalias() += context_w * context;
  return activate(pre, act);
}

void apply_event(DynamicState& state, const ModelParams& params, const Event& e) {
  const auto u = static_cast<Eigen::Index>(e.user);
  const auto i = static_cast<Eigen::Index>(e.item);
  if (u >= state.user.rows() || i >= state.item.rows())
    throw DataError("event references an entity outside the state");
  const double last_u = state.last_user_time[u];
  const double last_i = state.last_item_time[i];
  if (e.time < last_u || e.time < last_i)
    throw DataError("event at t=" + std::to_string(e.time) +
                    " precedes the last update of its user or item");
  if (static_cast<int>(e.context.size()) != params.d())
    throw DataError("event context dimension does not match the model");

  const Eigen::VectorXd f_old = state.user.row(u).transpose();
  const Eigen::VectorXd g_old = state.item.row(i).transpose();
  const WeightBlocks& w = params.weights;
  state.user.row(u) = embedding_update(w.w1, w.w2, w.w3, w.w4, params.activation, e.time - last_u,
                                       f_old, g_old, e.context).transpose();
  state.item.row(i) = embedding_update(w.v1, w.v2, w.v3, w.v4, params.activation, e.time - last_i,
                                       g_old, f_old, e.context).transpose();
  state.last_user_time[u] = e.time;
  state.last_item_time[i] = e.time;
  state.frontier = std::max(state.frontier, e.time);
}

EmbeddingTimeline::EmbeddingTimeline(std::size_t num_entities, int k)
    : history_(num_entities), k_(k) {}

void EmbeddingTimeline::record(std::size_t entity, double time, const Eigen::VectorXd& value) {
  auto& h = history_.at(entity);
  if (!h.empty()) {
    if (time < h.back().time) throw DataError("timeline snapshots must be recorded in time order");
    if (time == h.back().time) {
      h.back().value = value;
      return;
    }
  }
  h.push_back({time, value});
}

Eigen::VectorXd EmbeddingTimeline::at(std::size_t entity, double t) const {
  const auto& h = history_.at(entity);
  auto it = std::upper_bound(h.begin(), h.end(), t,
                             [](double x, const Snapshot& s) { return x < s.time; });
  if (it == h.begin()) return Eigen::VectorXd::Zero(k_);
  return std::prev(it)->value;
}

Eigen::VectorXd EmbeddingTimeline::before(std::size_t entity, double t) const {
  const auto& h = history_.at(entity);
  auto it = std::lower_bound(h.begin(), h.end(), t,
                             [](const Snapshot& s, double x) { return s.time < x; });
  if (it == h.begin()) return Eigen::VectorXd::Zero(k_);
  return std::prev(it)->value;
}

std::size_t EmbeddingTimeline::total_snapshots() const {
  std::size_t n = 0;
  for (const auto& h : history_) n += h.size();
  return n;
}

ReplayResult replay(const EventLog& log, const ModelParams& params) {
  ReplayResult r{DynamicState::zeros(log.num_users(), log.num_items(), params.k()),
                 {EmbeddingTimeline(log.num_users(), params.k()),
                  EmbeddingTimeline(log.num_items(), params.k())}};
  for (const Event& e : log.events()) {
    apply_event(r.state, params, e);
    r.timelines.users.record(e.user, e.time, r.state.user.row(static_cast<Eigen::Index>(e.user)).transpose());
    r.timelines.items.record(e.item, e.time, r.state.item.row(static_cast<Eigen::Index>(e.item)).transpose());
  }
  return r;
}

void replay_into(DynamicState& state, const ModelParams& params, std::span<const Event> events) {
  for (const Event& e : events) apply_event(state, params, e);
}

}  // namespace coevolve
