#include "coevolve/grad_engine.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "coevolve/point_process.hpp"

namespace coevolve {

std::string_view to_string(NodeKind kind) {
  switch (kind) {
    case NodeKind::kUserEntry: return "user-entry";
    case NodeKind::kItemEntry: return "item-entry";
    case NodeKind::kUserUpdate: return "user-update";
    case NodeKind::kItemUpdate: return "item-update";
    case NodeKind::kLogIntensity: return "log-intensity";
    case NodeKind::kSurvivalSegment: return "survival-segment";
  }
  return "unknown";
}

namespace {

CompGraph::Node make_node(NodeKind kind, int self = -1, int other = -1, int event = -1) {
  CompGraph::Node n;
  n.kind = kind;
  n.self = self;
  n.other = other;
  n.event = event;
  return n;
}

}  // namespace

std::size_t CompGraph::count(NodeKind kind) const {
  return static_cast<std::size_t>(
      std::count_if(nodes_.begin(), nodes_.end(), [&](const Node& n) { return n.kind == kind; }));
}

int CompGraph::add_node(Node node) {
  nodes_.push_back(std::move(node));
  return static_cast<int>(nodes_.size()) - 1;
}

CompGraph::Track& CompGraph::user_track(UserId u) {
  auto [it, inserted] = users_.try_emplace(u);
  if (inserted) {
    const auto row = static_cast<Eigen::Index>(u);
    Node entry = make_node(NodeKind::kUserEntry);
    entry.value = entry_->user.row(row).transpose();
    it->second.node = it->second.entry_node = add_node(std::move(entry));
    it->second.last_time = it->second.entry_time = entry_->last_user_time[row];
  }
  return it->second;
}

CompGraph::Track& CompGraph::item_track(ItemId i) {
  auto [it, inserted] = items_.try_emplace(i);
  if (inserted) {
    const auto row = static_cast<Eigen::Index>(i);
    Node entry = make_node(NodeKind::kItemEntry);
    entry.value = entry_->item.row(row).transpose();
    it->second.node = it->second.entry_node = add_node(std::move(entry));
    it->second.last_time = it->second.entry_time = entry_->last_item_time[row];
  }
  return it->second;
}

void CompGraph::add_term(NodeKind kind, int user_node, int item_node, double scalar,
                         double weight) {
  const Compatibility c = compatibility(nodes_[static_cast<std::size_t>(user_node)].value,
                                        nodes_[static_cast<std::size_t>(item_node)].value);
  if (c.clamped) ++stats_.clamp_events;
  Node term = make_node(kind, user_node, item_node);
  term.scalar = scalar;
  term.weight = weight;
  term.log_alpha = c.log_alpha;
  term.alpha = c.alpha;
  term.clamped = c.clamped;
  add_node(std::move(term));
}

void CompGraph::add_event(std::size_t j) {
  const Event& e = events_[j];
  Track& ut = user_track(e.user);
  Track& it = item_track(e.item);
  if (e.time < ut.last_time || e.time < it.last_time)
    throw DataError("window event precedes the last update of its user or item");

  double lapse = e.time - std::max(ut.last_time, it.last_time);
  if (lapse <= 0.0) {
    if (tie_policy_ == TiePolicy::kReject)
      throw DegenerateEventError("zero intensity at observed event (" + std::to_string(e.user) +
                                 ", " + std::to_string(e.item) + ", t=" + std::to_string(e.time) +
                                 ")");
    lapse = kTieEpsilon;
    ++stats_.tie_events;
  }
  add_term(NodeKind::kLogIntensity, ut.node, it.node, lapse, 1.0);

  const WeightBlocks& w = params_copy_.weights;
  const Eigen::VectorXd& f_old = nodes_[static_cast<std::size_t>(ut.node)].value;
  const Eigen::VectorXd& g_old = nodes_[static_cast<std::size_t>(it.node)].value;

  Node user_up = make_node(NodeKind::kUserUpdate, ut.node, it.node, static_cast<int>(j));
  user_up.scalar = e.time - ut.last_time;
  user_up.value = embedding_update(w.w1, w.w2, w.w3, w.w4, params_copy_.activation,
                                   user_up.scalar, f_old, g_old, e.context);
  Node item_up = make_node(NodeKind::kItemUpdate, it.node, ut.node, static_cast<int>(j));
  item_up.scalar = e.time - it.last_time;
  item_up.value = embedding_update(w.v1, w.v2, w.v3, w.v4, params_copy_.activation,
                                   item_up.scalar, g_old, f_old, e.context);
  if (!user_up.value.allFinite()) throw NumericalError("non-finite value in user-update node");
  if (!item_up.value.allFinite()) throw NumericalError("non-finite value in item-update node");

  ut.node = add_node(std::move(user_up));
  it.node = add_node(std::move(item_up));
  ut.last_time = e.time;
  it.last_time = e.time;
  ut.history.emplace_back(e.time, ut.node);
  it.history.emplace_back(e.time, it.node);
}

void CompGraph::add_survival(const SurvivalDim& dim) {
  const Track& ut = user_track(dim.user);
  const Track& it = item_track(dim.item);

  // Two cursors over the in-window histories; before any of them the entry
  // embedding and pre-window update time are in force.
  int user_node = ut.entry_node;
  int item_node = it.entry_node;
  double user_last = ut.entry_time;
  double item_last = it.entry_time;
  std::size_t ucur = 0;
  std::size_t icur = 0;
  double start = span_begin_;
  while (start < span_end_) {
    while (ucur < ut.history.size() && ut.history[ucur].first <= start) {
      user_node = ut.history[ucur].second;
      user_last = ut.history[ucur].first;
      ++ucur;
    }
    while (icur < it.history.size() && it.history[icur].first <= start) {
      item_node = it.history[icur].second;
      item_last = it.history[icur].first;
      ++icur;
    }
    double end = span_end_;
    if (ucur < ut.history.size()) end = std::min(end, ut.history[ucur].first);
    if (icur < it.history.size()) end = std::min(end, it.history[icur].first);
    const double t_prime = std::max(user_last, item_last);
    add_term(NodeKind::kSurvivalSegment, user_node, item_node,
             linear_intensity_integral(1.0, t_prime, start, end), dim.weight);
    start = end;
  }
}

LossBreakdown CompGraph::loss() const {
  LossBreakdown out;
  for (const Node& n : nodes_) {
    if (n.kind == NodeKind::kLogIntensity) {
      out.event_term -= n.weight * (n.log_alpha + std::log(n.scalar));
    } else if (n.kind == NodeKind::kSurvivalSegment) {
      out.survival_term += n.weight * n.scalar * n.alpha;
    }
  }
  out.total = out.event_term + out.survival_term;
  return out;
}

void CompGraph::write_exit_state(DynamicState& state) const {
  for (const auto& [u, t] : users_) {
    if (t.history.empty()) continue;
    const auto row = static_cast<Eigen::Index>(u);
    state.user.row(row) = nodes_[static_cast<std::size_t>(t.node)].value.transpose();
    state.last_user_time[row] = t.last_time;
    state.frontier = std::max(state.frontier, t.last_time);
  }
  for (const auto& [i, t] : items_) {
    if (t.history.empty()) continue;
    const auto row = static_cast<Eigen::Index>(i);
    state.item.row(row) = nodes_[static_cast<std::size_t>(t.node)].value.transpose();
    state.last_item_time[row] = t.last_time;
  }
}

CompGraph::Gradient CompGraph::backward() const {
  const WeightBlocks& w = params_copy_.weights;
  const int k = w.k();
  Gradient out{loss(), WeightBlocks::zeros(k, w.d())};
  if (!std::isfinite(out.loss.total)) throw NumericalError("non-finite window loss");

  std::vector<Eigen::VectorXd> adj(nodes_.size());
  for (std::size_t n = 0; n < nodes_.size(); ++n) {
    if (nodes_[n].value.size() > 0) adj[n] = Eigen::VectorXd::Zero(k);
  }

  for (std::size_t n = nodes_.size(); n-- > 0;) {
    const Node& node = nodes_[n];
    switch (node.kind) {
      case NodeKind::kUserEntry:
      case NodeKind::kItemEntry:
        break;
      case NodeKind::kLogIntensity:
      case NodeKind::kSurvivalSegment: {
        if (node.clamped) break;
        // d(term)/d(f.g)
        const double scale = node.kind == NodeKind::kLogIntensity
                                 ? -node.weight
                                 : node.weight * node.scalar * node.alpha;
        const auto a = static_cast<std::size_t>(node.self);
        const auto b = static_cast<std::size_t>(node.other);
        adj[a].noalias() += scale * nodes_[b].value;
        adj[b].noalias() += scale * nodes_[a].value;
        if (!std::isfinite(scale))
          throw NumericalError("non-finite gradient at " + std::string(to_string(node.kind)) +
                               " node");
        break;
      }
      case NodeKind::kUserUpdate:
      case NodeKind::kItemUpdate: {
        const bool is_user = node.kind == NodeKind::kUserUpdate;
        const Eigen::VectorXd dz =
            adj[n].cwiseProduct(activation_slope(node.value, params_copy_.activation));
        if (!dz.allFinite())
          throw NumericalError("non-finite gradient at " + std::string(to_string(node.kind)) +
                               " node");
        const auto self = static_cast<std::size_t>(node.self);
        const auto other = static_cast<std::size_t>(node.other);
        const Eigen::VectorXd& context = events_[static_cast<std::size_t>(node.event)].context;
        Eigen::VectorXd& g1 = is_user ? out.grads.w1 : out.grads.v1;
        Eigen::MatrixXd& g2 = is_user ? out.grads.w2 : out.grads.v2;
        Eigen::MatrixXd& g3 = is_user ? out.grads.w3 : out.grads.v3;
        Eigen::MatrixXd& g4 = is_user ? out.grads.w4 : out.grads.v4;
        const Eigen::MatrixXd& m2 = is_user ? w.w2 : w.v2;
        const Eigen::MatrixXd& m3 = is_user ? w.w3 : w.v3;
        g1.noalias() += node.scalar * dz;
        g2.noalias() += dz * nodes_[self].value.transpose();
        g3.noalias() += dz * nodes_[other].value.transpose();
        if (context.size() > 0) g4.noalias() += dz * context.transpose();
        adj[self].noalias() += m2.transpose() * dz;
        adj[other].noalias() += m3.transpose() * dz;
        break;
      }
    }
  }
  if (!out.grads.all_finite()) throw NumericalError("non-finite parameter gradient");
  return out;
}

CompGraph build_window_graph(std::span<const Event> events, const DynamicState& entry,
                             const ModelParams& params, std::span<const SurvivalDim> dims,
                             double span_begin, double span_end, TiePolicy ties) {
  if (entry.k() != params.k()) throw ConfigError("state and model disagree on k");
  if (!events.empty() && (events.front().time < span_begin || events.back().time > span_end))
    throw ConfigError("window events fall outside the survival span");
  if (span_end < span_begin) throw ConfigError("survival span end precedes its start");

  CompGraph g;
  g.events_ = events;
  g.entry_ = &entry;
  g.params_copy_ = params;
  g.tie_policy_ = ties;
  g.span_begin_ = span_begin;
  g.span_end_ = span_end;
  g.nodes_.reserve(events.size() * 5 + dims.size() * 4);
  for (std::size_t j = 0; j < events.size(); ++j) {
    if (j > 0 && events[j].time < events[j - 1].time)
      throw DataError("window events are not time ordered");
    g.add_event(j);
  }
  for (const SurvivalDim& dim : dims) {
    if (dim.user >= static_cast<std::size_t>(entry.user.rows()) ||
        dim.item >= static_cast<std::size_t>(entry.item.rows()))
      throw ConfigError("survival dimension outside the state");
    g.add_survival(dim);
  }
  g.entry_ = nullptr;
  return g;
}

CompGraph build_window_graph(std::span<const Event> events, const DynamicState& entry,
                             const ModelParams& params, std::span<const SurvivalDim> dims,
                             TiePolicy ties) {
  const double begin = events.empty() ? entry.frontier : events.front().time;
  const double end = events.empty() ? entry.frontier : events.back().time;
  return build_window_graph(events, entry, params, dims, begin, end, ties);
}

CompGraph::Gradient backward(const CompGraph& graph) { return graph.backward(); }

}  // namespace coevolve
