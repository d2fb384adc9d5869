#pragma once

#include <cstddef>
#include <span>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "coevolve/coevolve_state.hpp"
#include "coevolve/errors.hpp"
#include "coevolve/event_store.hpp"
#include "coevolve/params.hpp"

namespace coevolve {

// Lapse substituted for a zero gap at an observed event when ties are guarded.
inline constexpr double kTieEpsilon = 1e-9;

class DegenerateEventError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

// How to treat an observed event whose dimension changed at the same instant.
enum class TiePolicy { kReject, kEpsilon };

struct LossBreakdown {
  double event_term = 0.0;     // -sum log intensity over observed events
  double survival_term = 0.0;  // weighted survival integrals
  double total = 0.0;
};

// A user-item dimension whose survival integral enters the objective with `weight`.
struct SurvivalDim {
  UserId user;
  ItemId item;
  double weight = 1.0;
};

enum class NodeKind {
  kUserEntry,   // window-entry user embedding, constant
  kItemEntry,   // window-entry item embedding, constant
  kUserUpdate,
  kItemUpdate,
  kLogIntensity,
  kSurvivalSegment,
};

std::string_view to_string(NodeKind kind);

struct GraphStats {
  int clamp_events = 0;
  int tie_events = 0;
};

// Computation graph of one training window, stored in topological order.
// Embedding nodes hold vectors; log-intensity and survival-segment nodes are
// scalar loss terms reading one user and one item embedding node.
class CompGraph {
 public:
  struct Node {
    NodeKind kind = NodeKind::kUserEntry;
    int self = -1;   // updates: previous embedding of the same entity; terms: user node
    int other = -1;  // updates: counterpart's pre-event embedding; terms: item node
    int event = -1;  // index into the window's events (updates)
    double scalar = 0.0;  // updates: dt; log-intensity: lapse; segment: integral of (tau - t')
    double weight = 1.0;
    double log_alpha = 0.0;
    double alpha = 1.0;
    bool clamped = false;
    Eigen::VectorXd value;  // embedding nodes only
  };

  const std::vector<Node>& nodes() const { return nodes_; }
  std::size_t count(NodeKind kind) const;
  const GraphStats& stats() const { return stats_; }
  double span_begin() const { return span_begin_; }
  double span_end() const { return span_end_; }

  // Forward value of the objective.
  LossBreakdown loss() const;

  // Writes the embeddings and last-update times at the end of the window.
  void write_exit_state(DynamicState& state) const;

  struct Gradient {
    LossBreakdown loss;
    GradBundle grads;
  };
  // Reverse sweep. Entry embeddings are constants.
  Gradient backward() const;

 private:
  friend CompGraph build_window_graph(std::span<const Event>, const DynamicState&,
                                      const ModelParams&, std::span<const SurvivalDim>, double,
                                      double, TiePolicy);

  struct Track {
    int entry_node = -1;
    double entry_time = 0.0;
    int node = -1;
    double last_time = 0.0;
    std::vector<std::pair<double, int>> history;  // (event time, node) inside the window
  };

  int add_node(Node node);
  Track& user_track(UserId u);
  Track& item_track(ItemId i);
  void add_event(std::size_t j);
  void add_survival(const SurvivalDim& dim);
  void add_term(NodeKind kind, int user_node, int item_node, double scalar, double weight);

  std::span<const Event> events_;
  const DynamicState* entry_ = nullptr;
  TiePolicy tie_policy_ = TiePolicy::kEpsilon;
  double span_begin_ = 0.0;
  double span_end_ = 0.0;
  std::vector<Node> nodes_;
  std::unordered_map<UserId, Track> users_;
  std::unordered_map<ItemId, Track> items_;
  GraphStats stats_;
  ModelParams params_copy_;
};

// Builds the graph for `events` (time ordered) starting from `entry`: every
// log-intensity of an observed event, every user and item update, and the
// survival integral of each listed dimension over [span_begin, span_end].
// The events must outlive the graph.
CompGraph build_window_graph(std::span<const Event> events, const DynamicState& entry,
                             const ModelParams& params, std::span<const SurvivalDim> dims,
                             double span_begin, double span_end,
                             TiePolicy ties = TiePolicy::kEpsilon);

// Convenience overload using the window span [t_1, t_M].
CompGraph build_window_graph(std::span<const Event> events, const DynamicState& entry,
                             const ModelParams& params, std::span<const SurvivalDim> dims,
                             TiePolicy ties = TiePolicy::kEpsilon);

CompGraph::Gradient backward(const CompGraph& graph);

}  // namespace coevolve
