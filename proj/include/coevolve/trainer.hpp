#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "coevolve/coevolve_state.hpp"
#include "coevolve/event_store.hpp"
#include "coevolve/grad_engine.hpp"
#include "coevolve/params.hpp"

namespace coevolve {

struct TrainConfig {
  std::size_t window_size = 64;
  // Non-event dimensions sampled per window; unset means 5x the distinct event dims.
  std::optional<std::size_t> nce_samples;
  bool full_survival = false;  // enumerate every dimension instead of sampling
  bool scale_survival = true;
  double learning_rate = 1e-3;
  double clip_norm = 5.0;
  int epochs = 1;
  std::uint64_t seed = 0;
  int k = 4;
  Activation activation = Activation::kTanh;
  double init_scale = 0.1;  // init entries uniform in +-init_scale/sqrt(k)

  void validate() const;
};

using Rng = std::mt19937_64;

// Distinct (user, item) pairs of the events in first-occurrence order, weight 1.
std::vector<SurvivalDim> event_dims(std::span<const Event> events);

// Uniform sample without replacement of `count` dimensions carrying no event
// in `events`. Returns everything when count covers all non-event dimensions.
std::vector<SurvivalDim> sample_non_event_dims(std::span<const Event> events,
                                               std::size_t num_users, std::size_t num_items,
                                               std::size_t count, Rng& rng);

// Every non-event dimension, in row-major order.
std::vector<SurvivalDim> all_non_event_dims(std::span<const Event> events, std::size_t num_users,
                                            std::size_t num_items);

// Survival dimensions for a window: the event dims at weight 1 followed by
// `sampled` at weight (non-event count / sampled count) when scaling is on.
std::vector<SurvivalDim> objective_dims(std::span<const Event> events, std::size_t num_users,
                                        std::size_t num_items,
                                        std::span<const SurvivalDim> sampled,
                                        bool scale_survival);

// Negative log-likelihood of one window over its span [t_1, t_M].
LossBreakdown window_objective(std::span<const Event> events, const DynamicState& entry,
                               const ModelParams& params, std::span<const SurvivalDim> sampled,
                               bool scale_survival, TiePolicy ties = TiePolicy::kReject);

// Exact negative log-likelihood of `target` over [history.horizon(), target.horizon()],
// every dimension enumerated, after replaying `history`.
LossBreakdown negative_log_likelihood(const EventLog& history, const EventLog& target,
                                      const ModelParams& params);

// Scales the gradient so its global norm is at most max_norm. Returns the
// norm before clipping.
double clip_gradient(GradBundle& grads, double max_norm);

class AdamOptimizer {
 public:
  AdamOptimizer(const WeightBlocks& shape, double learning_rate, double beta1 = 0.9,
                double beta2 = 0.999, double epsilon = 1e-8);
  void step(WeightBlocks& params, const GradBundle& grads);
  long steps() const { return t_; }

 private:
  WeightBlocks m_;
  WeightBlocks v_;
  double lr_, beta1_, beta2_, eps_;
  long t_ = 0;
};

struct TraceRow {
  int epoch = 0;
  std::size_t window = 0;  // global window counter across epochs
  LossBreakdown loss;
  double grad_norm = 0.0;
  bool clipped = false;
  int clamp_events = 0;
  int tie_events = 0;
  std::size_t survival_dims = 0;
};

struct TrainResult {
  ModelParams params;
  std::vector<TraceRow> trace;
};

class TrainingAborted : public NumericalError {
 public:
  TrainingAborted(const std::string& what, std::vector<TraceRow> trace)
      : NumericalError(what), trace_(std::move(trace)) {}
  const std::vector<TraceRow>& trace() const { return trace_; }

 private:
  std::vector<TraceRow> trace_;
};

ModelParams initial_params(const TrainConfig& cfg, int context_dim, Rng& rng);

// Sliding-window truncated BPTT with Adam and global-norm clipping.
TrainResult train(const EventLog& log, const TrainConfig& cfg);
// Same, starting from given parameters (the config's k/activation are ignored).
TrainResult train(const EventLog& log, const TrainConfig& cfg, ModelParams init);

void write_trace_csv(const std::filesystem::path& path, std::span<const TraceRow> trace);

}  // namespace coevolve
