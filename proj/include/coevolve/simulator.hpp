#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>

#include "coevolve/coevolve_state.hpp"
#include "coevolve/event_store.hpp"
#include "coevolve/params.hpp"

namespace coevolve {

enum class ContextMode { kNone, kGaussian };

std::string_view to_string(ContextMode mode);
ContextMode context_mode_from_string(std::string_view name);

struct SimConfig {
  std::size_t num_users = 1;
  std::size_t num_items = 1;
  int k = 4;
  int context_dim = 0;  // only used with ContextMode::kGaussian
  ContextMode context_mode = ContextMode::kNone;
  Activation activation = Activation::kTanh;
  // Generating parameters; drawn uniform in +-param_scale/sqrt(k) when unset.
  std::optional<ModelParams> params;
  double param_scale = 0.5;
  double horizon = 100.0;
  std::size_t max_events = 1000;
  std::uint64_t seed = 0;

  void validate() const;
  int effective_context_dim() const {
    return context_mode == ContextMode::kGaussian ? context_dim : 0;
  }
};

struct SimResult {
  EventLog log;
  ModelParams params;
  DynamicState final_state;
};

// Called after each fired event for every dimension whose candidate time is redrawn.
using RedrawObserver = std::function<void(std::size_t event_index, UserId, ItemId)>;

// Inverse-CDF draw of a Rayleigh lapse with intensity alpha*D: sqrt(-2 ln(1-u) / alpha).
double sample_interval(double alpha, double u);

// Lapse since the segment start given no event during the first `elapsed` hours.
double sample_interval_after(double alpha, double elapsed, double u);

// Exact competing-risks sampler: each dimension holds a candidate time from its
// current Rayleigh segment, the earliest fires, and only dimensions sharing the
// fired user or item are redrawn.
SimResult simulate(const SimConfig& cfg, const RedrawObserver& observer = {});

// Continues from `initial` (its frontier is the start time) instead of the zero state.
SimResult simulate(const SimConfig& cfg, const DynamicState& initial,
                   const RedrawObserver& observer = {});

// Ogata thinning over the superposed intensity. Slow (O(m n) per step); kept
// as an independent check of `simulate`.
SimResult simulate_thinning(const SimConfig& cfg);
SimResult simulate_thinning(const SimConfig& cfg, const DynamicState& initial);

}  // namespace coevolve
