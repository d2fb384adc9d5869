#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include <json.hpp>

#include "coevolve/event_store.hpp"
#include "coevolve/params.hpp"
#include "coevolve/trainer.hpp"

namespace coevolve {

struct EvalConfig {
  int time_bins = 10;
  bool predict_time = true;
  bool keep_details = false;
};

// Per-test-event outcome.
struct EventPrediction {
  UserId user = 0;
  ItemId item = 0;
  double time = 0.0;
  std::size_t rank = 0;
  std::optional<double> predicted_time;  // unset for cold-start pairs
  bool recurring = false;                // pair also occurs in the training log
  int bin = 0;
};

// Empty aggregates are NaN and serialize as null.
struct Metrics {
  double mar = 0.0;
  double mar_stderr = 0.0;
  double mae_hours = 0.0;
  std::size_t ranked_count = 0;
  std::size_t timed_count = 0;
  std::size_t cold_start_excluded = 0;
  std::vector<double> per_bin_mar;
  std::vector<std::size_t> per_bin_count;
  double recurring_mar = 0.0;
  double recurring_mae = 0.0;
  std::size_t recurring_count = 0;
  std::size_t recurring_timed_count = 0;
};

struct Evaluation {
  Metrics metrics;
  std::vector<EventPrediction> details;
};

// Replays `train`, then walks `test` in order. Events sharing a timestamp are
// all scored against the state preceding that timestamp, then applied.
// Time bins split [train.horizon(), test.horizon()] into equal spans.
Evaluation evaluate(const EventLog& train, const EventLog& test, const ModelParams& params,
                    const EvalConfig& cfg = {});

struct SplitResult {
  double proportion = 0.0;
  std::size_t train_events = 0;
  std::size_t test_events = 0;
  Metrics metrics;
};

struct SweepResult {
  std::vector<SplitResult> splits;
  Metrics mean;
};

// Trains and evaluates once per split proportion.
SweepResult sweep_splits(const EventLog& log, const TrainConfig& train_cfg,
                         std::span<const double> proportions, const EvalConfig& eval_cfg = {});

// Field-wise mean of the finite entries; counts are summed.
Metrics mean_metrics(std::span<const Metrics> rows);

nlohmann::json metrics_to_json(const Metrics& m);
void write_metrics_csv(const std::filesystem::path& path, std::span<const SplitResult> splits,
                       const Metrics& mean);
void write_predictions_csv(const std::filesystem::path& path,
                           std::span<const EventPrediction> details);

}  // namespace coevolve
