#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "coevolve/eval_harness.hpp"
#include "coevolve/simulator.hpp"
#include "coevolve/trainer.hpp"

namespace coevolve::cli {

enum ExitCode : int {
  kOk = 0,
  kFailure = 1,
  kConfigError = 2,
  kDataError = 3,
  kNumericalAbort = 4,
};

// Environment variable that overrides the output directory.
inline constexpr const char* kOutputDirEnv = "COEVOLVE_OUTPUT_DIR";

struct PredictQuery {
  UserId user = 0;
  double time = 0.0;
  std::size_t top = 10;
  std::optional<ItemId> item;
};

// Fully resolved settings of one invocation.
struct RunConfig {
  std::string command;
  std::uint64_t seed = 0;
  std::filesystem::path output_dir = "out";
  std::filesystem::path events;
  std::filesystem::path checkpoint;
  std::optional<std::size_t> num_users;  // only needed without a sidecar
  std::optional<std::size_t> num_items;
  SimConfig simulate;
  TrainConfig train;
  std::optional<double> split;        // train/evaluate on the first T*p hours
  std::vector<double> proportions;    // evaluate: train + evaluate per split
  EvalConfig evaluate;
  PredictQuery predict;

  nlohmann::json to_json() const;
};

// Reads a JSON config file into `cfg` (keys absent from the file keep their values).
void apply_config_json(RunConfig& cfg, const nlohmann::json& j);

// Entry point shared by the binary and the tests. Prints a one-line summary
// on success and a categorized message on failure.
int run(int argc, const char* const* argv);
int run(const std::vector<std::string>& args);

}  // namespace coevolve::cli
