#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <string_view>

#include <Eigen/Dense>
#include <json.hpp>

namespace coevolve {

enum class Activation { kTanh, kSigmoid };

std::string_view to_string(Activation a);
Activation activation_from_string(std::string_view name);

// The eight weight blocks of the user and item update networks. W* drive the
// user update, V* the item update: *1 temporal drift (k), *2 self evolution
// (k x k), *3 co-evolution (k x k), *4 interaction context (k x d).
// Also used for gradients and optimizer moments.
struct WeightBlocks {
  Eigen::VectorXd w1, v1;
  Eigen::MatrixXd w2, v2, w3, v3, w4, v4;

  static WeightBlocks zeros(int k, int d);

  int k() const { return static_cast<int>(w1.size()); }
  int d() const { return static_cast<int>(w4.cols()); }

  // Visits every block with its canonical name ("W1".."V4").
  template <typename F>
  void for_each(F&& f) {
    f("W1", w1); f("W2", w2); f("W3", w3); f("W4", w4);
    f("V1", v1); f("V2", v2); f("V3", v3); f("V4", v4);
  }
  template <typename F>
  void for_each(F&& f) const {
    f("W1", w1); f("W2", w2); f("W3", w3); f("W4", w4);
    f("V1", v1); f("V2", v2); f("V3", v3); f("V4", v4);
  }

  // Pairs up same-named blocks of two bundles with identical shapes.
  template <typename F>
  void zip(const WeightBlocks& other, F&& f) {
    f(w1, other.w1); f(w2, other.w2); f(w3, other.w3); f(w4, other.w4);
    f(v1, other.v1); f(v2, other.v2); f(v3, other.v3); f(v4, other.v4);
  }

  Eigen::Index num_entries() const;
  double squared_norm() const;
  bool all_finite() const;
  bool same_shape(const WeightBlocks& other) const;

  // Flat view in canonical block order, row-major inside each block.
  Eigen::VectorXd flatten() const;
  void assign_flat(const Eigen::VectorXd& flat);

  bool operator==(const WeightBlocks& other) const;
};

using GradBundle = WeightBlocks;

struct ModelParams {
  WeightBlocks weights;
  Activation activation = Activation::kTanh;

  int k() const { return weights.k(); }
  int d() const { return weights.d(); }
  bool operator==(const ModelParams& other) const = default;

  static ModelParams zeros(int k, int d, Activation act = Activation::kTanh);
  // Every entry uniform in [-scale/sqrt(k), scale/sqrt(k)].
  static ModelParams random_uniform(int k, int d, Activation act, double scale,
                                    std::mt19937_64& rng);
};

nlohmann::json params_to_json(const ModelParams& params);
ModelParams params_from_json(const nlohmann::json& j);

void save_checkpoint(const std::filesystem::path& path, const ModelParams& params);
ModelParams load_checkpoint(const std::filesystem::path& path);

}  // namespace coevolve
