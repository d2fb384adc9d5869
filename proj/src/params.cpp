#include "coevolve/params.hpp"

#include <cmath>
#include <fstream>

#include "coevolve/errors.hpp"

namespace coevolve {

std::string_view to_string(Activation a) {
  return a == Activation::kTanh ? "tanh" : "sigmoid";
}

Activation activation_from_string(std::string_view name) {
  if (name == "tanh") return Activation::kTanh;
  if (name == "sigmoid") return Activation::kSigmoid;
  throw ConfigError("unknown activation '" + std::string(name) + "' (expected tanh or sigmoid)");
}

WeightBlocks WeightBlocks::zeros(int k, int d) {
  WeightBlocks b;
  b.w1 = b.v1 = Eigen::VectorXd::Zero(k);
  b.w2 = b.v2 = b.w3 = b.v3 = Eigen::MatrixXd::Zero(k, k);
  b.w4 = b.v4 = Eigen::MatrixXd::Zero(k, d);
  return b;
}

Eigen::Index WeightBlocks::num_entries() const {
  Eigen::Index n = 0;
  for_each([&](std::string_view, const auto& block) { n += block.size(); });
  return n;
}

double WeightBlocks::squared_norm() const {
  double s = 0.0;
  for_each([&](std::string_view, const auto& block) { s += block.squaredNorm(); });
  return s;
}

bool WeightBlocks::all_finite() const {
  bool ok = true;
  for_each([&](std::string_view, const auto& block) { ok = ok && block.allFinite(); });
  return ok;
}

bool WeightBlocks::same_shape(const WeightBlocks& other) const {
  return w1.size() == other.w1.size() && v1.size() == other.v1.size() &&
         w2.rows() == other.w2.rows() && w2.cols() == other.w2.cols() &&
         v2.rows() == other.v2.rows() && v2.cols() == other.v2.cols() &&
         w3.rows() == other.w3.rows() && w3.cols() == other.w3.cols() &&
         v3.rows() == other.v3.rows() && v3.cols() == other.v3.cols() &&
         w4.rows() == other.w4.rows() && w4.cols() == other.w4.cols() &&
         v4.rows() == other.v4.rows() && v4.cols() == other.v4.cols();
}

Eigen::VectorXd WeightBlocks::flatten() const {
  Eigen::VectorXd flat(num_entries());
  Eigen::Index pos = 0;
  for_each([&](std::string_view, const auto& block) {
    for (Eigen::Index r = 0; r < block.rows(); ++r)
      for (Eigen::Index c = 0; c < block.cols(); ++c) flat[pos++] = block(r, c);
  });
  return flat;
}

void WeightBlocks::assign_flat(const Eigen::VectorXd& flat) {
  if (flat.size() != num_entries()) throw ConfigError("flat parameter vector has wrong length");
  Eigen::Index pos = 0;
  for_each([&](std::string_view, auto& block) {
    for (Eigen::Index r = 0; r < block.rows(); ++r)
      for (Eigen::Index c = 0; c < block.cols(); ++c) block(r, c) = flat[pos++];
  });
}

bool WeightBlocks::operator==(const WeightBlocks& other) const {
  if (!same_shape(other)) return false;
  return w1 == other.w1 && v1 == other.v1 && w2 == other.w2 && v2 == other.v2 &&
         w3 == other.w3 && v3 == other.v3 && w4 == other.w4 && v4 == other.v4;
}

ModelParams ModelParams::zeros(int k, int d, Activation act) {
  return {WeightBlocks::zeros(k, d), act};
}

ModelParams ModelParams::random_uniform(int k, int d, Activation act, double scale,
                                        std::mt19937_64& rng) {
  ModelParams p = zeros(k, d, act);
  const double bound = scale / std::sqrt(static_cast<double>(k));
  std::uniform_real_distribution<double> dist(-bound, bound);
  p.weights.for_each([&](std::string_view, auto& block) {
    for (Eigen::Index r = 0; r < block.rows(); ++r)
      for (Eigen::Index c = 0; c < block.cols(); ++c) block(r, c) = dist(rng);
  });
  return p;
}

nlohmann::json params_to_json(const ModelParams& params) {
  nlohmann::json j;
  j["k"] = params.k();
  j["d"] = params.d();
  j["activation"] = std::string(to_string(params.activation));
  auto& blocks = j["blocks"];
  params.weights.for_each([&](std::string_view name, const auto& block) {
    std::vector<double> row_major;
    row_major.reserve(static_cast<std::size_t>(block.size()));
    for (Eigen::Index r = 0; r < block.rows(); ++r)
      for (Eigen::Index c = 0; c < block.cols(); ++c) row_major.push_back(block(r, c));
    blocks[std::string(name)] = row_major;
  });
  return j;
}

ModelParams params_from_json(const nlohmann::json& j) {
  try {
    const int k = j.at("k").get<int>();
    const int d = j.at("d").get<int>();
    if (k < 1 || d < 0) throw ConfigError("checkpoint has invalid k/d");
    ModelParams p = ModelParams::zeros(k, d, activation_from_string(j.at("activation").get<std::string>()));
    const auto& blocks = j.at("blocks");
    p.weights.for_each([&](std::string_view name, auto& block) {
      const auto values = blocks.at(std::string(name)).get<std::vector<double>>();
      if (static_cast<Eigen::Index>(values.size()) != block.size())
        throw ConfigError("checkpoint block " + std::string(name) + " has wrong size");
      std::size_t pos = 0;
      for (Eigen::Index r = 0; r < block.rows(); ++r)
        for (Eigen::Index c = 0; c < block.cols(); ++c) block(r, c) = values[pos++];
    });
    if (!p.weights.all_finite()) throw ConfigError("checkpoint contains non-finite weights");
    return p;
  } catch (const nlohmann::json::exception& ex) {
    throw ConfigError(std::string("malformed checkpoint: ") + ex.what());
  }
}

void save_checkpoint(const std::filesystem::path& path, const ModelParams& params) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write checkpoint " + path.string());
  out << params_to_json(params).dump(2) << '\n';
}

ModelParams load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open checkpoint " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& ex) {
    throw ConfigError("checkpoint " + path.string() + " is not valid JSON: " + ex.what());
  }
  return params_from_json(j);
}

}  // namespace coevolve
