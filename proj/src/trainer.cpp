#include "coevolve/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <unordered_set>

#include "coevolve/errors.hpp"

namespace coevolve {

namespace {

std::uint64_t dim_key(UserId u, ItemId i, std::size_t num_items) {
  return static_cast<std::uint64_t>(u) * num_items + i;
}

std::unordered_set<std::uint64_t> event_keys(std::span<const Event> events, std::size_t num_items) {
  std::unordered_set<std::uint64_t> keys;
  for (const Event& e : events) keys.insert(dim_key(e.user, e.item, num_items));
  return keys;
}

}  // namespace

void TrainConfig::validate() const {
  if (window_size < 1) throw ConfigError("window_size must be >= 1");
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate))
    throw ConfigError("learning_rate must be finite and >= 0");
  if (!(clip_norm > 0.0)) throw ConfigError("clip_norm must be > 0");
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (k < 1) throw ConfigError("k must be >= 1");
  if (!(init_scale >= 0.0)) throw ConfigError("init_scale must be >= 0");
}

std::vector<SurvivalDim> event_dims(std::span<const Event> events) {
  std::vector<SurvivalDim> dims;
  std::unordered_set<std::uint64_t> seen;
  for (const Event& e : events) {
    // ids are bounded by the log's m, n; a 32/32 split keeps keys unique
    const std::uint64_t key = (static_cast<std::uint64_t>(e.user) << 32) | e.item;
    if (seen.insert(key).second) dims.push_back({e.user, e.item, 1.0});
  }
  return dims;
}

std::vector<SurvivalDim> all_non_event_dims(std::span<const Event> events, std::size_t num_users,
                                            std::size_t num_items) {
  const auto keys = event_keys(events, num_items);
  std::vector<SurvivalDim> dims;
  for (UserId u = 0; u < num_users; ++u)
    for (ItemId i = 0; i < num_items; ++i)
      if (!keys.contains(dim_key(u, i, num_items))) dims.push_back({u, i, 1.0});
  return dims;
}

std::vector<SurvivalDim> sample_non_event_dims(std::span<const Event> events,
                                               std::size_t num_users, std::size_t num_items,
                                               std::size_t count, Rng& rng) {
  const auto keys = event_keys(events, num_items);
  const std::uint64_t total = static_cast<std::uint64_t>(num_users) * num_items;
  const std::uint64_t available = total - keys.size();
  if (count == 0) return {};
  if (count >= available) return all_non_event_dims(events, num_users, num_items);

  std::vector<SurvivalDim> out;
  out.reserve(count);
  if (count * 4 >= available) {
    // Dense regime: partial Fisher-Yates over the explicit candidate list.
    std::vector<SurvivalDim> pool = all_non_event_dims(events, num_users, num_items);
    for (std::size_t s = 0; s < count; ++s) {
      std::uniform_int_distribution<std::size_t> pick(s, pool.size() - 1);
      std::swap(pool[s], pool[pick(rng)]);
      out.push_back(pool[s]);
    }
    return out;
  }
  std::unordered_set<std::uint64_t> chosen;
  std::uniform_int_distribution<std::uint64_t> pick(0, total - 1);
  while (out.size() < count) {
    const std::uint64_t key = pick(rng);
    if (keys.contains(key) || !chosen.insert(key).second) continue;
    out.push_back({static_cast<UserId>(key / num_items), static_cast<ItemId>(key % num_items), 1.0});
  }
  return out;
}

std::vector<SurvivalDim> objective_dims(std::span<const Event> events, std::size_t num_users,
                                        std::size_t num_items,
                                        std::span<const SurvivalDim> sampled,
                                        bool scale_survival) {
  std::vector<SurvivalDim> dims = event_dims(events);
  const auto keys = event_keys(events, num_items);
  for (const SurvivalDim& d : sampled)
    if (keys.contains(dim_key(d.user, d.item, num_items)))
      throw ConfigError("sampled survival dimension carries an event in this window");
  const double available =
      static_cast<double>(num_users) * static_cast<double>(num_items) - static_cast<double>(dims.size());
  const double weight = scale_survival && !sampled.empty()
                            ? available / static_cast<double>(sampled.size())
                            : 1.0;
  for (const SurvivalDim& d : sampled) dims.push_back({d.user, d.item, weight});
  return dims;
}

LossBreakdown window_objective(std::span<const Event> events, const DynamicState& entry,
                               const ModelParams& params, std::span<const SurvivalDim> sampled,
                               bool scale_survival, TiePolicy ties) {
  const auto dims = objective_dims(events, static_cast<std::size_t>(entry.user.rows()),
                                   static_cast<std::size_t>(entry.item.rows()), sampled,
                                   scale_survival);
  return build_window_graph(events, entry, params, dims, ties).loss();
}

LossBreakdown negative_log_likelihood(const EventLog& history, const EventLog& target,
                                      const ModelParams& params) {
  DynamicState state = DynamicState::zeros(history.num_users(), history.num_items(), params.k());
  replay_into(state, params, history.events());
  std::vector<SurvivalDim> dims;
  dims.reserve(history.num_users() * history.num_items());
  for (UserId u = 0; u < history.num_users(); ++u)
    for (ItemId i = 0; i < history.num_items(); ++i) dims.push_back({u, i, 1.0});
  const double begin = history.horizon();
  const double end = std::max(begin, target.horizon());
  return build_window_graph(target.events(), state, params, dims, begin, end, TiePolicy::kEpsilon)
      .loss();
}

double clip_gradient(GradBundle& grads, double max_norm) {
  const double norm = std::sqrt(grads.squared_norm());
  if (norm > max_norm) {
    const double scale = max_norm / norm;
    grads.for_each([&](std::string_view, auto& block) { block *= scale; });
  }
  return norm;
}

AdamOptimizer::AdamOptimizer(const WeightBlocks& shape, double learning_rate, double beta1,
                             double beta2, double epsilon)
    : m_(WeightBlocks::zeros(shape.k(), shape.d())),
      v_(WeightBlocks::zeros(shape.k(), shape.d())),
      lr_(learning_rate),
      beta1_(beta1),
      beta2_(beta2),
      eps_(epsilon) {}

void AdamOptimizer::step(WeightBlocks& params, const GradBundle& grads) {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  m_.zip(grads, [&](auto& m, const auto& g) { m = beta1_ * m + (1.0 - beta1_) * g; });
  v_.zip(grads, [&](auto& v, const auto& g) {
    v = beta2_ * v + (1.0 - beta2_) * g.cwiseProduct(g);
  });
  // params -= lr * m_hat / (sqrt(v_hat) + eps), block by block
  WeightBlocks step = m_;
  step.zip(v_, [&](auto& s, const auto& v) {
    s = (lr_ * (s.array() / c1) / ((v.array() / c2).sqrt() + eps_)).matrix();
  });
  params.zip(step, [](auto& p, const auto& s) { p -= s; });
}

ModelParams initial_params(const TrainConfig& cfg, int context_dim, Rng& rng) {
  return ModelParams::random_uniform(cfg.k, context_dim, cfg.activation, cfg.init_scale, rng);
}

namespace {

TrainResult train_from(const EventLog& log, const TrainConfig& cfg, ModelParams init, Rng& rng) {
  if (log.empty()) throw DataError("cannot train on an empty event log");
  if (init.d() != static_cast<int>(log.context_dim()))
    throw ConfigError("model context dimension does not match the event log");
  TrainResult result{std::move(init), {}};

  AdamOptimizer adam(result.params.weights, cfg.learning_rate);
  const std::span<const Event> all(log.events());
  std::size_t window_counter = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    DynamicState state = DynamicState::zeros(log.num_users(), log.num_items(), result.params.k());
    for (std::size_t first = 0; first < all.size(); first += cfg.window_size) {
      const auto window = all.subspan(first, std::min(cfg.window_size, all.size() - first));
      std::vector<SurvivalDim> sampled;
      if (cfg.full_survival) {
        sampled = all_non_event_dims(window, log.num_users(), log.num_items());
      } else {
        const std::size_t count = cfg.nce_samples.value_or(5 * event_dims(window).size());
        sampled = sample_non_event_dims(window, log.num_users(), log.num_items(), count, rng);
      }
      const auto dims = objective_dims(window, log.num_users(), log.num_items(), sampled,
                                       cfg.scale_survival && !cfg.full_survival);

      TraceRow row;
      row.epoch = epoch;
      row.window = window_counter++;
      row.survival_dims = dims.size();
      try {
        const CompGraph graph = build_window_graph(window, state, result.params, dims);
        CompGraph::Gradient grad = graph.backward();
        row.loss = grad.loss;
        row.clamp_events = graph.stats().clamp_events;
        row.tie_events = graph.stats().tie_events;
        row.grad_norm = clip_gradient(grad.grads, cfg.clip_norm);
        row.clipped = row.grad_norm > cfg.clip_norm;
        adam.step(result.params.weights, grad.grads);
        graph.write_exit_state(state);
      } catch (const NumericalError& ex) {
        throw TrainingAborted("training aborted in window " + std::to_string(row.window) + ": " +
                                  ex.what(),
                              std::move(result.trace));
      }
      result.trace.push_back(row);
      if (!result.params.weights.all_finite())
        throw TrainingAborted("training aborted: parameters became non-finite",
                              std::move(result.trace));
    }
  }
  return result;
}

}  // namespace

TrainResult train(const EventLog& log, const TrainConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);
  ModelParams init = initial_params(cfg, static_cast<int>(log.context_dim()), rng);
  return train_from(log, cfg, std::move(init), rng);
}

TrainResult train(const EventLog& log, const TrainConfig& cfg, ModelParams init) {
  cfg.validate();
  Rng rng(cfg.seed);
  return train_from(log, cfg, std::move(init), rng);
}

void write_trace_csv(const std::filesystem::path& path, std::span<const TraceRow> trace) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out.precision(17);
  out << "epoch,window,event_term,survival_term,total,grad_norm,clipped,clamp_events,"
         "tie_events,survival_dims\n";
  for (const TraceRow& r : trace) {
    out << r.epoch << ',' << r.window << ',' << r.loss.event_term << ',' << r.loss.survival_term
        << ',' << r.loss.total << ',' << r.grad_norm << ',' << (r.clipped ? 1 : 0) << ','
        << r.clamp_events << ',' << r.tie_events << ',' << r.survival_dims << '\n';
  }
}

}  // namespace coevolve
