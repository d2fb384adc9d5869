#include "coevolve/simulator.hpp"

#include <cmath>
#include <queue>
#include <random>
#include <string>

#include "coevolve/errors.hpp"
#include "coevolve/point_process.hpp"

namespace coevolve {

std::string_view to_string(ContextMode mode) {
  return mode == ContextMode::kNone ? "none" : "gaussian";
}

ContextMode context_mode_from_string(std::string_view name) {
  if (name == "none") return ContextMode::kNone;
  if (name == "gaussian") return ContextMode::kGaussian;
  throw ConfigError("unknown context mode '" + std::string(name) + "' (expected none or gaussian)");
}

void SimConfig::validate() const {
  if (num_users < 1 || num_items < 1) throw ConfigError("simulation needs m, n >= 1");
  if (k < 1) throw ConfigError("simulation needs k >= 1");
  if (context_dim < 0) throw ConfigError("context dimension must be >= 0");
  if (!(horizon > 0.0) || !std::isfinite(horizon)) throw ConfigError("horizon T must be > 0");
  if (max_events < 1) throw ConfigError("max_events must be >= 1");
  if (params && (params->k() != k || params->d() != effective_context_dim()))
    throw ConfigError("given simulation parameters do not match k/d");
}

double sample_interval(double alpha, double u) {
  return sample_interval_after(alpha, 0.0, u);
}

double sample_interval_after(double alpha, double elapsed, double u) {
  if (!(u > 0.0 && u < 1.0)) throw ConfigError("uniform variate must lie in (0, 1)");
  if (!(alpha > 0.0)) throw NumericalError("Rayleigh sampling needs alpha > 0");
  return std::sqrt(elapsed * elapsed - 2.0 * std::log1p(-u) / alpha);
}

namespace {

double open_uniform(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(0.0, 1.0);
  double u = 0.0;
  while (u == 0.0) u = dist(rng);
  return u;
}

struct Setup {
  ModelParams params;
  std::mt19937_64 rng;
};

Setup prepare(const SimConfig& cfg) {
  cfg.validate();
  Setup s{ModelParams::zeros(cfg.k, cfg.effective_context_dim(), cfg.activation),
          std::mt19937_64(cfg.seed)};
  if (cfg.params) {
    s.params = *cfg.params;
  } else {
    s.params = ModelParams::random_uniform(cfg.k, cfg.effective_context_dim(), cfg.activation,
                                           cfg.param_scale, s.rng);
  }
  return s;
}

Eigen::VectorXd draw_context(const SimConfig& cfg, std::mt19937_64& rng) {
  Eigen::VectorXd q(cfg.effective_context_dim());
  std::normal_distribution<double> normal(0.0, 1.0);
  for (Eigen::Index c = 0; c < q.size(); ++c) q[c] = normal(rng);
  return q;
}

void check_initial(const SimConfig& cfg, const DynamicState& initial) {
  if (static_cast<std::size_t>(initial.user.rows()) != cfg.num_users ||
      static_cast<std::size_t>(initial.item.rows()) != cfg.num_items || initial.k() != cfg.k)
    throw ConfigError("initial state does not match the simulation shape");
}

double log_horizon(const SimConfig& cfg, const std::vector<Event>& events, bool hit_cap) {
  return hit_cap && !events.empty() ? events.back().time : cfg.horizon;
}

}  // namespace

SimResult simulate(const SimConfig& cfg, const RedrawObserver& observer) {
  return simulate(cfg, DynamicState::zeros(cfg.num_users, cfg.num_items, cfg.k), observer);
}

SimResult simulate(const SimConfig& cfg, const DynamicState& initial,
                   const RedrawObserver& observer) {
  Setup setup = prepare(cfg);
  check_initial(cfg, initial);
  auto& rng = setup.rng;
  DynamicState state = initial;
  const std::size_t n = cfg.num_items;

  struct Candidate {
    double time;
    std::size_t dim;
    std::uint32_t version;
    bool operator>(const Candidate& o) const {
      return time != o.time ? time > o.time : dim > o.dim;
    }
  };
  std::priority_queue<Candidate, std::vector<Candidate>, std::greater<>> heap;
  std::vector<std::uint32_t> version(cfg.num_users * n, 0);

  auto draw = [&](UserId u, ItemId i, double now) {
    const auto c = compatibility(state.user.row(static_cast<Eigen::Index>(u)).transpose(),
                                 state.item.row(static_cast<Eigen::Index>(i)).transpose());
    const double t_prime = state.last_change(u, i);
    const double lapse = sample_interval_after(c.alpha, now - t_prime, open_uniform(rng));
    const std::size_t dim = u * n + i;
    heap.push({t_prime + lapse, dim, ++version[dim]});
  };

  const double start = state.frontier;
  for (UserId u = 0; u < cfg.num_users; ++u)
    for (ItemId i = 0; i < n; ++i) draw(u, i, start);

  std::vector<Event> events;
  bool hit_cap = false;
  while (!heap.empty()) {
    const Candidate next = heap.top();
    heap.pop();
    if (next.version != version[next.dim]) continue;
    if (next.time > cfg.horizon) break;
    Event e{next.dim / n, next.dim % n, next.time, draw_context(cfg, rng)};
    apply_event(state, setup.params, e);
    events.push_back(e);
    if (events.size() >= cfg.max_events) {
      hit_cap = true;
      break;
    }
    for (ItemId i = 0; i < n; ++i) {
      draw(e.user, i, e.time);
      if (observer) observer(events.size() - 1, e.user, i);
    }
    for (UserId u = 0; u < cfg.num_users; ++u) {
      if (u == e.user) continue;
      draw(u, e.item, e.time);
      if (observer) observer(events.size() - 1, u, e.item);
    }
  }
  const double horizon = log_horizon(cfg, events, hit_cap);
  return {EventLog(std::move(events), cfg.num_users, cfg.num_items, horizon),
          std::move(setup.params), std::move(state)};
}

SimResult simulate_thinning(const SimConfig& cfg) {
  return simulate_thinning(cfg, DynamicState::zeros(cfg.num_users, cfg.num_items, cfg.k));
}

SimResult simulate_thinning(const SimConfig& cfg, const DynamicState& initial) {
  Setup setup = prepare(cfg);
  check_initial(cfg, initial);
  auto& rng = setup.rng;
  DynamicState state = initial;
  const std::size_t m = cfg.num_users;
  const std::size_t n = cfg.num_items;
  std::vector<double> alpha(m * n);
  std::vector<double> t_prime(m * n);

  auto refresh = [&](UserId u, ItemId i) {
    alpha[u * n + i] = compatibility(state.user.row(static_cast<Eigen::Index>(u)).transpose(),
                                     state.item.row(static_cast<Eigen::Index>(i)).transpose())
                           .alpha;
    t_prime[u * n + i] = state.last_change(u, i);
  };
  for (UserId u = 0; u < m; ++u)
    for (ItemId i = 0; i < n; ++i) refresh(u, i);

  // Superposed intensity A*t - S, linear between events.
  auto total_at = [&](double t) {
    double sum = 0.0;
    for (std::size_t d = 0; d < m * n; ++d) sum += alpha[d] * (t - t_prime[d]);
    return sum;
  };

  std::vector<Event> events;
  bool hit_cap = false;
  double now = state.frontier;
  while (now < cfg.horizon) {
    double rate_sum = 0.0;
    for (double a : alpha) rate_sum += a;
    const double step = 1.0 / std::sqrt(rate_sum);
    const double bound = total_at(now + step);
    std::exponential_distribution<double> wait(bound);
    const double candidate = now + wait(rng);
    if (candidate > now + step) {
      now += step;
      continue;
    }
    if (candidate > cfg.horizon) break;
    const double lambda = total_at(candidate);
    now = candidate;
    if (open_uniform(rng) * bound > lambda) continue;

    // Pick the firing dimension proportionally to its intensity.
    double target = open_uniform(rng) * lambda;
    std::size_t dim = 0;
    for (; dim + 1 < m * n; ++dim) {
      target -= alpha[dim] * (candidate - t_prime[dim]);
      if (target <= 0.0) break;
    }
    Event e{dim / n, dim % n, candidate, draw_context(cfg, rng)};
    apply_event(state, setup.params, e);
    events.push_back(e);
    if (events.size() >= cfg.max_events) {
      hit_cap = true;
      break;
    }
    for (ItemId i = 0; i < n; ++i) refresh(e.user, i);
    for (UserId u = 0; u < m; ++u) refresh(u, e.item);
  }
  const double horizon = log_horizon(cfg, events, hit_cap);
  return {EventLog(std::move(events), m, n, horizon), std::move(setup.params), std::move(state)};
}

}  // namespace coevolve
