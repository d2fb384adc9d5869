#include "test_support.hpp"

#include <algorithm>
#include <cmath>

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>

namespace coevolve::testing {

EventLog random_log(const RandomLogShape& shape, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> time(0.0, shape.horizon);
  std::uniform_int_distribution<std::size_t> user(0, shape.num_users - 1);
  std::uniform_int_distribution<std::size_t> item(0, shape.num_items - 1);
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);

  std::vector<double> times(shape.num_events);
  for (double& t : times) t = time(rng);
  std::sort(times.begin(), times.end());
  for (std::size_t j = 1; j < times.size(); ++j)
    if (coin(rng) < shape.tie_probability) times[j] = times[j - 1];

  std::vector<Event> events;
  for (double t : times) {
    Event e{user(rng), item(rng), t, Eigen::VectorXd(shape.context_dim)};
    for (int c = 0; c < shape.context_dim; ++c) e.context[c] = normal(rng);
    events.push_back(std::move(e));
  }
  return EventLog(std::move(events), shape.num_users, shape.num_items, shape.horizon);
}

ModelParams random_params(int k, int d, Activation act, double scale, std::mt19937_64& rng) {
  return ModelParams::random_uniform(k, d, act, scale, rng);
}

RefState RefState::zeros(std::size_t m, std::size_t n, int k) {
  RefState s;
  s.user.assign(m, Vec(static_cast<std::size_t>(k), 0.0));
  s.item.assign(n, Vec(static_cast<std::size_t>(k), 0.0));
  s.last_user.assign(m, 0.0);
  s.last_item.assign(n, 0.0);
  return s;
}

RefState RefState::from(const DynamicState& d) {
  RefState s = zeros(static_cast<std::size_t>(d.user.rows()), static_cast<std::size_t>(d.item.rows()), d.k());
  for (Eigen::Index r = 0; r < d.user.rows(); ++r) {
    for (int c = 0; c < d.k(); ++c) s.user[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)] = d.user(r, c);
    s.last_user[static_cast<std::size_t>(r)] = d.last_user_time[r];
  }
  for (Eigen::Index r = 0; r < d.item.rows(); ++r) {
    for (int c = 0; c < d.k(); ++c) s.item[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)] = d.item(r, c);
    s.last_item[static_cast<std::size_t>(r)] = d.last_item_time[r];
  }
  return s;
}

namespace {

double squash(double x, Activation act) {
  return act == Activation::kTanh ? std::tanh(x) : 1.0 / (1.0 + std::exp(-x));
}

Vec ref_update(const Eigen::VectorXd& drift, const Eigen::MatrixXd& self_w,
               const Eigen::MatrixXd& cross_w, const Eigen::MatrixXd& ctx_w, Activation act,
               double dt, const Vec& self, const Vec& other, const Eigen::VectorXd& q) {
  const std::size_t k = self.size();
  Vec out(k);
  for (std::size_t r = 0; r < k; ++r) {
    const auto ri = static_cast<Eigen::Index>(r);
    double z = drift(ri) * dt;
    for (std::size_t c = 0; c < k; ++c) {
      z += self_w(ri, static_cast<Eigen::Index>(c)) * self[c];
      z += cross_w(ri, static_cast<Eigen::Index>(c)) * other[c];
    }
    for (Eigen::Index c = 0; c < q.size(); ++c) z += ctx_w(ri, c) * q(c);
    out[r] = squash(z, act);
  }
  return out;
}

std::size_t latest_snapshot(const std::vector<Event>& events, double tau) {
  // number of events with time <= tau
  std::size_t count = 0;
  while (count < events.size() && events[count].time <= tau) ++count;
  return count;
}

}  // namespace

void ref_apply(RefState& s, const ModelParams& p, const Event& e) {
  const Vec f_old = s.user[e.user];
  const Vec g_old = s.item[e.item];
  const auto& w = p.weights;
  const double dt_u = e.time - s.last_user[e.user];
  const double dt_i = e.time - s.last_item[e.item];
  s.user[e.user] = ref_update(w.w1, w.w2, w.w3, w.w4, p.activation, dt_u, f_old, g_old, e.context);
  s.item[e.item] = ref_update(w.v1, w.v2, w.v3, w.v4, p.activation, dt_i, g_old, f_old, e.context);
  s.last_user[e.user] = e.time;
  s.last_item[e.item] = e.time;
}

std::vector<RefState> ref_trajectory(const RefState& entry, const ModelParams& params,
                                     const std::vector<Event>& events) {
  std::vector<RefState> traj;
  RefState s = entry;
  for (const Event& e : events) {
    ref_apply(s, params, e);
    traj.push_back(s);
  }
  return traj;
}

double ref_dot(const Vec& a, const Vec& b) {
  double s = 0.0;
  for (std::size_t c = 0; c < a.size(); ++c) s += a[c] * b[c];
  return s;
}

double ref_clamp_dot(const Vec& a, const Vec& b) {
  return std::clamp(ref_dot(a, b), -30.0, 30.0);
}

double ref_intensity(const RefState& entry, const std::vector<RefState>& traj,
                     const std::vector<Event>& events, UserId u, ItemId i, double tau) {
  const std::size_t count = latest_snapshot(events, tau);
  const RefState& s = count == 0 ? entry : traj[count - 1];
  const double t_prime = std::max(s.last_user[u], s.last_item[i]);
  return std::exp(ref_clamp_dot(s.user[u], s.item[i])) * (tau - t_prime);
}

double ref_objective(const RefState& entry, const ModelParams& params,
                     const std::vector<Event>& events, const std::vector<SurvivalDim>& dims,
                     double span_begin, double span_end) {
  const auto traj = ref_trajectory(entry, params, events);
  double total = 0.0;
  for (std::size_t j = 0; j < events.size(); ++j) {
    const Event& e = events[j];
    const RefState& before = j == 0 ? entry : traj[j - 1];
    double lapse = e.time - std::max(before.last_user[e.user], before.last_item[e.item]);
    if (lapse <= 0.0) lapse = kTieEpsilon;
    total -= ref_clamp_dot(before.user[e.user], before.item[e.item]) + std::log(lapse);
  }

  std::vector<double> cuts{span_begin, span_end};
  for (const Event& e : events) cuts.push_back(e.time);
  std::sort(cuts.begin(), cuts.end());
  cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());
  for (const SurvivalDim& dim : dims) {
    for (std::size_t c = 0; c + 1 < cuts.size(); ++c) {
      const double a = cuts[c];
      const double b = cuts[c + 1];
      const std::size_t count = latest_snapshot(events, a);
      const RefState& s = count == 0 ? entry : traj[count - 1];
      const double t_prime = std::max(s.last_user[dim.user], s.last_item[dim.item]);
      const double alpha = std::exp(ref_clamp_dot(s.user[dim.user], s.item[dim.item]));
      total += dim.weight * alpha * 0.5 * ((b - t_prime) * (b - t_prime) - (a - t_prime) * (a - t_prime));
    }
  }
  return total;
}

double quadrature(const std::function<double(double)>& f, double a, double b,
                  std::vector<double> breaks) {
  breaks.push_back(a);
  breaks.push_back(b);
  std::sort(breaks.begin(), breaks.end());
  breaks.erase(std::unique(breaks.begin(), breaks.end()), breaks.end());
  double total = 0.0;
  for (std::size_t s = 0; s + 1 < breaks.size(); ++s) {
    const double lo = std::max(a, breaks[s]);
    const double hi = std::min(b, breaks[s + 1]);
    if (hi <= lo) continue;
    // Evaluate strictly inside the piece so the step function is read on the right side.
    total += boost::math::quadrature::gauss_kronrod<double, 31>::integrate(
        [&](double x) { return f(std::clamp(x, lo, hi)); }, lo, hi, 15, 1e-14);
  }
  return total;
}

Eigen::VectorXd finite_difference_gradient(const ModelParams& params,
                                           const std::function<double(const ModelParams&)>& loss,
                                           double rel) {
  const Eigen::VectorXd theta = params.weights.flatten();
  Eigen::VectorXd grad(theta.size());
  ModelParams probe = params;
  const auto at = [&](Eigen::Index p, double x) {
    Eigen::VectorXd shifted = theta;
    shifted[p] = x;
    probe.weights.assign_flat(shifted);
    return loss(probe);
  };
  for (Eigen::Index p = 0; p < theta.size(); ++p) {
    const double h = rel * std::max(1.0, std::abs(theta[p]));
    const double d1 = at(p, theta[p] + h) - at(p, theta[p] - h);
    const double d2 = at(p, theta[p] + 2.0 * h) - at(p, theta[p] - 2.0 * h);
    grad[p] = (8.0 * d1 - d2) / (12.0 * h);
  }
  return grad;
}

WindowInstance random_window(std::mt19937_64& rng, int k, std::size_t num_events,
                             Activation act) {
  std::uniform_int_distribution<std::size_t> users(2, 3);
  std::uniform_int_distribution<std::size_t> items(2, 4);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const std::size_t m = users(rng);
  const std::size_t n = items(rng);
  const int d = unit(rng) < 0.5 ? 0 : 2;

  WindowInstance w;
  w.params = random_params(k, d, act, 1.5, rng);
  w.entry = DynamicState::zeros(m, n, k);
  const double lo = act == Activation::kTanh ? -1.0 : 0.0;
  for (Eigen::Index r = 0; r < w.entry.user.size(); ++r)
    w.entry.user.data()[r] = lo + (1.0 - lo) * unit(rng);
  for (Eigen::Index r = 0; r < w.entry.item.size(); ++r)
    w.entry.item.data()[r] = lo + (1.0 - lo) * unit(rng);
  for (Eigen::Index r = 0; r < w.entry.last_user_time.size(); ++r) w.entry.last_user_time[r] = unit(rng);
  for (Eigen::Index r = 0; r < w.entry.last_item_time.size(); ++r) w.entry.last_item_time[r] = unit(rng);
  w.entry.frontier = std::max(w.entry.last_user_time.maxCoeff(), w.entry.last_item_time.maxCoeff());

  std::vector<double> times(num_events);
  for (double& t : times) t = 1.0 + 3.0 * unit(rng);
  std::sort(times.begin(), times.end());
  std::uniform_int_distribution<std::size_t> pick_u(0, m - 1);
  std::uniform_int_distribution<std::size_t> pick_i(0, n - 1);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (double t : times) {
    Event e{pick_u(rng), pick_i(rng), t, Eigen::VectorXd(d)};
    for (int c = 0; c < d; ++c) e.context[c] = normal(rng);
    w.events.push_back(std::move(e));
  }
  for (const Event& e : w.events) {
    const bool seen = std::any_of(w.dims.begin(), w.dims.end(), [&](const SurvivalDim& s) {
      return s.user == e.user && s.item == e.item;
    });
    if (!seen) w.dims.push_back({e.user, e.item, 1.0});
  }
  for (UserId u = 0; u < m; ++u)
    for (ItemId i = 0; i < n; ++i) {
      const bool seen = std::any_of(w.dims.begin(), w.dims.end(), [&](const SurvivalDim& s) {
        return s.user == u && s.item == i;
      });
      if (!seen && unit(rng) < 0.5) w.dims.push_back({u, i, 0.5 + 2.0 * unit(rng)});
    }
  w.span_begin = w.events.empty() ? 1.0 : w.events.front().time;
  w.span_end = w.events.empty() ? 1.0 : w.events.back().time;
  return w;
}

GradientCheck check_window_gradient(const WindowInstance& w, double floor_per_unit_loss) {
  const auto loss = [&](const ModelParams& p) {
    return build_window_graph(w.events, w.entry, p, w.dims,
                              w.span_begin, w.span_end)
        .loss()
        .total;
  };
  const CompGraph graph = build_window_graph(w.events, w.entry, w.params, w.dims, w.span_begin,
                                             w.span_end);
  const Eigen::VectorXd analytic = graph.backward().grads.flatten();
  const double floor = floor_per_unit_loss * std::max(1.0, std::abs(graph.loss().total));
  const Eigen::VectorXd numeric = finite_difference_gradient(w.params, loss);
  GradientCheck out;
  out.entries = analytic.size();
  for (Eigen::Index p = 0; p < analytic.size(); ++p)
    out.max_error = std::max(out.max_error, relative_error(analytic[p], numeric[p], floor));
  return out;
}

SimConfig preference_sim(std::uint64_t seed) {
  SimConfig sim;
  sim.num_users = 10;
  sim.num_items = 20;
  sim.k = 4;
  sim.context_mode = ContextMode::kGaussian;
  sim.context_dim = 2;
  sim.horizon = 1e9;
  sim.max_events = 2000;
  sim.seed = seed;
  std::mt19937_64 rng(seed + 50);
  ModelParams p = ModelParams::random_uniform(4, 2, Activation::kTanh, 0.5, rng);
  const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(4, 4);
  p.weights.w2 += eye;
  p.weights.v2 += eye;
  p.weights.w3 += 2.0 * eye;
  p.weights.v3 += 2.0 * eye;
  p.weights.w4 *= 2.0;
  p.weights.v4 *= 2.0;
  sim.params = p;
  return sim;
}

TrainConfig preference_train_config() {
  TrainConfig cfg;
  cfg.epochs = 100;
  cfg.learning_rate = 0.01;
  cfg.window_size = 64;
  cfg.init_scale = 1.0;
  cfg.seed = 1;
  return cfg;
}

double relative_error(double a, double b, double floor) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

double ks_pvalue(double statistic, double effective_n) {
  const double root = std::sqrt(effective_n);
  const double lambda = (root + 0.12 + 0.11 / root) * statistic;
  if (lambda < 1e-3) return 1.0;
  double sum = 0.0;
  for (int j = 1; j <= 200; ++j) {
    const double term = std::exp(-2.0 * j * j * lambda * lambda);
    sum += (j % 2 == 1 ? 2.0 : -2.0) * term;
    if (term < 1e-16) break;
  }
  return std::clamp(sum, 0.0, 1.0);
}

double ks_one_sample(std::vector<double> samples, const std::function<double(double)>& cdf) {
  std::sort(samples.begin(), samples.end());
  const auto n = static_cast<double>(samples.size());
  double d = 0.0;
  for (std::size_t s = 0; s < samples.size(); ++s) {
    const double f = cdf(samples[s]);
    d = std::max({d, static_cast<double>(s + 1) / n - f, f - static_cast<double>(s) / n});
  }
  return d;
}

double ks_two_sample(std::vector<double> a, std::vector<double> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    const double x = std::min(a[i], b[j]);
    while (i < a.size() && a[i] <= x) ++i;
    while (j < b.size() && b[j] <= x) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / static_cast<double>(a.size()) -
                             static_cast<double>(j) / static_cast<double>(b.size())));
  }
  return d;
}

double ks_two_sample_pvalue(const std::vector<double>& a, const std::vector<double>& b) {
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  return ks_pvalue(ks_two_sample(a, b), na * nb / (na + nb));
}

double chi_square_pvalue(const std::vector<double>& observed, const std::vector<double>& expected) {
  double stat = 0.0;
  for (std::size_t c = 0; c < observed.size(); ++c) {
    const double diff = observed[c] - expected[c];
    stat += diff * diff / expected[c];
  }
  const boost::math::chi_squared_distribution<double> dist(static_cast<double>(observed.size() - 1));
  return boost::math::cdf(boost::math::complement(dist, stat));
}

double rayleigh_cdf(double alpha, double x) {
  return x <= 0.0 ? 0.0 : 1.0 - std::exp(-0.5 * alpha * x * x);
}

}  // namespace coevolve::testing
