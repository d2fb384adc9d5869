#include "coevolve/eval_harness.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <unordered_set>

#include "coevolve/coevolve_state.hpp"
#include "coevolve/errors.hpp"
#include "coevolve/predictor.hpp"

namespace coevolve {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double mean_or_nan(double sum, std::size_t count) {
  return count == 0 ? kNaN : sum / static_cast<double>(count);
}

nlohmann::json number_or_null(double x) {
  return std::isfinite(x) ? nlohmann::json(x) : nlohmann::json(nullptr);
}

std::uint64_t pair_key(UserId u, ItemId i) { return (static_cast<std::uint64_t>(u) << 32) | i; }

}  // namespace

Evaluation evaluate(const EventLog& train, const EventLog& test, const ModelParams& params,
                    const EvalConfig& cfg) {
  if (train.num_users() != test.num_users() || train.num_items() != test.num_items() ||
      (!train.empty() && !test.empty() && train.context_dim() != test.context_dim()))
    throw DataError("train and test logs disagree on m, n or d");
  if (!train.empty() && !test.empty() && test[0].time < train[train.size() - 1].time)
    throw DataError("test log starts before the end of the training log");
  if (cfg.time_bins < 1) throw ConfigError("time_bins must be >= 1");

  DynamicState state = DynamicState::zeros(train.num_users(), train.num_items(), params.k());
  replay_into(state, params, train.events());

  std::unordered_set<std::uint64_t> train_pairs;
  for (const Event& e : train.events()) train_pairs.insert(pair_key(e.user, e.item));
  std::unordered_set<std::uint64_t> seen_pairs = train_pairs;

  const auto bins = static_cast<std::size_t>(cfg.time_bins);
  const double bin_begin = train.horizon();
  const double bin_width = (test.horizon() - bin_begin) / static_cast<double>(bins);

  Evaluation out;
  Metrics& m = out.metrics;
  std::vector<double> bin_sum(bins, 0.0);
  m.per_bin_count.assign(bins, 0);
  double rank_sum = 0.0, rank_sq = 0.0, abs_err = 0.0, rec_rank = 0.0, rec_err = 0.0;

  const auto& events = test.events();
  for (std::size_t first = 0; first < events.size();) {
    std::size_t last = first;
    while (last < events.size() && events[last].time == events[first].time) ++last;

    for (std::size_t j = first; j < last; ++j) {
      const Event& e = events[j];
      EventPrediction p;
      p.user = e.user;
      p.item = e.item;
      p.time = e.time;
      p.recurring = train_pairs.contains(pair_key(e.user, e.item));
      p.rank = rank_items(state, e.user, e.time).competition_rank(e.item);
      if (cfg.predict_time && seen_pairs.contains(pair_key(e.user, e.item)))
        p.predicted_time = predict_return_time(state, e.user, e.item, e.time);
      p.bin = bin_width > 0.0
                  ? static_cast<int>(std::min<double>(static_cast<double>(bins - 1),
                                                      std::floor((e.time - bin_begin) / bin_width)))
                  : 0;
      p.bin = std::max(p.bin, 0);

      const auto r = static_cast<double>(p.rank);
      rank_sum += r;
      rank_sq += r * r;
      ++m.ranked_count;
      bin_sum[static_cast<std::size_t>(p.bin)] += r;
      ++m.per_bin_count[static_cast<std::size_t>(p.bin)];
      if (p.predicted_time) {
        const double err = std::abs(*p.predicted_time - e.time);
        abs_err += err;
        ++m.timed_count;
        if (p.recurring) {
          rec_err += err;
          ++m.recurring_timed_count;
        }
      } else if (cfg.predict_time) {
        ++m.cold_start_excluded;
      }
      if (p.recurring) {
        rec_rank += r;
        ++m.recurring_count;
      }
      if (cfg.keep_details) out.details.push_back(p);
    }
    for (std::size_t j = first; j < last; ++j) {
      apply_event(state, params, events[j]);
      seen_pairs.insert(pair_key(events[j].user, events[j].item));
    }
    first = last;
  }

  m.mar = mean_or_nan(rank_sum, m.ranked_count);
  if (m.ranked_count > 1) {
    const auto n = static_cast<double>(m.ranked_count);
    const double var = std::max(0.0, (rank_sq - rank_sum * rank_sum / n) / (n - 1.0));
    m.mar_stderr = std::sqrt(var / n);
  } else {
    m.mar_stderr = kNaN;
  }
  m.mae_hours = mean_or_nan(abs_err, m.timed_count);
  m.per_bin_mar.resize(bins);
  for (std::size_t b = 0; b < bins; ++b) m.per_bin_mar[b] = mean_or_nan(bin_sum[b], m.per_bin_count[b]);
  m.recurring_mar = mean_or_nan(rec_rank, m.recurring_count);
  m.recurring_mae = mean_or_nan(rec_err, m.recurring_timed_count);
  return out;
}

Metrics mean_metrics(std::span<const Metrics> rows) {
  Metrics out;
  if (rows.empty()) return out;
  auto mean_of = [&](auto field) {
    double sum = 0.0;
    std::size_t count = 0;
    for (const Metrics& r : rows) {
      const double x = field(r);
      if (std::isfinite(x)) {
        sum += x;
        ++count;
      }
    }
    return mean_or_nan(sum, count);
  };
  out.mar = mean_of([](const Metrics& r) { return r.mar; });
  out.mar_stderr = mean_of([](const Metrics& r) { return r.mar_stderr; });
  out.mae_hours = mean_of([](const Metrics& r) { return r.mae_hours; });
  out.recurring_mar = mean_of([](const Metrics& r) { return r.recurring_mar; });
  out.recurring_mae = mean_of([](const Metrics& r) { return r.recurring_mae; });
  const std::size_t bins = rows.front().per_bin_mar.size();
  out.per_bin_mar.resize(bins);
  out.per_bin_count.assign(bins, 0);
  for (std::size_t b = 0; b < bins; ++b)
    out.per_bin_mar[b] = mean_of([b](const Metrics& r) { return r.per_bin_mar[b]; });
  for (const Metrics& r : rows) {
    out.ranked_count += r.ranked_count;
    out.timed_count += r.timed_count;
    out.cold_start_excluded += r.cold_start_excluded;
    out.recurring_count += r.recurring_count;
    out.recurring_timed_count += r.recurring_timed_count;
    for (std::size_t b = 0; b < bins && b < r.per_bin_count.size(); ++b)
      out.per_bin_count[b] += r.per_bin_count[b];
  }
  return out;
}

SweepResult sweep_splits(const EventLog& log, const TrainConfig& train_cfg,
                         std::span<const double> proportions, const EvalConfig& eval_cfg) {
  for (double p : proportions)
    if (!(p > 0.0 && p < 1.0)) throw ConfigError("split proportions must lie in (0, 1)");
  SweepResult out;
  std::vector<Metrics> rows;
  for (double p : proportions) {
    auto [train_log, test_log] = split_by_proportion(log, p);
    const TrainResult trained = train(train_log, train_cfg);
    SplitResult row{p, train_log.size(), test_log.size(),
                    evaluate(train_log, test_log, trained.params, eval_cfg).metrics};
    rows.push_back(row.metrics);
    out.splits.push_back(std::move(row));
  }
  out.mean = mean_metrics(rows);
  return out;
}

nlohmann::json metrics_to_json(const Metrics& m) {
  nlohmann::json j;
  j["mar"] = number_or_null(m.mar);
  j["mar_stderr"] = number_or_null(m.mar_stderr);
  j["mae_hours"] = number_or_null(m.mae_hours);
  j["ranked_count"] = m.ranked_count;
  j["timed_count"] = m.timed_count;
  j["cold_start_excluded"] = m.cold_start_excluded;
  j["per_bin_mar"] = nlohmann::json::array();
  for (double x : m.per_bin_mar) j["per_bin_mar"].push_back(number_or_null(x));
  j["per_bin_count"] = m.per_bin_count;
  j["recurring_mar"] = number_or_null(m.recurring_mar);
  j["recurring_mae"] = number_or_null(m.recurring_mae);
  j["recurring_count"] = m.recurring_count;
  j["recurring_timed_count"] = m.recurring_timed_count;
  return j;
}

void write_metrics_csv(const std::filesystem::path& path, std::span<const SplitResult> splits,
                       const Metrics& mean) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out.precision(17);
  out << "split,proportion,train_events,test_events,mar,mar_stderr,mae_hours,recurring_mar,"
         "recurring_mae,ranked_count,timed_count,cold_start_excluded,recurring_count\n";
  // non-finite values become empty fields
  auto num = [&](double x) -> std::ostream& {
    if (std::isfinite(x)) out << x;
    return out;
  };
  auto row = [&](const std::string& label, double p, std::size_t ntrain, std::size_t ntest,
                 const Metrics& m) {
    out << label << ',';
    num(p) << ',' << ntrain << ',' << ntest << ',';
    num(m.mar) << ',';
    num(m.mar_stderr) << ',';
    num(m.mae_hours) << ',';
    num(m.recurring_mar) << ',';
    num(m.recurring_mae) << ',' << m.ranked_count << ',' << m.timed_count << ','
                         << m.cold_start_excluded << ',' << m.recurring_count << '\n';
  };
  for (std::size_t s = 0; s < splits.size(); ++s)
    row(std::to_string(s), splits[s].proportion, splits[s].train_events, splits[s].test_events,
        splits[s].metrics);
  if (splits.size() > 1) {
    std::size_t ntrain = 0, ntest = 0;
    for (const SplitResult& r : splits) {
      ntrain += r.train_events;
      ntest += r.test_events;
    }
    row("mean", kNaN, ntrain, ntest, mean);
  }
}

void write_predictions_csv(const std::filesystem::path& path,
                           std::span<const EventPrediction> details) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out.precision(17);
  out << "user,time,true_item,rank,predicted_time,recurring,bin\n";
  for (const EventPrediction& p : details) {
    out << p.user << ',' << p.time << ',' << p.item << ',' << p.rank << ',';
    if (p.predicted_time) out << *p.predicted_time;
    out << ',' << (p.recurring ? 1 : 0) << ',' << p.bin << '\n';
  }
}

}  // namespace coevolve
