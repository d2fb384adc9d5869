#include "coevolve/event_store.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>

#include <json.hpp>

#include "coevolve/errors.hpp"

namespace coevolve {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    fields.push_back(trim(line.substr(start, comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return fields;
}

template <typename T>
bool parse_number(std::string_view s, T& out) {
  if (s.empty()) return false;
  if (s.front() == '+') s.remove_prefix(1);
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

std::string format_double(double x) {
  char buf[32];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, ptr);
}

}  // namespace

EventLog::EventLog(std::vector<Event> events, std::size_t num_users, std::size_t num_items,
                   double horizon)
    : events_(std::move(events)), num_users_(num_users), num_items_(num_items) {
  if (!events_.empty()) context_dim_ = static_cast<std::size_t>(events_.front().context.size());
  double max_time = 0.0;
  for (std::size_t j = 0; j < events_.size(); ++j) {
    const Event& e = events_[j];
    if (e.user >= num_users_)
      throw DataError("event " + std::to_string(j) + ": user id " + std::to_string(e.user) +
                      " out of range (m=" + std::to_string(num_users_) + ")");
    if (e.item >= num_items_)
      throw DataError("event " + std::to_string(j) + ": item id " + std::to_string(e.item) +
                      " out of range (n=" + std::to_string(num_items_) + ")");
    if (!std::isfinite(e.time) || e.time < 0.0)
      throw DataError("event " + std::to_string(j) + ": time must be finite and >= 0");
    if (static_cast<std::size_t>(e.context.size()) != context_dim_)
      throw DataError("event " + std::to_string(j) + ": context dimension " +
                      std::to_string(e.context.size()) + " differs from " +
                      std::to_string(context_dim_));
    if (!e.context.allFinite())
      throw DataError("event " + std::to_string(j) + ": non-finite context value");
    max_time = std::max(max_time, e.time);
  }
  if (horizon < 0.0) {
    horizon_ = max_time;
  } else {
    if (!std::isfinite(horizon) || horizon < max_time)
      throw DataError("horizon " + format_double(horizon) + " precedes the last event time " +
                      format_double(max_time));
    horizon_ = horizon;
  }

  std::stable_sort(events_.begin(), events_.end(),
                   [](const Event& a, const Event& b) { return a.time < b.time; });

  by_user_.assign(num_users_, {});
  by_item_.assign(num_items_, {});
  for (std::size_t j = 0; j < events_.size(); ++j) {
    by_user_[events_[j].user].push_back(j);
    by_item_[events_[j].item].push_back(j);
  }
}

EventLog EventLog::slice(std::size_t first, std::size_t last, double horizon) const {
  std::vector<Event> part(events_.begin() + static_cast<std::ptrdiff_t>(first),
                          events_.begin() + static_cast<std::ptrdiff_t>(last));
  EventLog out(std::move(part), num_users_, num_items_, horizon);
  out.context_dim_ = context_dim_;
  return out;
}

EventLog load_event_log(const std::filesystem::path& path, std::size_t num_users,
                        std::size_t num_items) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open event file " + path.string());

  std::vector<Event> events;
  std::string line;
  std::size_t line_no = 0;
  bool first_content_line = true;
  long context_dim = -1;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string_view view = trim(line);
    if (view.empty()) continue;
    const auto fields = split_fields(view);
    const std::string where = path.string() + ":" + std::to_string(line_no);

    Event e;
    double probe = 0.0;
    if (first_content_line && !parse_number(fields[0], probe)) {
      first_content_line = false;  // header row
      continue;
    }
    first_content_line = false;

    if (fields.size() < 3) throw DataError(where + ": expected at least 3 fields");
    if (!parse_number(fields[0], e.user)) throw DataError(where + ": bad user id");
    if (!parse_number(fields[1], e.item)) throw DataError(where + ": bad item id");
    if (!parse_number(fields[2], e.time)) throw DataError(where + ": bad time");
    if (e.time < 0.0) throw DataError(where + ": negative time");
    if (e.user >= num_users) throw DataError(where + ": user id out of range");
    if (e.item >= num_items) throw DataError(where + ": item id out of range");

    const long d = static_cast<long>(fields.size()) - 3;
    if (context_dim < 0) context_dim = d;
    if (d != context_dim) throw DataError(where + ": inconsistent context dimension");
    e.context.resize(d);
    for (long c = 0; c < d; ++c) {
      if (!parse_number(fields[static_cast<std::size_t>(c + 3)], e.context[c]))
        throw DataError(where + ": bad context value");
    }
    events.push_back(std::move(e));
  }
  return EventLog(std::move(events), num_users, num_items);
}

std::filesystem::path sidecar_path(const std::filesystem::path& csv_path) {
  auto p = csv_path;
  p.replace_extension(".json");
  return p;
}

LogMetadata read_sidecar(const std::filesystem::path& json_path) {
  std::ifstream in(json_path);
  if (!in) throw DataError("cannot open metadata sidecar " + json_path.string());
  try {
    const auto j = nlohmann::json::parse(in);
    LogMetadata meta;
    meta.num_users = j.at("m").get<std::size_t>();
    meta.num_items = j.at("n").get<std::size_t>();
    meta.context_dim = j.value("d", std::size_t{0});
    meta.horizon = j.value("T", -1.0);
    return meta;
  } catch (const nlohmann::json::exception& ex) {
    throw DataError("bad metadata sidecar " + json_path.string() + ": " + ex.what());
  }
}

void write_sidecar(const std::filesystem::path& json_path, const LogMetadata& meta) {
  nlohmann::json j;
  j["m"] = meta.num_users;
  j["n"] = meta.num_items;
  j["d"] = meta.context_dim;
  j["T"] = meta.horizon;
  std::ofstream out(json_path);
  if (!out) throw DataError("cannot write " + json_path.string());
  out << j.dump(2) << '\n';
}

EventLog load_event_log(const std::filesystem::path& path) {
  const LogMetadata meta = read_sidecar(sidecar_path(path));
  EventLog raw = load_event_log(path, meta.num_users, meta.num_items);
  if (!raw.empty() && raw.context_dim() != meta.context_dim)
    throw DataError("context dimension in " + path.string() + " disagrees with sidecar");
  std::vector<Event> events = raw.events();
  EventLog log(std::move(events), meta.num_users, meta.num_items, meta.horizon);
  return log;
}

void write_event_log(const std::filesystem::path& csv_path, const EventLog& log) {
  std::ofstream out(csv_path);
  if (!out) throw DataError("cannot write " + csv_path.string());
  out << "user_id,item_id,time";
  for (std::size_t c = 0; c < log.context_dim(); ++c) out << ",c_" << (c + 1);
  out << '\n';
  for (const Event& e : log.events()) {
    out << e.user << ',' << e.item << ',' << format_double(e.time);
    for (Eigen::Index c = 0; c < e.context.size(); ++c) out << ',' << format_double(e.context[c]);
    out << '\n';
  }
  write_sidecar(sidecar_path(csv_path), log.metadata());
}

std::pair<EventLog, EventLog> split_by_proportion(const EventLog& log, double p) {
  if (!(p > 0.0 && p < 1.0)) throw ConfigError("split proportion must lie in (0, 1)");
  const double cut = log.horizon() * p;
  const auto& ev = log.events();
  const auto it = std::upper_bound(ev.begin(), ev.end(), cut,
                                   [](double t, const Event& e) { return t < e.time; });
  const auto n_train = static_cast<std::size_t>(it - ev.begin());
  return {log.slice(0, n_train, cut), log.slice(n_train, log.size(), log.horizon())};
}

namespace {

// Appends the times of `indices` that fall inside [lo, hi].
void collect_times(const EventLog& log, std::span<const std::size_t> indices, double lo,
                   double hi, std::vector<double>& out) {
  const auto& ev = log.events();
  auto it = std::lower_bound(indices.begin(), indices.end(), lo,
                             [&](std::size_t j, double t) { return ev[j].time < t; });
  for (; it != indices.end() && ev[*it].time <= hi; ++it) out.push_back(ev[*it].time);
}

}  // namespace

std::vector<double> relevant_times(const EventLog& log, UserId u, ItemId i, double window_begin,
                                   double window_end) {
  if (window_end < window_begin) throw ConfigError("window end precedes window start");
  std::vector<double> times{window_begin};
  collect_times(log, log.user_events(u), window_begin, window_end, times);
  collect_times(log, log.item_events(i), window_begin, window_end, times);
  times.push_back(window_end);
  std::sort(times.begin(), times.end());
  times.erase(std::unique(times.begin(), times.end()), times.end());
  return times;
}

double last_change_time(const EventLog& log, UserId u, ItemId i, double t) {
  const auto& ev = log.events();
  auto latest = [&](std::span<const std::size_t> indices) {
    auto it = std::upper_bound(indices.begin(), indices.end(), t,
                               [&](double x, std::size_t j) { return x < ev[j].time; });
    return it == indices.begin() ? 0.0 : ev[*(it - 1)].time;
  };
  return std::max(latest(log.user_events(u)), latest(log.item_events(i)));
}

}  // namespace coevolve
