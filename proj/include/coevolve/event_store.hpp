#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace coevolve {

using UserId = std::size_t;
using ItemId = std::size_t;

// One user-item interaction. Times are in hours.
struct Event {
  UserId user = 0;
  ItemId item = 0;
  double time = 0.0;
  Eigen::VectorXd context;  // empty when the log carries no context
};

struct LogMetadata {
  std::size_t num_users = 0;
  std::size_t num_items = 0;
  std::size_t context_dim = 0;
  double horizon = 0.0;
};

// Time-ordered, validated event stream with per-user and per-item projections.
// Immutable once constructed.
class EventLog {
 public:
  EventLog() = default;

  // Validates ids, times and context dimensions, then stable-sorts by time.
  // A negative horizon means "use the largest event time".
  EventLog(std::vector<Event> events, std::size_t num_users, std::size_t num_items,
           double horizon = -1.0);

  const std::vector<Event>& events() const { return events_; }
  const Event& operator[](std::size_t j) const { return events_[j]; }
  std::size_t size() const { return events_.size(); }
  bool empty() const { return events_.empty(); }

  std::size_t num_users() const { return num_users_; }
  std::size_t num_items() const { return num_items_; }
  std::size_t context_dim() const { return context_dim_; }
  double horizon() const { return horizon_; }
  LogMetadata metadata() const { return {num_users_, num_items_, context_dim_, horizon_}; }

  // Global event indices touching the entity, in global order.
  std::span<const std::size_t> user_events(UserId u) const { return by_user_[u]; }
  std::span<const std::size_t> item_events(ItemId i) const { return by_item_[i]; }

  // Copy of a contiguous range [first, last) as its own log (same m, n, d).
  EventLog slice(std::size_t first, std::size_t last, double horizon) const;

 private:
  std::vector<Event> events_;
  std::size_t num_users_ = 0;
  std::size_t num_items_ = 0;
  std::size_t context_dim_ = 0;
  double horizon_ = 0.0;
  std::vector<std::vector<std::size_t>> by_user_;
  std::vector<std::vector<std::size_t>> by_item_;
};

// Parses `user_id,item_id,time[,c_1..c_d]` rows; the header line is optional.
EventLog load_event_log(const std::filesystem::path& path, std::size_t num_users,
                        std::size_t num_items);

// Same as above, taking m, n and the horizon from the JSON sidecar next to the CSV.
EventLog load_event_log(const std::filesystem::path& path);

// Sidecar path for an event CSV: same stem, `.json` extension.
std::filesystem::path sidecar_path(const std::filesystem::path& csv_path);

LogMetadata read_sidecar(const std::filesystem::path& json_path);
void write_sidecar(const std::filesystem::path& json_path, const LogMetadata& meta);

// Writes CSV with round-trip exact numbers, plus the sidecar.
void write_event_log(const std::filesystem::path& csv_path, const EventLog& log);

// Train holds events with time <= T*p (horizon T*p); test holds the rest (horizon T).
std::pair<EventLog, EventLog> split_by_proportion(const EventLog& log, double p);

// Breakpoints of the (u, i) intensity on [window_begin, window_end]: the window
// start, every distinct event time inside it touching u or i, and the window end.
std::vector<double> relevant_times(const EventLog& log, UserId u, ItemId i,
                                   double window_begin, double window_end);

// Time of the latest event touching u or i at or before t; 0 if there is none.
double last_change_time(const EventLog& log, UserId u, ItemId i, double t);

}  // namespace coevolve
