#include "coevolve/event_store.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "coevolve/errors.hpp"
#include "test_support.hpp"

namespace coevolve {
namespace {

namespace fs = std::filesystem;

class TempDir {
 public:
  TempDir() {
    path_ = fs::temp_directory_path() /
            ("coevolve_es_" + std::to_string(std::random_device{}()));
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  fs::path file(const std::string& name, const std::string& content) const {
    std::ofstream(path_ / name) << content;
    return path_ / name;
  }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

Event ev(UserId u, ItemId i, double t) { return {u, i, t, {}}; }

TEST(EventStoreTest, ParsesThreeRowFile) {
  TempDir dir;
  const auto path = dir.file("e.csv", "0,1,1.0\n1,0,2.0\n0,0,3.0\n");
  const EventLog log = load_event_log(path, 2, 2);
  EXPECT_EQ(log.size(), 3u);
  EXPECT_DOUBLE_EQ(log.horizon(), 3.0);
  EXPECT_EQ(log.context_dim(), 0u);
  EXPECT_EQ(log[1].user, 1u);
}

TEST(EventStoreTest, HeaderIsOptionalAndContextParsed) {
  TempDir dir;
  const auto path = dir.file("e.csv", "user_id,item_id,time,c_1,c_2\n0,0,0.5,1.5,-2\n1,1,1.0,0,3\n");
  const EventLog log = load_event_log(path, 2, 2);
  ASSERT_EQ(log.size(), 2u);
  EXPECT_EQ(log.context_dim(), 2u);
  EXPECT_DOUBLE_EQ(log[0].context[1], -2.0);
}

TEST(EventStoreTest, EmptyFileGivesEmptyLog) {
  TempDir dir;
  const EventLog log = load_event_log(dir.file("e.csv", ""), 3, 3);
  EXPECT_TRUE(log.empty());
  EXPECT_EQ(log.num_users(), 3u);
}

TEST(EventStoreTest, IptvShapedMetadataParsesWithoutContext) {
  TempDir dir;
  const auto path = dir.file("iptv.csv", "0,0,0.25\n7099,435,10.5\n3000,200,4.0\n");
  const EventLog log = load_event_log(path, 7100, 436);
  EXPECT_EQ(log.num_users(), 7100u);
  EXPECT_EQ(log.num_items(), 436u);
  EXPECT_EQ(log.context_dim(), 0u);
}

TEST(EventStoreTest, RejectsBadRows) {
  TempDir dir;
  EXPECT_THROW(load_event_log(dir.file("a.csv", "0,1\n"), 2, 2), DataError);
  EXPECT_THROW(load_event_log(dir.file("b.csv", "0,x,1.0\n"), 2, 2), DataError);
  EXPECT_THROW(load_event_log(dir.file("c.csv", "0,5,1.0\n"), 2, 2), DataError);
  EXPECT_THROW(load_event_log(dir.file("d.csv", "2,0,1.0\n"), 2, 2), DataError);
  EXPECT_THROW(load_event_log(dir.file("e.csv", "0,0,-1.0\n"), 2, 2), DataError);
  EXPECT_THROW(load_event_log(dir.file("f.csv", "0,0,1.0,2\n0,0,2.0\n"), 2, 2), DataError);
  EXPECT_THROW(load_event_log(dir.path() / "missing.csv", 2, 2), DataError);
}

TEST(EventStoreTest, SortsStablyByTime) {
  const EventLog log({ev(0, 0, 3.0), ev(1, 0, 1.0), ev(0, 1, 1.0), ev(1, 1, 0.5)}, 2, 2);
  ASSERT_EQ(log.size(), 4u);
  EXPECT_DOUBLE_EQ(log[0].time, 0.5);
  // tie at t=1: file order kept
  EXPECT_EQ(log[1].user, 1u);
  EXPECT_EQ(log[2].user, 0u);
  EXPECT_EQ(log[2].item, 1u);
}

TEST(EventStoreTest, CsvAndSidecarRoundTrip) {
  TempDir dir;
  std::mt19937_64 rng(3);
  testing::RandomLogShape shape{4, 5, 30, 2, 12.0, 0.2};
  const EventLog log = testing::random_log(shape, rng);
  write_event_log(dir.path() / "events.csv", log);
  const EventLog back = load_event_log(dir.path() / "events.csv");
  ASSERT_EQ(back.size(), log.size());
  EXPECT_EQ(back.horizon(), log.horizon());
  EXPECT_EQ(back.context_dim(), 2u);
  for (std::size_t j = 0; j < log.size(); ++j) {
    EXPECT_EQ(back[j].user, log[j].user);
    EXPECT_EQ(back[j].item, log[j].item);
    EXPECT_EQ(back[j].time, log[j].time);
    EXPECT_EQ(back[j].context, log[j].context);
  }
}

TEST(EventStoreTest, SplitByThreshold) {
  std::vector<Event> events;
  for (int t = 1; t <= 10; ++t) events.push_back(ev(0, 0, t));
  const EventLog log(std::move(events), 1, 1, 10.0);
  const auto [train, test] = split_by_proportion(log, 0.7);
  EXPECT_EQ(train.size(), 7u);
  EXPECT_EQ(test.size(), 3u);
  EXPECT_DOUBLE_EQ(train.horizon(), 7.0);
  EXPECT_DOUBLE_EQ(test.horizon(), 10.0);
}

TEST(EventStoreTest, SplitSweepAndErrors) {
  std::mt19937_64 rng(5);
  const EventLog log = testing::random_log({3, 3, 200, 0, 50.0, 0.0}, rng);
  const std::vector<double> ps{0.7, 0.72, 0.74, 0.76, 0.78};
  std::size_t previous = 0;
  for (double p : ps) {
    const auto [train, test] = split_by_proportion(log, p);
    EXPECT_GE(train.size(), previous);
    previous = train.size();
    EXPECT_EQ(train.size() + test.size(), log.size());
  }
  EXPECT_THROW(split_by_proportion(log, 0.0), ConfigError);
  EXPECT_THROW(split_by_proportion(log, 1.0), ConfigError);
}

TEST(EventStoreTest, SplitWithEverythingBeforeCutHasEmptyTest) {
  const EventLog log({ev(0, 0, 1.0), ev(0, 0, 2.0)}, 1, 1, 10.0);
  const auto [train, test] = split_by_proportion(log, 0.5);
  EXPECT_EQ(train.size(), 2u);
  EXPECT_TRUE(test.empty());
}

TEST(EventStoreTest, RelevantTimesMerge) {
  // u=0 at {2,5}, i=0 at {3}
  const EventLog log({ev(0, 1, 2.0), ev(1, 0, 3.0), ev(0, 2, 5.0), ev(1, 1, 4.0)}, 2, 3, 10.0);
  EXPECT_EQ(relevant_times(log, 0, 0, 0.0, 10.0), (std::vector<double>{0, 2, 3, 5, 10}));
  EXPECT_EQ(relevant_times(log, 0, 0, 3.5, 4.5), (std::vector<double>{3.5, 4.5}));
}

TEST(EventStoreTest, RelevantTimesSharedEventAppearsOnce) {
  const EventLog log({ev(0, 0, 2.0), ev(1, 1, 3.0)}, 2, 2, 10.0);
  const auto times = relevant_times(log, 0, 0, 0.0, 10.0);
  EXPECT_EQ(times, (std::vector<double>{0, 2, 10}));
  // brute scan of the log
  std::vector<double> brute{0.0};
  for (const Event& e : log.events())
    if (e.user == 0 || e.item == 0) brute.push_back(e.time);
  brute.push_back(10.0);
  EXPECT_EQ(times, brute);
}

// Property: projections re-merge into the global log; relevant_times is
// strictly increasing, brackets the window and matches a brute-force scan.
TEST(EventStoreTest, ProjectionAndBreakpointProperties) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 100; ++trial) {
    testing::RandomLogShape shape{static_cast<std::size_t>(1 + trial % 4), static_cast<std::size_t>(1 + trial % 5), static_cast<std::size_t>(trial % 25),
                                0, 20.0, 0.3};
    const EventLog log = testing::random_log(shape, rng);
    std::vector<std::size_t> merged;
    for (UserId u = 0; u < log.num_users(); ++u)
      for (std::size_t j : log.user_events(u)) merged.push_back(j);
    std::sort(merged.begin(), merged.end());
    for (std::size_t j = 0; j < merged.size(); ++j) ASSERT_EQ(merged[j], j);

    std::uniform_real_distribution<double> t(0.0, 20.0);
    double a = t(rng), b = t(rng);
    if (a > b) std::swap(a, b);
    const UserId u = trial % shape.num_users;
    const ItemId i = (trial / 2) % shape.num_items;
    const auto times = relevant_times(log, u, i, a, b);
    ASSERT_GE(times.size(), 1u);
    EXPECT_EQ(times.front(), a);
    EXPECT_EQ(times.back(), b);
    for (std::size_t s = 1; s < times.size(); ++s) EXPECT_LT(times[s - 1], times[s]);
    std::vector<double> brute{a, b};
    for (const Event& e : log.events())
      if ((e.user == u || e.item == i) && e.time >= a && e.time <= b) brute.push_back(e.time);
    std::sort(brute.begin(), brute.end());
    brute.erase(std::unique(brute.begin(), brute.end()), brute.end());
    EXPECT_EQ(times, brute);

    const double p = 0.3 + 0.4 * (trial % 7) / 7.0;
    const auto [train, test] = split_by_proportion(log, p);
    EXPECT_EQ(train.size() + test.size(), log.size());
    if (!train.empty() && !test.empty()) {
      EXPECT_LE(train[train.size() - 1].time, log.horizon() * p);
      EXPECT_GT(test[0].time, log.horizon() * p);
    }
  }
}

}  // namespace
}  // namespace coevolve
