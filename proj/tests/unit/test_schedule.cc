#include <gtest/gtest.h>

#include <nlohmann/json.hpp>
#include <random>

#include "sdlab/errors.h"
#include "sdlab/schedule.h"

namespace sdlab {
namespace {

SyncCalendar make(std::size_t L, std::size_t k, long H, long T, std::vector<long> taus,
                  FragmentPattern pat = FragmentPattern::kStrided) {
  return build_calendar(assign_offsets(partition(L, k, pat), H), T, taus);
}

TEST(Calendar, TwoFragmentWorkedExample) {
  const SyncCalendar c = make(4, 2, 100, 250, {0});
  const std::map<long, std::vector<std::size_t>> want = {
      {100, {0}}, {150, {1}}, {200, {0}}, {250, {1}}};
  EXPECT_EQ(c.sends(), want);
  for (const auto& [t, ps] : want) {
    ASSERT_EQ(c.receives_at(0, t).size(), 1u);
    EXPECT_EQ(c.receives_at(0, t)[0], (ReceiveEvent{ps[0], t}));
  }
  EXPECT_EQ(c.num_send_events(), 4u);
  EXPECT_TRUE(c.sends_at(101).empty());
}

TEST(Calendar, SingleFragmentIsPeriodic) {
  const SyncCalendar c = make(6, 6, 30, 200, {0, 0});
  std::map<long, std::vector<std::size_t>> want;
  for (long t = 30; t <= 200; t += 30) want[t] = {0};
  EXPECT_EQ(c.sends(), want);
  for (std::size_t m = 0; m < 2; ++m)
    for (const auto& [t, ps] : want) EXPECT_EQ(c.receives_at(m, t).size(), 1u);
}

TEST(Calendar, HeterogeneousDelaysShareSendStep) {
  const SyncCalendar c = make(4, 2, 100, 400, {1, 5});
  ASSERT_EQ(c.receives_at(0, 101).size(), 1u);
  EXPECT_EQ(c.receives_at(0, 101)[0], (ReceiveEvent{0, 100}));
  ASSERT_EQ(c.receives_at(1, 105).size(), 1u);
  EXPECT_EQ(c.receives_at(1, 105)[0], (ReceiveEvent{0, 100}));
  EXPECT_TRUE(c.receives_at(1, 101).empty());
}

TEST(Calendar, DelayMustBeBelowPeriod) {
  EXPECT_THROW(make(4, 2, 10, 100, {10}), ConfigError);
  EXPECT_THROW(make(4, 2, 10, 100, {-1}), ConfigError);
  try {
    make(4, 2, 10, 100, {0, 12});
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("< H"), std::string::npos) << e.what();
  }
}

TEST(Calendar, TailSendsAreFlushedAtLastStep) {
  const SyncCalendar c = make(4, 2, 10, 22, {3});
  // Fragment 1 (t_p = 5) sends at 15; fragment 0 sends at 10 and 20.
  EXPECT_EQ(c.receives_at(0, 13)[0], (ReceiveEvent{0, 10}));
  EXPECT_EQ(c.receives_at(0, 18)[0], (ReceiveEvent{1, 15}));
  ASSERT_EQ(c.receives_at(0, 22).size(), 1u);
  EXPECT_EQ(c.receives_at(0, 22)[0], (ReceiveEvent{0, 20}));
}

TEST(Calendar, NextSend) {
  const SyncCalendar c = make(4, 2, 100, 250, {0});
  EXPECT_EQ(c.next_send(0, 1), 100);
  EXPECT_EQ(c.next_send(1, 1), 150);
  EXPECT_EQ(c.next_send(0, 101), 200);
  EXPECT_EQ(c.next_send(1, 251), 350);
}

// Property sweep over random valid configurations, checked against a direct
// enumeration of the send rule.
TEST(Calendar, RandomConfigsMatchEnumerationAndInvariants) {
  std::mt19937_64 rng(20240);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t k = 1 + rng() % 4;
    const std::size_t P = 1 + rng() % 6;
    const std::size_t L = k * P;
    const long H = static_cast<long>(P) + static_cast<long>(rng() % 40);
    const long T = 1 + static_cast<long>(rng() % 400);
    const std::size_t M = 1 + rng() % 3;
    std::vector<long> taus(M);
    for (long& tau : taus) tau = static_cast<long>(rng() % H);
    const FragmentPattern pat = (rng() & 1) ? FragmentPattern::kStrided : FragmentPattern::kSequential;
    const SyncCalendar c = make(L, k, H, T, taus, pat);

    std::size_t expected_events = 0;
    for (std::size_t p = 0; p < P; ++p) {
      const long tp = static_cast<long>(p) * H / static_cast<long>(P);
      std::vector<long> steps;
      for (long t = 1; t <= T; ++t)
        if (t >= H && (t - tp) % H == 0) steps.push_back(t);
      std::vector<long> got;
      for (const auto& [t, ps] : c.sends())
        for (std::size_t q : ps)
          if (q == p) got.push_back(t);
      ASSERT_EQ(got, steps) << "trial " << trial << " fragment " << p;
      for (std::size_t i = 1; i < got.size(); ++i) ASSERT_EQ(got[i] - got[i - 1], H);
      expected_events += steps.size();
    }
    ASSERT_EQ(c.num_send_events(), expected_events);

    // Every send is received exactly once per replica, no later than T.
    for (std::size_t m = 0; m < M; ++m) {
      std::size_t received = 0;
      for (const auto& [t, evs] : c.receives(m)) {
        ASSERT_LE(t, T);
        for (const ReceiveEvent& e : evs) {
          ASSERT_EQ(t, std::min(e.send_step + taus[m], T));
          const auto& sent = c.sends_at(e.send_step);
          ASSERT_NE(std::find(sent.begin(), sent.end(), e.fragment), sent.end());
          ++received;
        }
      }
      ASSERT_EQ(received, expected_events);
    }
  }
}

TEST(PeakReduction, Examples) {
  EXPECT_EQ(peak_bandwidth_reduction(24, 3), 8.0);
  EXPECT_EQ(peak_bandwidth_reduction(108, 3), 36.0);
  EXPECT_EQ(peak_bandwidth_reduction(12, 12), 1.0);
}

TEST(CalendarJson, ListsEvents) {
  const SyncCalendar c = make(4, 2, 100, 250, {1, 5});
  const nlohmann::json j = nlohmann::json::parse(calendar_to_json(c));
  EXPECT_EQ(j.at("H"), 100);
  EXPECT_EQ(j.at("T"), 250);
  EXPECT_EQ(j.at("taus"), nlohmann::json::array({1, 5}));
  EXPECT_EQ(j.at("fragments").size(), 2u);
  EXPECT_EQ(j.at("sends").size(), 4u);
  EXPECT_EQ(j.at("receives").size(), 2u);
}

}  // namespace
}  // namespace sdlab
