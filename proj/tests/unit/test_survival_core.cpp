#include <algorithm>
#include <random>
#include <sstream>

#include "doctest.h"
#include "survivalkit/survival_core.hpp"
#include "test_helpers.hpp"

using namespace survivalkit;
using survivalkit::testing::five_rows;
using survivalkit::testing::make_dataset;
using survivalkit::testing::random_censored;

TEST_CASE("risk table on the five-row example") {
  auto table = build_risk_table(five_rows());
  CHECK(table.times == std::vector<double>{1, 2, 4});
  CHECK(table.at_risk == std::vector<double>{5, 4, 1});
  CHECK(table.events == std::vector<double>{1, 2, 1});
}

TEST_CASE("risk table edge cases") {
  auto single = build_risk_table(make_dataset({{5, true}}));
  CHECK(single.times == std::vector<double>{5});
  CHECK(single.at_risk == std::vector<double>{1});
  CHECK(single.events == std::vector<double>{1});

  auto censored = build_risk_table(make_dataset({{1, false}, {3, false}}));
  CHECK(censored.size() == 0);

  CHECK_THROWS_WITH_AS(SurvivalDataset({}, {}), "empty dataset", Error);
  std::vector<double> none;
  std::vector<char> no_events;
  CHECK_THROWS_WITH_AS(build_risk_table(none, no_events, none), "empty dataset", Error);
}

TEST_CASE("integer weights match row duplication") {
  std::vector<double> times{1, 2, 2, 5};
  std::vector<char> events{1, 0, 1, 1};
  std::vector<double> weights{2, 1, 3, 1};
  auto weighted = build_risk_table(times, events, weights);
  auto expanded = build_risk_table(make_dataset(
      {{1, true}, {1, true}, {2, false}, {2, true}, {2, true}, {2, true}, {5, true}}));
  CHECK(weighted.times == expanded.times);
  CHECK(weighted.at_risk == expanded.at_risk);
  CHECK(weighted.events == expanded.events);

  // Zero-weight events are not listed.
  std::vector<double> zero{0, 1, 1, 1};
  CHECK(build_risk_table(times, events, zero).times == std::vector<double>{2, 5});
}

TEST_CASE("Kaplan-Meier examples") {
  auto km = kaplan_meier(five_rows());
  REQUIRE(km.size() == 3);
  CHECK(km.probs()[0] == doctest::Approx(0.8).epsilon(1e-15));
  CHECK(km.probs()[1] == doctest::Approx(0.4).epsilon(1e-15));
  CHECK(km.probs()[2] == 0.0);
  CHECK(km(0.5) == 1.0);
  CHECK(km(1.0) == doctest::Approx(0.8));
  CHECK(km(3.9) == doctest::Approx(0.4));
  CHECK(km.left_limit(2.0) == doctest::Approx(0.8));

  auto censored = kaplan_meier(make_dataset({{1, false}, {7, false}}));
  CHECK(censored.empty());
  CHECK(censored(100.0) == 1.0);

  auto one = kaplan_meier(make_dataset({{5, true}}));
  CHECK(one(5.0) == 0.0);
  CHECK(one(4.99) == 1.0);
}

TEST_CASE("median survival") {
  CHECK(median_survival(kaplan_meier(five_rows())) == 2.0);
  CHECK_FALSE(median_survival(kaplan_meier(make_dataset({{3, false}}))).has_value());
  CHECK(median_survival(SurvivalCurve({10.0}, {0.5})) == 10.0);
}

TEST_CASE("log-rank scores") {
  auto single = logrank_scores(make_dataset({{5, true}}));
  CHECK(single == std::vector<double>{0.0});

  auto two = logrank_scores(make_dataset({{1, true}, {2, false}}));
  CHECK(two[0] == doctest::Approx(-0.5));
  CHECK(two[1] == doctest::Approx(0.5));

  for (std::size_t n : {3u, 7u, 20u}) {
    std::vector<std::pair<double, bool>> rows;
    for (std::size_t i = 0; i < n; ++i) rows.push_back({static_cast<double>(n - i), true});
    auto scores = logrank_scores(make_dataset(rows));
    // Earliest event is the last row.
    CHECK(scores.back() == doctest::Approx(1.0 / static_cast<double>(n) - 1.0));
  }
}

TEST_CASE("curve constructor rejects invalid input") {
  CHECK_THROWS_AS(SurvivalCurve({1, 1}, {0.9, 0.8}), Error);
  CHECK_THROWS_AS(SurvivalCurve({1, 2}, {0.8, 0.9}), Error);
  CHECK_THROWS_AS(SurvivalCurve({1}, {1.1}), Error);
  CHECK_THROWS_AS(SurvivalCurve({1, 2}, {0.8}), Error);
}

TEST_CASE("property: Kaplan-Meier is a valid survival curve") {
  std::mt19937_64 rng(11);
  for (int rep = 0; rep < 200; ++rep) {
    auto data = random_censored(rng, 1 + rep % 60);
    auto km = kaplan_meier(data);  // constructor validates monotone and range
    for (double p : km.probs()) {
      CHECK(p >= 0.0);
      CHECK(p <= 1.0);
    }
  }
}

TEST_CASE("property: without censoring 1 - S equals the empirical CDF") {
  std::mt19937_64 rng(12);
  std::uniform_int_distribution<int> time(1, 40);
  for (int rep = 0; rep < 100; ++rep) {
    std::vector<std::pair<double, bool>> rows;
    const int n = 1 + rep;
    for (int i = 0; i < n; ++i) rows.push_back({static_cast<double>(time(rng)), true});
    auto km = kaplan_meier(make_dataset(rows));
    for (double t = 0.0; t <= 41.0; t += 0.5) {
      const double ecdf =
          static_cast<double>(std::count_if(rows.begin(), rows.end(), [&](auto r) { return r.first <= t; })) / n;
      CHECK(std::abs((1.0 - km(t)) - ecdf) <= 1e-12);
    }
  }
}

TEST_CASE("property: Kaplan-Meier is permutation invariant") {
  std::mt19937_64 rng(13);
  for (int rep = 0; rep < 50; ++rep) {
    auto data = random_censored(rng, 40);
    auto rows = data.observations();
    std::shuffle(rows.begin(), rows.end(), rng);
    auto a = kaplan_meier(data);
    auto b = kaplan_meier(SurvivalDataset(rows, {}));
    CHECK(a.times() == b.times());
    for (std::size_t j = 0; j < a.size(); ++j) {
      CHECK(a.probs()[j] == doctest::Approx(b.probs()[j]).epsilon(1e-14));
    }
  }
}

TEST_CASE("property: median scales with time") {
  std::mt19937_64 rng(14);
  for (int rep = 0; rep < 50; ++rep) {
    auto data = random_censored(rng, 30);
    const double c = 0.25 * (1 + rep % 8);  // powers of two and small multiples stay exact
    auto rows = data.observations();
    for (auto& r : rows) r.time *= c;
    auto m1 = median_survival(kaplan_meier(data));
    auto m2 = median_survival(kaplan_meier(SurvivalDataset(rows, {})));
    REQUIRE(m1.has_value() == m2.has_value());
    if (m1) CHECK(*m2 == *m1 * c);
  }
}

TEST_CASE("property: censored and event scores at one time differ by exactly 1") {
  std::mt19937_64 rng(15);
  for (int rep = 0; rep < 100; ++rep) {
    auto data = random_censored(rng, 50);
    auto scores = logrank_scores(data);
    for (std::size_t i = 0; i < data.size(); ++i) {
      for (std::size_t j = 0; j < data.size(); ++j) {
        if (data.time(i) == data.time(j) && !data.event(i) && data.event(j)) {
          CHECK(scores[i] - scores[j] == 1.0);
        }
      }
    }
  }
}

TEST_CASE("dataset CSV round-trips and keeps id columns aside") {
  std::mt19937_64 rng(16);
  auto data = random_censored(rng, 25, 3);
  std::stringstream buf;
  write_dataset_csv(buf, data);
  auto back = read_dataset_csv(buf);
  REQUIRE(back.data.size() == data.size());
  CHECK(back.data.feature_names() == data.feature_names());
  for (std::size_t i = 0; i < data.size(); ++i) {
    CHECK(back.data.time(i) == data.time(i));
    CHECK(back.data.event(i) == data.event(i));
    CHECK(back.data[i].covariates == data[i].covariates);
  }

  std::stringstream with_ids("player_id,segment,time,event,a\np1,whale,3,1,0.5\np2,payer,4,0,1.5\n");
  auto parsed = read_dataset_csv(with_ids);
  CHECK(parsed.player_ids == std::vector<std::string>{"p1", "p2"});
  CHECK(parsed.segments == std::vector<std::string>{"whale", "payer"});
  CHECK(parsed.data.feature_names() == std::vector<std::string>{"a"});

  std::stringstream bad("time,event\n1,2\n");
  CHECK_THROWS_AS(read_dataset_csv(bad), Error);
  std::stringstream missing("time,x\n1,2\n");
  CHECK_THROWS_AS(read_dataset_csv(missing), Error);
}

TEST_CASE("curve CSV has the S(0)=1 anchor and round-trips") {
  auto km = kaplan_meier(five_rows());
  std::stringstream buf;
  write_curve_csv(buf, km);
  CHECK(buf.str().rfind("time,survival\n0,1\n1,0.8\n", 0) == 0);
  auto back = read_curve_csv(buf);
  CHECK(back.times() == km.times());
  CHECK(back.probs() == km.probs());
}
