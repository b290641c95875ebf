#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "doctest.h"
#include "survivalkit/synthetic_data.hpp"
#include "test_helpers.hpp"

using namespace survivalkit;

namespace {

std::vector<double> ranks(const std::vector<double>& v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  for (std::size_t k = 0; k < idx.size(); ++k) r[idx[k]] = static_cast<double>(k);
  return r;
}

double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  const auto ra = ranks(a), rb = ranks(b);
  const double n = static_cast<double>(a.size());
  const double mean = (n - 1.0) / 2.0;
  double num = 0.0, da = 0.0, db = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += (ra[i] - mean) * (rb[i] - mean);
    da += (ra[i] - mean) * (ra[i] - mean);
    db += (rb[i] - mean) * (rb[i] - mean);
  }
  return num / std::sqrt(da * db);
}

/// Kaplan-Meier value at `day` of churn labels produced from a generated cohort.
double cohort_survival(const CohortSpec& spec, double day) {
  std::vector<Observation> rows;
  for_each_player(spec, [&](std::span<const PlayerEvent> events) {
    const auto label = label_churn(events, spec.observation_end_day());
    rows.push_back({label.time, label.event, {}, 1.0});
  });
  return kaplan_meier(SurvivalDataset(std::move(rows), {}))(day);
}

CohortSpec only(SegmentModel CohortSpec::*segment, std::size_t n, std::uint64_t seed) {
  CohortSpec spec;
  spec.non_payer.n = spec.payer.n = spec.whale.n = 0;
  (spec.*segment).n = n;
  spec.seed = seed;
  return spec;
}

}  // namespace

TEST_CASE("exponential sample mean") {
  HazardSpec spec;
  spec.rate = 0.01;
  spec.n = 10000;
  spec.seed = 3;
  auto data = sample_survival(spec);
  double mean = 0.0;
  for (const auto& o : data.observations()) {
    CHECK(o.event);
    mean += o.time / 10000.0;
  }
  CHECK(std::abs(mean - 100.0) < 5.0);
}

TEST_CASE("Kaplan-Meier of uncensored exponential samples stays inside the KS band") {
  // 1.36 / sqrt(n) is the 95% band, so single seeds may exceed it. Count
  // exceedances over 100 seeds instead: P(more than 10 | rate 0.05) is about 1%.
  int exceed = 0;
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    HazardSpec spec;
    spec.rate = 0.01;
    spec.n = 2000;
    spec.seed = seed;
    auto km = kaplan_meier(sample_survival(spec));
    double sup = 0.0;
    for (std::size_t j = 0; j < km.size(); ++j) {
      const double t = km.times()[j];
      if (t > 300.0) break;
      // Both one-sided limits of the step function.
      sup = std::max(sup, std::abs(km.probs()[j] - std::exp(-0.01 * t)));
      sup = std::max(sup, std::abs(km.left_limit(t) - std::exp(-0.01 * t)));
    }
    exceed += sup > 1.36 / std::sqrt(2000.0);
  }
  CHECK(exceed <= 10);
}

TEST_CASE("censoring regimes") {
  HazardSpec spec;
  spec.rate = 0.02;
  spec.n = 20000;
  spec.censoring = CensoringKind::uniform;
  auto data = sample_survival(spec);
  double censored = 0.0;
  for (const auto& o : data.observations()) censored += o.event ? 0.0 : 1.0;
  CHECK(std::abs(censored / 20000.0 - 0.30) < 0.015);

  spec.censoring = CensoringKind::administrative;
  spec.tau = 1e-9;
  spec.n = 500;
  const auto all_censored = sample_survival(spec);
  for (const auto& o : all_censored.observations()) {
    CHECK_FALSE(o.event);
    CHECK(o.time == 1e-9);
  }
  spec.tau = 0.0;
  CHECK_THROWS_AS(sample_survival(spec), Error);
}

TEST_CASE("cox_linear with zero coefficients carries no association") {
  HazardSpec spec;
  spec.kind = HazardKind::cox_linear;
  spec.beta = {0.0, 0.0};
  spec.n = 10000;
  spec.seed = 4;
  auto data = sample_survival(spec);
  CHECK(data.feature_names() == std::vector<std::string>{"x1", "x2"});
  std::vector<double> t, x1, x2;
  for (const auto& o : data.observations()) {
    t.push_back(o.time);
    x1.push_back(o.covariates[0]);
    x2.push_back(o.covariates[1]);
  }
  CHECK(std::abs(spearman(t, x1)) < 0.05);
  CHECK(std::abs(spearman(t, x2)) < 0.05);

  spec.beta = {2.0, 0.0};
  auto strong = sample_survival(spec);
  t.clear();
  x1.clear();
  for (const auto& o : strong.observations()) {
    t.push_back(o.time);
    x1.push_back(o.covariates[0]);
  }
  CHECK(spearman(t, x1) < -0.2);
}

TEST_CASE("weibull median and nonlinear risk") {
  HazardSpec w;
  w.kind = HazardKind::weibull;
  w.shape = 2.0;
  w.scale = 50.0;
  w.n = 20000;
  auto km = kaplan_meier(sample_survival(w));
  CHECK(std::abs(*median_survival(km) - 50.0 * std::sqrt(std::log(2.0))) < 1.0);

  HazardSpec nl;
  nl.kind = HazardKind::nonlinear;
  nl.beta = {1.0, 2.0, 3.0};
  nl.n_noise = 2;
  CHECK(nl.n_covariates() == 5);
  const std::vector<double> x{0.5, 0.25, 0.75, 9.0, 9.0};
  CHECK(nl.risk(x) == doctest::Approx(std::exp(0.5 + 0.25 + 3.0)));
  const std::vector<double> y{0.5, 0.25, 0.5, 0.0, 0.0};
  CHECK(nl.risk(y) == doctest::Approx(std::exp(0.75)));
  auto data = sample_survival(nl);
  CHECK(data.feature_names() == std::vector<std::string>{"x1", "x2", "x3", "noise1", "noise2"});
  nl.beta = {1.0};
  CHECK_THROWS_AS(sample_survival(nl), Error);
}

TEST_CASE("survival sampling is deterministic and spec JSON round trips") {
  HazardSpec spec;
  spec.kind = HazardKind::cox_linear;
  spec.beta = {0.7, -0.5};
  spec.censoring = CensoringKind::uniform;
  spec.n = 300;
  spec.seed = 9;
  std::ostringstream a, b, c;
  write_dataset_csv(a, sample_survival(spec));
  write_dataset_csv(b, sample_survival(hazard_spec_from_json(to_json(spec))));
  CHECK(a.str() == b.str());
  spec.seed = 10;
  write_dataset_csv(c, sample_survival(spec));
  CHECK(a.str() != c.str());
}

TEST_CASE("cohort churn anchors") {
  CHECK(std::abs(cohort_survival(only(&CohortSpec::non_payer, 2000, 1), 1.0) - 0.2) < 0.03);
  CHECK(std::abs(cohort_survival(only(&CohortSpec::whale, 1000, 2), 100.0) - 0.8) < 0.05);
  // Payers sit between the two.
  const double payer = cohort_survival(only(&CohortSpec::payer, 1000, 3), 1.0);
  CHECK(std::abs(payer - 0.7) < 0.05);
}

TEST_CASE("event log structure") {
  auto spec = only(&CohortSpec::payer, 40, 5);
  spec.whale.n = 5;
  auto log = sample_event_log(spec);
  REQUIRE_FALSE(log.empty());
  const auto end = spec.observation_end_day();
  std::map<std::string, std::vector<PlayerEvent>> players;
  for (const auto& e : log) {
    CHECK(day_of(e.timestamp) >= spec.start_day);
    CHECK(day_of(e.timestamp) <= end);
    if (e.kind == EventKind::purchase) CHECK(*e.amount > 0.0);
    players[e.player_id].push_back(e);
  }
  CHECK(players.size() == 45);
  for (const auto& [id, events] : players) {
    CHECK(std::is_sorted(events.begin(), events.end(),
                         [](auto& a, auto& b) { return a.timestamp < b.timestamp; }));
    CHECK(std::any_of(events.begin(), events.end(), [](auto& e) { return e.kind == EventKind::purchase; }));
    CHECK(events.front().kind == EventKind::session_start);
    int level = 1;
    for (const auto& e : events) {
      if (e.kind == EventKind::level_up) CHECK(*e.level == ++level);
    }
  }

  std::ostringstream a, b;
  write_event_log(a, log);
  write_event_log(b, sample_event_log(cohort_spec_from_json(to_json(spec))));
  CHECK(a.str() == b.str());

  auto empty = only(&CohortSpec::whale, 0, 1);
  CHECK(sample_event_log(empty).empty());

  // Whales land in the top spend segment once featurized.
  ChurnConfig cc;
  cc.observation_end_day = end;
  auto rows = featurize(log, cc);
  int whales = 0;
  for (const auto& r : rows) whales += r.segment == Segment::whale;
  CHECK(whales >= 4);
}
