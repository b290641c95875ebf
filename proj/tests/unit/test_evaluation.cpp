#include <cmath>
#include <random>

#include "doctest.h"
#include "survivalkit/evaluation.hpp"
#include "survivalkit/parallel.hpp"
#include "test_helpers.hpp"

using namespace survivalkit;
using survivalkit::testing::five_rows;

namespace {

SurvivalDataset uncensored(std::mt19937_64& rng, std::size_t n) {
  std::exponential_distribution<double> e(0.05);
  std::vector<Observation> rows;
  for (std::size_t i = 0; i < n; ++i) rows.push_back({1.0 + e(rng), true, {}, 1.0});
  return {std::move(rows), {}};
}

// Fine step approximation of exp(-rate t) on [0, 400].
SurvivalCurve exponential_curve(double rate) {
  std::vector<double> t, p;
  for (int k = 1; k <= 4000; ++k) {
    t.push_back(0.1 * k);
    p.push_back(std::exp(-rate * 0.1 * k));
  }
  return {t, p};
}

}  // namespace

TEST_CASE("oracle predictor scores zero") {
  std::mt19937_64 rng(1);
  auto data = uncensored(rng, 200);
  std::vector<SurvivalCurve> oracle;
  for (const auto& obs : data.observations()) oracle.emplace_back(std::vector<double>{obs.time}, std::vector<double>{0.0});
  auto grid = default_grid(data, 50);
  auto curve = brier_curve(oracle, data, grid);
  for (double v : curve.bs) CHECK(v == 0.0);
  CHECK(curve.ibs == 0.0);
}

TEST_CASE("constant one-half predictor scores a quarter everywhere") {
  std::mt19937_64 rng(2);
  auto data = uncensored(rng, 150);
  SurvivalCurve half({0.0}, {0.5});
  std::vector<SurvivalCurve> preds(data.size(), half);
  auto grid = default_grid(data, 40);
  auto curve = brier_curve(preds, data, grid);
  for (double v : curve.bs) CHECK(v == 0.25);
  CHECK(curve.ibs == doctest::Approx(0.25).epsilon(1e-15));
}

TEST_CASE("five-row hand example with one censored row") {
  // Values from an independent evaluation of the IPCW formula.
  auto data = five_rows();
  auto km = kaplan_meier(data);
  std::vector<SurvivalCurve> preds(data.size(), km);
  std::vector<double> grid{0, 1, 2, 3, 4};
  auto censoring = censoring_survival(data);
  CHECK(censoring(2.9) == 1.0);
  CHECK(censoring(3.0) == doctest::Approx(0.5));
  auto curve = brier_curve(preds, data, grid);
  REQUIRE(curve.bs.size() == 5);
  CHECK(curve.bs[0] == doctest::Approx(0.0));
  CHECK(curve.bs[1] == doctest::Approx(0.16).epsilon(1e-12));
  CHECK(curve.bs[2] == doctest::Approx(0.24).epsilon(1e-12));
  CHECK(curve.bs[3] == doctest::Approx(0.24).epsilon(1e-12));
  CHECK(curve.bs[4] == doctest::Approx(0.0));
  CHECK(curve.ibs == doctest::Approx(0.16).epsilon(1e-12));
}

TEST_CASE("without censoring the weights vanish") {
  std::mt19937_64 rng(3);
  auto data = uncensored(rng, 100);
  auto censoring = censoring_survival(data);
  CHECK(censoring.empty());
  std::vector<SurvivalCurve> preds;
  std::uniform_real_distribution<double> rate(0.01, 0.1);
  for (std::size_t i = 0; i < data.size(); ++i) preds.push_back(exponential_curve(rate(rng)));
  auto grid = default_grid(data, 30);
  auto curve = brier_curve(preds, data, grid);
  for (std::size_t k = 0; k < grid.size(); ++k) {
    double sq = 0.0;
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double status = data.time(i) > grid[k] ? 1.0 : 0.0;
      sq += (status - preds[i](grid[k])) * (status - preds[i](grid[k]));
    }
    CHECK(curve.bs[k] == doctest::Approx(sq / 100.0).epsilon(1e-13));
  }
}

TEST_CASE("IBS is stable under grid refinement") {
  std::mt19937_64 rng(4);
  std::exponential_distribution<double> e(0.05), c(0.02);
  std::vector<Observation> rows;
  for (int i = 0; i < 300; ++i) {
    const double t = e(rng), cens = c(rng);
    rows.push_back({std::min(t, cens), t <= cens, {}, 1.0});
  }
  SurvivalDataset data(std::move(rows), {});
  std::vector<SurvivalCurve> preds(data.size(), exponential_curve(0.05));
  auto coarse = brier_curve(preds, data, default_grid(data, 100));
  auto fine = brier_curve(preds, data, default_grid(data, 199));
  CHECK(std::abs(coarse.ibs - fine.ibs) < 1e-3);

  const auto grid = default_grid(data, 100);
  auto per_row = brier_contributions(preds, data, grid, censoring_survival(data));
  double mean = 0.0;
  for (double v : per_row) mean += v / static_cast<double>(per_row.size());
  CHECK(mean == doctest::Approx(coarse.ibs).epsilon(1e-12));
}

TEST_CASE("grid truncates where the censoring survival reaches zero") {
  auto data = survivalkit::testing::make_dataset({{1, true}, {2, false}, {3, true}, {4, false}});
  std::vector<SurvivalCurve> preds(data.size(), kaplan_meier(data));
  std::vector<double> grid{0, 1, 2, 3, 4, 5};
  auto curve = brier_curve(preds, data, grid);
  CHECK(curve.truncated);
  CHECK(curve.times == std::vector<double>{0, 1, 2, 3});
}

TEST_CASE("bootstrap CV with one replicate equals a manual split") {
  std::mt19937_64 rng(5);
  auto data = survivalkit::testing::random_censored(rng, 80);
  ModelFitter km_fit = [](const SurvivalDataset& train) {
    auto curve = kaplan_meier(train);
    return CurvePredictor([curve](std::span<const double>) { return curve; });
  };
  std::vector<double> grid{0, 5, 10, 15, 20, 25};
  auto a = bootstrap_cv_error(km_fit, data, 1, grid, 42, 1);
  auto b = bootstrap_cv_error(km_fit, data, 1, grid, 42, 1);
  CHECK(a.replicate_ibs == b.replicate_ibs);
  CHECK(a.mean_curve.bs == b.mean_curve.bs);

  // Manual replay of the same draw.
  std::mt19937_64 draw(derive_seed(42, 0));
  std::uniform_int_distribution<std::size_t> pick(0, data.size() - 1);
  std::vector<std::size_t> train;
  std::vector<char> in(data.size(), 0);
  for (std::size_t k = 0; k < data.size(); ++k) {
    train.push_back(pick(draw));
    in[train.back()] = 1;
  }
  std::vector<std::size_t> test;
  for (std::size_t i = 0; i < data.size(); ++i)
    if (!in[i]) test.push_back(i);
  auto curve = kaplan_meier(data.subset(train));
  auto test_data = data.subset(test);
  std::vector<SurvivalCurve> preds(test.size(), curve);
  auto manual = brier_curve(preds, test_data, grid, censoring_survival(data));
  CHECK(a.replicate_ibs[0] == manual.ibs);
  CHECK(a.mean_curve.bs == manual.bs);

  auto many = bootstrap_cv_error(km_fit, data, 20, grid, 42, 1);
  CHECK(many.replicate_ibs.size() == 20);
  CHECK(many.replicate_ibs[0] == a.replicate_ibs[0]);
  auto threaded = bootstrap_cv_error(km_fit, data, 20, grid, 42, 3);
  CHECK(threaded.replicate_ibs == many.replicate_ibs);
}

TEST_CASE("Welch t-test") {
  std::vector<double> a{1, 2, 3, 4}, b{2, 3, 4, 5};
  auto r = welch_t_test(a, b);
  // scipy.stats.ttest_ind(equal_var=False) reference values.
  CHECK(r.t == doctest::Approx(-1.0954451150103324).epsilon(1e-12));
  CHECK(r.df == doctest::Approx(6.0).epsilon(1e-12));
  CHECK(r.p_value == doctest::Approx(0.3153335962012296).epsilon(1e-9));

  auto swapped = welch_t_test(b, a);
  CHECK(swapped.t == -r.t);
  CHECK(swapped.p_value == r.p_value);

  auto same = welch_t_test(a, a);
  CHECK(same.t == 0.0);
  CHECK(same.p_value == 1.0);

  std::vector<double> flat{2, 2, 2};
  CHECK_THROWS_AS(welch_t_test(flat, flat), Error);
  CHECK_NOTHROW(welch_t_test(flat, a));
}

TEST_CASE("ROC AUC") {
  CHECK(roc_auc(std::vector<double>{0.9, 0.8}, std::vector<int>{1, 0}) == 1.0);
  CHECK(roc_auc(std::vector<double>{0.9, 0.6, 0.4, 0.2}, std::vector<int>{1, 0, 1, 0}) == 0.75);
  CHECK(roc_auc(std::vector<double>{0.3, 0.3, 0.3}, std::vector<int>{1, 0, 1}) == 0.5);
  CHECK_THROWS_AS(roc_auc(std::vector<double>{0.1, 0.2}, std::vector<int>{1, 1}), Error);

  std::mt19937_64 rng(6);
  std::normal_distribution<double> z;
  std::bernoulli_distribution coin(0.4);
  for (int rep = 0; rep < 20; ++rep) {
    std::vector<double> s, transformed;
    std::vector<int> y;
    for (int i = 0; i < 60; ++i) {
      y.push_back(coin(rng) ? 1 : 0);
      s.push_back(std::round(4 * (z(rng) + y.back())) / 4);  // rounding creates ties
      transformed.push_back(std::exp(3 * s.back()) + 7);
    }
    if (std::count(y.begin(), y.end(), 1) == 0 || std::count(y.begin(), y.end(), 0) == 0) continue;
    CHECK(roc_auc(s, y) == doctest::Approx(roc_auc(transformed, y)).epsilon(1e-15));
    // Brute force over positive/negative pairs.
    double wins = 0.0, pairs = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i)
      for (std::size_t j = 0; j < s.size(); ++j)
        if (y[i] == 1 && y[j] == 0) {
          pairs += 1;
          wins += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
        }
    CHECK(roc_auc(s, y) == doctest::Approx(wins / pairs).epsilon(1e-12));
  }
}

TEST_CASE("calibration pairs") {
  SurvivalDataset data({{10, true, {}, 1}, {20, true, {}, 1}}, {});
  std::vector<std::optional<double>> pred{12.0, 18.0};
  auto c = calibration_pairs(pred, data);
  CHECK(c.mean == std::vector<double>{11, 19});
  CHECK(c.difference == std::vector<double>{-2, 2});

  std::vector<std::optional<double>> perfect{10.0, 20.0};
  auto p = calibration_pairs(perfect, data);
  CHECK(p.difference == std::vector<double>{0, 0});

  SurvivalDataset censored({{10, false, {}, 1}, {20, false, {}, 1}}, {});
  auto e = calibration_pairs(pred, censored);
  CHECK(e.observed.empty());
  CHECK(e.censored_excluded == 2);

  std::vector<std::optional<double>> missing{std::nullopt, 18.0};
  auto m = calibration_pairs(missing, data);
  CHECK(m.missing_prediction == 1);
  CHECK(m.observed == std::vector<double>{20});
}
