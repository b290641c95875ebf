#include "survivalkit/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <boost/math/distributions/students_t.hpp>

#include "survivalkit/parallel.hpp"

namespace survivalkit {

SurvivalCurve censoring_survival(const SurvivalDataset& data) {
  std::vector<double> times, weights;
  std::vector<char> censored;
  for (const auto& obs : data.observations()) {
    times.push_back(obs.time);
    censored.push_back(obs.event ? 0 : 1);
    weights.push_back(obs.weight);
  }
  return kaplan_meier(build_risk_table(times, censored, weights));
}

std::vector<double> default_grid(const SurvivalDataset& data, std::size_t points, std::optional<double> horizon,
                                 double quantile) {
  if (points < 2) throw Error("grid needs at least 2 points");
  double tau = 0.0;
  if (horizon) {
    tau = *horizon;
  } else {
    std::vector<double> times;
    for (const auto& obs : data.observations()) times.push_back(obs.time);
    std::sort(times.begin(), times.end());
    const auto rank = static_cast<std::size_t>(std::ceil(quantile * static_cast<double>(times.size())));
    tau = times[std::clamp<std::size_t>(rank, 1, times.size()) - 1];
    if (tau <= 0.0) tau = times.back();
  }
  if (!(tau > 0.0)) throw Error("horizon must be positive");
  std::vector<double> grid(points);
  for (std::size_t k = 0; k < points; ++k) {
    grid[k] = tau * static_cast<double>(k) / static_cast<double>(points - 1);
  }
  return grid;
}

double integrated_score(std::span<const double> times, std::span<const double> values) {
  if (times.size() != values.size() || times.empty()) throw Error("length mismatch");
  if (times.size() == 1) return values[0];
  double area = 0.0;
  for (std::size_t k = 1; k < times.size(); ++k) {
    area += 0.5 * (values[k] + values[k - 1]) * (times[k] - times[k - 1]);
  }
  return area / (times.back() - times.front());
}

ErrorCurve brier_curve(std::span<const SurvivalCurve> predictions, const SurvivalDataset& data,
                       std::span<const double> grid) {
  return brier_curve(predictions, data, grid, censoring_survival(data));
}

namespace {

void check_inputs(std::span<const SurvivalCurve> predictions, const SurvivalDataset& data,
                  std::span<const double> grid) {
  if (predictions.size() != data.size()) throw Error("one prediction per observation required");
  if (grid.empty()) throw Error("empty grid");
  for (std::size_t k = 1; k < grid.size(); ++k) {
    if (!(grid[k] > grid[k - 1])) throw Error("grid must be strictly increasing");
  }
}

/// Grid points before the censoring survival reaches zero.
std::size_t usable_points(std::span<const double> grid, const SurvivalCurve& censoring) {
  std::size_t k = 0;
  while (k < grid.size() && censoring(grid[k]) > 0.0) ++k;
  if (k == 0) throw Error("censoring survival is zero on the whole grid");
  return k;
}

/// IPCW squared error of one observation at time t (g_t = censoring survival at t).
double ipcw_loss(double ti, bool event, double s, double t, double g_t, const SurvivalCurve& censoring) {
  if (ti <= t) {
    if (!event) return 0.0;
    const double g_left = censoring.left_limit(ti);
    return g_left > 0.0 ? s * s / g_left : 0.0;
  }
  return (1.0 - s) * (1.0 - s) / g_t;
}

}  // namespace

ErrorCurve brier_curve(std::span<const SurvivalCurve> predictions, const SurvivalDataset& data,
                       std::span<const double> grid, const SurvivalCurve& censoring) {
  check_inputs(predictions, data, grid);
  ErrorCurve out;
  const std::size_t usable = usable_points(grid, censoring);
  out.truncated = usable < grid.size();
  const double n = static_cast<double>(data.size());
  for (std::size_t k = 0; k < usable; ++k) {
    const double t = grid[k];
    const double g_t = censoring(t);
    double sum = 0.0;
    for (std::size_t i = 0; i < data.size(); ++i) {
      sum += ipcw_loss(data.time(i), data.event(i), predictions[i](t), t, g_t, censoring);
    }
    out.times.push_back(t);
    out.bs.push_back(sum / n);
  }
  out.ibs = integrated_score(out.times, out.bs);
  return out;
}

std::vector<double> brier_contributions(std::span<const SurvivalCurve> predictions, const SurvivalDataset& data,
                                        std::span<const double> grid, const SurvivalCurve& censoring) {
  check_inputs(predictions, data, grid);
  const std::size_t usable = usable_points(grid, censoring);
  const auto times = grid.first(usable);
  std::vector<double> g(usable);
  for (std::size_t k = 0; k < usable; ++k) g[k] = censoring(times[k]);
  std::vector<double> out(data.size());
  std::vector<double> loss(usable);
  for (std::size_t i = 0; i < data.size(); ++i) {
    for (std::size_t k = 0; k < usable; ++k) {
      loss[k] = ipcw_loss(data.time(i), data.event(i), predictions[i](times[k]), times[k], g[k], censoring);
    }
    out[i] = integrated_score(times, loss);
  }
  return out;
}

BootstrapResult bootstrap_cv_error(const ModelFitter& fit, const SurvivalDataset& data, std::size_t n_boot,
                                   std::span<const double> grid, std::uint64_t seed, std::size_t threads) {
  if (n_boot < 1) throw Error("n_boot must be >= 1");
  const auto censoring = censoring_survival(data);
  const std::size_t n = data.size();
  std::vector<ErrorCurve> curves(n_boot);

  parallel_for(
      n_boot,
      [&](std::size_t b) {
        std::mt19937_64 rng(derive_seed(seed, b));
        std::uniform_int_distribution<std::size_t> pick(0, n - 1);
        std::vector<std::size_t> train;
        std::vector<std::size_t> test;
        for (int attempt = 0; attempt < 100 && test.empty(); ++attempt) {
          train.clear();
          std::vector<char> drawn(n, 0);
          for (std::size_t k = 0; k < n; ++k) {
            const auto r = pick(rng);
            train.push_back(r);
            drawn[r] = 1;
          }
          for (std::size_t i = 0; i < n; ++i) {
            if (!drawn[i]) test.push_back(i);
          }
        }
        if (test.empty()) throw Error("bootstrap replicate without out-of-bag rows");

        const auto predictor = fit(data.subset(train));
        const auto test_data = data.subset(test);
        std::vector<SurvivalCurve> preds;
        preds.reserve(test.size());
        for (std::size_t i = 0; i < test_data.size(); ++i) preds.push_back(predictor(test_data[i].covariates));
        curves[b] = brier_curve(preds, test_data, grid, censoring);
      },
      threads);

  BootstrapResult result;
  result.n_boot = n_boot;
  // Replicates can only differ in truncation if the full-sample censoring hit zero,
  // which cuts every replicate at the same point.
  const auto& first = curves.front();
  result.mean_curve.times = first.times;
  result.mean_curve.truncated = first.truncated;
  result.mean_curve.bs.assign(first.times.size(), 0.0);
  for (const auto& c : curves) {
    for (std::size_t k = 0; k < result.mean_curve.bs.size(); ++k) result.mean_curve.bs[k] += c.bs[k];
    result.replicate_ibs.push_back(c.ibs);
  }
  for (auto& v : result.mean_curve.bs) v /= static_cast<double>(n_boot);
  result.mean_curve.ibs = integrated_score(result.mean_curve.times, result.mean_curve.bs);
  return result;
}

WelchResult welch_t_test(std::span<const double> a, std::span<const double> b) {
  if (a.size() < 2 || b.size() < 2) throw Error("each sample needs at least 2 values");
  auto moments = [](std::span<const double> x) {
    const double n = static_cast<double>(x.size());
    const double mean = std::accumulate(x.begin(), x.end(), 0.0) / n;
    double ss = 0.0;
    for (double v : x) ss += (v - mean) * (v - mean);
    return std::pair{mean, ss / (n - 1.0)};
  };
  const auto [ma, va] = moments(a);
  const auto [mb, vb] = moments(b);
  if (va <= 0.0 && vb <= 0.0) throw Error("zero variance in both samples");
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  const double sa = va / na;
  const double sb = vb / nb;
  WelchResult r;
  r.t = (ma - mb) / std::sqrt(sa + sb);
  r.df = (sa + sb) * (sa + sb) / (sa * sa / (na - 1.0) + sb * sb / (nb - 1.0));
  boost::math::students_t dist(r.df);
  r.p_value = std::min(1.0, 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(r.t))));
  return r;
}

double roc_auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw Error("length mismatch");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](auto x, auto y) { return scores[x] < scores[y]; });
  // Mid-ranks handle ties.
  double rank_sum = 0.0;
  double n_pos = 0.0, n_neg = 0.0;
  std::size_t k = 0;
  while (k < order.size()) {
    std::size_t end = k;
    while (end < order.size() && scores[order[end]] == scores[order[k]]) ++end;
    const double mid = 0.5 * static_cast<double>(k + 1 + end);
    for (std::size_t m = k; m < end; ++m) {
      const int y = labels[order[m]];
      if (y != 0 && y != 1) throw Error("labels must be 0 or 1");
      if (y == 1) {
        rank_sum += mid;
        n_pos += 1.0;
      } else {
        n_neg += 1.0;
      }
    }
    k = end;
  }
  if (n_pos == 0.0 || n_neg == 0.0) throw Error("degenerate labels");
  return (rank_sum - n_pos * (n_pos + 1.0) / 2.0) / (n_pos * n_neg);
}

CalibrationPairs calibration_pairs(std::span<const std::optional<double>> predicted_medians,
                                   const SurvivalDataset& data) {
  if (predicted_medians.size() != data.size()) throw Error("one prediction per observation required");
  CalibrationPairs out;
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (!data.event(i)) {
      ++out.censored_excluded;
      continue;
    }
    if (!predicted_medians[i]) {
      ++out.missing_prediction;
      continue;
    }
    const double obs = data.time(i);
    const double pred = *predicted_medians[i];
    out.observed.push_back(obs);
    out.predicted.push_back(pred);
    out.mean.push_back(0.5 * (obs + pred));
    out.difference.push_back(obs - pred);
  }
  return out;
}

}  // namespace survivalkit
