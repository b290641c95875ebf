#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "survivalkit/survival_core.hpp"

namespace survivalkit {

/// Time-dependent Brier score on a grid and its integral.
struct ErrorCurve {
  std::vector<double> times;
  std::vector<double> bs;
  double ibs = 0.0;
  bool truncated = false;  // grid cut where the censoring survival hit zero
};

/// Reverse Kaplan-Meier: survival of the censoring distribution.
SurvivalCurve censoring_survival(const SurvivalDataset& data);

/// Evaluation grid of `points` equally spaced times on [0, horizon]. The
/// horizon defaults to the `quantile` of observed times.
std::vector<double> default_grid(const SurvivalDataset& data, std::size_t points = 100,
                                 std::optional<double> horizon = std::nullopt, double quantile = 0.95);

/// Inverse-probability-of-censoring weighted Brier score. The censoring
/// survival is estimated from `data` unless one is supplied.
ErrorCurve brier_curve(std::span<const SurvivalCurve> predictions, const SurvivalDataset& data,
                       std::span<const double> grid);
ErrorCurve brier_curve(std::span<const SurvivalCurve> predictions, const SurvivalDataset& data,
                       std::span<const double> grid, const SurvivalCurve& censoring);

/// Integrated loss of each observation over the usable part of the grid. Their
/// mean equals the IBS of brier_curve up to rounding.
std::vector<double> brier_contributions(std::span<const SurvivalCurve> predictions, const SurvivalDataset& data,
                                        std::span<const double> grid, const SurvivalCurve& censoring);

/// Trapezoid integral normalized by the grid span.
double integrated_score(std::span<const double> times, std::span<const double> values);

using CurvePredictor = std::function<SurvivalCurve(std::span<const double>)>;
using ModelFitter = std::function<CurvePredictor(const SurvivalDataset&)>;

struct BootstrapResult {
  ErrorCurve mean_curve;
  std::vector<double> replicate_ibs;
  std::size_t n_boot = 0;
};

/// Bootstrap cross-validation: fit on a bootstrap multiset, score the rows it
/// left out. IPCW weights come from the full sample so replicates share a grid.
BootstrapResult bootstrap_cv_error(const ModelFitter& fit, const SurvivalDataset& data, std::size_t n_boot,
                                   std::span<const double> grid, std::uint64_t seed, std::size_t threads = 0);

struct WelchResult {
  double t = 0.0;
  double df = 0.0;
  double p_value = 1.0;
};

WelchResult welch_t_test(std::span<const double> a, std::span<const double> b);

/// Mann-Whitney AUC; tied scores count one half.
double roc_auc(std::span<const double> scores, std::span<const int> labels);

struct CalibrationPairs {
  std::vector<double> observed;
  std::vector<double> predicted;
  std::vector<double> mean;        // (observed + predicted) / 2
  std::vector<double> difference;  // observed - predicted
  std::size_t censored_excluded = 0;
  std::size_t missing_prediction = 0;
};

CalibrationPairs calibration_pairs(std::span<const std::optional<double>> predicted_medians,
                                   const SurvivalDataset& data);

}  // namespace survivalkit
