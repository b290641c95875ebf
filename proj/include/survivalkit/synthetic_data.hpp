#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "survivalkit/churn_pipeline.hpp"
#include "survivalkit/survival_core.hpp"

namespace survivalkit {

enum class HazardKind { exponential, weibull, cox_linear, nonlinear };
enum class CensoringKind { none, uniform, administrative };
enum class CovariateDist { uniform, normal };

/// Parametric generator. cox_linear uses hazard rate * exp(beta . x);
/// nonlinear uses rate * exp(b1 x1 + b2 x1 x2 + b3 [x3 > 0.5]).
struct HazardSpec {
  HazardKind kind = HazardKind::exponential;
  double rate = 0.01;
  double shape = 1.0;   // weibull
  double scale = 100.0; // weibull
  std::vector<double> beta;
  std::size_t n_noise = 0;  // extra covariates with no effect
  CovariateDist covariates = CovariateDist::uniform;
  CensoringKind censoring = CensoringKind::none;
  std::optional<double> c_max;  // uniform censoring on [0, c_max]; default targets ~30%
  double tau = 0.0;             // administrative censoring time
  std::size_t n = 1000;
  std::uint64_t seed = 1;

  void validate() const;
  std::size_t n_covariates() const;
  /// Hazard multiplier exp(...) at x (1 for covariate-free kinds).
  double risk(std::span<const double> x) const;
};

HazardSpec hazard_spec_from_json(const nlohmann::json& doc);
nlohmann::json to_json(const HazardSpec& spec);

/// Inverse-transform sample; deterministic per seed.
SurvivalDataset sample_survival(const HazardSpec& spec);

/// Churn and activity model of one player segment.
struct SegmentModel {
  std::size_t n = 0;
  double first_day_churn = 0.0;  // mass of players who never come back after day 1
  double daily_hazard = 0.01;    // churn hazard per day afterwards
  double active_prob = 0.8;      // chance of playing on a day while alive
  double sessions_per_day = 1.5;
  double session_minutes = 20.0;
  double actions_per_session = 3.0;
  double purchase_prob = 0.0;    // per active day
  double purchase_mean = 0.0;
  double level_prob = 0.2;       // per active day
};

struct CohortSpec {
  SegmentModel non_payer{2000, 0.8, 0.03, 0.6, 1.2, 12.0, 3.0, 0.0, 0.0, 0.15};
  SegmentModel payer{400, 0.3, 0.01, 0.8, 1.5, 25.0, 4.0, 0.05, 5.0, 0.2};
  SegmentModel whale{50, 0.0, 0.00225, 0.95, 2.0, 45.0, 6.0, 0.3, 60.0, 0.3};
  std::int64_t start_day = 19723;  // 2024-01-01
  int registration_days = 60;
  int window_days = 240;
  std::uint64_t seed = 1;

  void validate() const;
  std::int64_t observation_end_day() const { return start_day + window_days - 1; }
};

CohortSpec cohort_spec_from_json(const nlohmann::json& doc);
nlohmann::json to_json(const CohortSpec& spec);

/// Streams one player's events at a time, in player order (non-payers, payers,
/// whales). Payer segments make their first purchase on day one.
void for_each_player(const CohortSpec& spec, const std::function<void(std::span<const PlayerEvent>)>& fn);
std::vector<PlayerEvent> sample_event_log(const CohortSpec& spec);

}  // namespace survivalkit
