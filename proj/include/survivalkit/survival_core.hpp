#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace survivalkit {

/// Error raised for contract violations throughout the library. The message is
/// a short machine-parsable phrase ("empty dataset", "collinear covariates", ...).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// One right-censored observation: observed time, event flag, covariates.
/// `event == false` means the subject was still alive (still playing) at `time`.
struct Observation {
  double time = 0.0;
  bool event = false;
  std::vector<double> covariates;
  double weight = 1.0;
};

/// The censored learning sample. Construction validates the shared
/// covariate dimension, non-negative times and weights.
class SurvivalDataset {
 public:
  SurvivalDataset(std::vector<Observation> observations, std::vector<std::string> feature_names);

  std::size_t size() const { return observations_.size(); }
  std::size_t dim() const { return feature_names_.size(); }

  const Observation& operator[](std::size_t i) const { return observations_[i]; }
  const std::vector<Observation>& observations() const { return observations_; }
  const std::vector<std::string>& feature_names() const { return feature_names_; }

  double time(std::size_t i) const { return observations_[i].time; }
  bool event(std::size_t i) const { return observations_[i].event; }
  double covariate(std::size_t i, std::size_t j) const { return observations_[i].covariates[j]; }

  /// Rows in the order given; repeated indices produce repeated rows.
  SurvivalDataset subset(std::span<const std::size_t> rows) const;

  /// Index of a named feature, or nullopt.
  std::optional<std::size_t> feature_index(const std::string& name) const;

 private:
  std::vector<Observation> observations_;
  std::vector<std::string> feature_names_;
};

/// Right-continuous step function, stored at its jump times only.
/// S(t) = 1 for t < times[0].
class SurvivalCurve {
 public:
  SurvivalCurve() = default;
  SurvivalCurve(std::vector<double> times, std::vector<double> probs);

  const std::vector<double>& times() const { return times_; }
  const std::vector<double>& probs() const { return probs_; }
  std::size_t size() const { return times_.size(); }
  bool empty() const { return times_.empty(); }

  /// Value at t (step value at the last jump time <= t).
  double operator()(double t) const;
  /// Left limit S(t-).
  double left_limit(double t) const;

 private:
  std::vector<double> times_;
  std::vector<double> probs_;
};

/// Weighted at-risk and event counts at each distinct event time.
struct RiskTable {
  std::vector<double> times;
  std::vector<double> at_risk;
  std::vector<double> events;

  std::size_t size() const { return times.size(); }
};

/// Risk table over parallel (time, event, weight) arrays. Zero-weight rows are
/// ignored; only times with positive event weight are listed.
RiskTable build_risk_table(std::span<const double> times, std::span<const char> events,
                           std::span<const double> weights);
RiskTable build_risk_table(const SurvivalDataset& data);

SurvivalCurve kaplan_meier(const RiskTable& table);
SurvivalCurve kaplan_meier(const SurvivalDataset& data);

/// Smallest jump time with S(t) <= 0.5, or nullopt if the curve never gets there.
std::optional<double> median_survival(const SurvivalCurve& curve);

/// Log-rank scores: cumulative hazard at the subject's own time minus its event
/// indicator. Weighted form used by tree nodes.
std::vector<double> logrank_scores(std::span<const double> times, std::span<const char> events,
                                   std::span<const double> weights);
std::vector<double> logrank_scores(const SurvivalDataset& data);

// CSV I/O ------------------------------------------------------------------

/// Columns not taken as covariates when reading a dataset CSV.
struct DatasetCsv {
  SurvivalDataset data;
  std::vector<std::string> player_ids;  // empty unless a `player_id` column exists
  std::vector<std::string> segments;    // empty unless a `segment` column exists
};

/// Reads `time,event,<covariates...>`; `player_id` and `segment` columns, if
/// present, are kept aside rather than parsed as covariates.
DatasetCsv read_dataset_csv(std::istream& in);
DatasetCsv read_dataset_csv(const std::string& path);
void write_dataset_csv(std::ostream& out, const SurvivalDataset& data);

/// Two-column `time,survival` with a leading `0,1` row.
void write_curve_csv(std::ostream& out, const SurvivalCurve& curve);
SurvivalCurve read_curve_csv(std::istream& in);

/// Shortest round-trip decimal representation.
std::string format_double(double v);

}  // namespace survivalkit
