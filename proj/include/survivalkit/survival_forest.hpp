#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "survivalkit/conditional_tree.hpp"
#include "survivalkit/survival_core.hpp"

namespace survivalkit {

struct ForestConfig {
  std::size_t n_trees = 1000;
  TreeConfig tree;  // tree.mtry unset means ceil(sqrt(p)); tree.rng_seed is ignored
  double bootstrap_fraction = 1.0;
  bool sample_with_replacement = true;
  std::uint64_t rng_seed = 1;
  std::size_t threads = 0;  // 0 = default_thread_count()

  void validate() const;
};

nlohmann::json to_json(const ForestConfig& config);
ForestConfig forest_config_from_json(const nlohmann::json& doc);

/// Trees, in-bag counts and the feature schema shared by both forest kinds.
class Ensemble {
 public:
  Ensemble() = default;
  Ensemble(ForestConfig config, std::vector<std::string> feature_names, std::vector<ConditionalTree> trees,
           std::vector<std::vector<std::uint32_t>> inbag);

  const ForestConfig& config() const { return config_; }
  const std::vector<std::string>& feature_names() const { return feature_names_; }
  const std::vector<ConditionalTree>& trees() const { return trees_; }
  std::size_t n_trees() const { return trees_.size(); }
  std::size_t n_features() const { return feature_names_.size(); }
  std::size_t n_train() const { return inbag_.empty() ? 0 : inbag_.front().size(); }
  /// Multiplicity of training row `row` in tree `tree`'s sample.
  std::uint32_t inbag(std::size_t tree, std::size_t row) const { return inbag_[tree][row]; }
  /// Number of trees that did not see `row`.
  std::size_t oob_count(std::size_t row) const;

 protected:
  void check_dim(std::span<const double> x) const;
  nlohmann::json ensemble_json() const;
  static Ensemble ensemble_from_json(const nlohmann::json& doc, ResponseKind kind);

  ForestConfig config_;
  std::vector<std::string> feature_names_;
  std::vector<ConditionalTree> trees_;
  std::vector<std::vector<std::uint32_t>> inbag_;  // [tree][row]
};

/// Survival forest. Predictions pool, over trees, the weighted event and
/// at-risk counts of the terminal node containing x, then take the product
/// of (1 - events / at risk) over the training event times.
class SurvivalForest : public Ensemble {
 public:
  SurvivalForest() = default;
  SurvivalForest(Ensemble ensemble, std::vector<double> train_times, std::vector<char> train_events);

  const std::vector<double>& train_times() const { return train_times_; }
  const std::vector<char>& train_events() const { return train_events_; }
  /// Distinct training event times; every prediction lives on this grid.
  const std::vector<double>& grid() const { return grid_; }

  SurvivalCurve predict(std::span<const double> x) const;
  /// Uses only trees for which training row `row` was out of bag.
  SurvivalCurve predict_oob(std::span<const double> x, std::size_t row) const;

  nlohmann::json to_json() const;
  static SurvivalForest from_json(const nlohmann::json& doc);

 private:
  template <class Input, class Keep>
  SurvivalCurve aggregate(Input input, Keep keep) const;

  std::vector<double> train_times_;
  std::vector<char> train_events_;
  std::vector<double> grid_;
  std::vector<std::size_t> risk_end_;   // grid points with time <= train time
  std::vector<std::size_t> event_pos_;  // grid index of the event, or npos
};

SurvivalForest fit_forest(const SurvivalDataset& data, const ForestConfig& config);
SurvivalCurve predict_forest_survival(const SurvivalForest& forest, std::span<const double> x);
std::vector<SurvivalCurve> predict_forest_survival(const SurvivalForest& forest,
                                                   const std::vector<std::vector<double>>& rows,
                                                   std::size_t threads = 0);

struct RiskPrediction {
  std::optional<double> median;
  bool at_risk = false;
};

/// At risk when the predicted median survival exists and is <= horizon.
RiskPrediction predict_median_and_risk(const SurvivalForest& forest, std::span<const double> x, double horizon);
RiskPrediction classify_risk(const SurvivalCurve& curve, double horizon);

struct FeatureImportance {
  std::string feature;
  double importance = 0.0;  // mean out-of-bag IBS increase under permutation
  double std_error = 0.0;   // across permutation repeats
  double row_std_error = 0.0;  // across out-of-bag rows, repeats averaged
  std::size_t rank = 0;     // 1 = most important
};

struct ImportanceConfig {
  std::size_t n_repeats = 5;
  std::uint64_t seed = 1;
  std::size_t grid_points = 100;
  std::optional<double> horizon;
  std::size_t threads = 0;
};

/// Permutation importance on out-of-bag integrated Brier score.
std::vector<FeatureImportance> variable_importance(const SurvivalForest& forest, const SurvivalDataset& data,
                                                   const ImportanceConfig& config = {});

/// Same tree machinery on 0/1 labels; predicts the pooled in-node positive fraction.
class BinaryForest : public Ensemble {
 public:
  BinaryForest() = default;
  BinaryForest(Ensemble ensemble, std::vector<int> train_labels);

  const std::vector<int>& train_labels() const { return train_labels_; }
  double predict(std::span<const double> x) const;

  nlohmann::json to_json() const;
  static BinaryForest from_json(const nlohmann::json& doc);

 private:
  std::vector<int> train_labels_;
};

BinaryForest fit_binary_forest(const LabeledDataset& data, const ForestConfig& config);
double predict_binary(const BinaryForest& forest, std::span<const double> x);

}  // namespace survivalkit
