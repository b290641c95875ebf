#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"
#include "survivalkit/survival_core.hpp"

namespace survivalkit {

/// Covariates with a 0/1 response, for the binary churn mode.
struct LabeledDataset {
  std::vector<std::vector<double>> covariates;
  std::vector<int> labels;
  std::vector<std::string> feature_names;

  std::size_t size() const { return labels.size(); }
  std::size_t dim() const { return feature_names.size(); }
  void validate() const;
};

struct TreeConfig {
  double alpha = 0.05;
  std::size_t min_node_size = 20;
  std::size_t min_split_size = 60;
  std::optional<std::size_t> mtry;  // features tried per node; nullopt = all
  std::uint64_t rng_seed = 1;

  void validate() const;
};

enum class ResponseKind { survival, binary };

/// Column-major copy of the training data shared by every tree of a forest.
/// For binary data `events` holds the labels and `times` is unused.
struct TrainingFrame {
  ResponseKind kind = ResponseKind::survival;
  std::size_t n_rows = 0;
  std::vector<std::string> feature_names;
  std::vector<std::vector<double>> columns;  // [feature][row]
  std::vector<double> times;
  std::vector<char> events;

  std::size_t n_features() const { return columns.size(); }

  static TrainingFrame from_survival(const SurvivalDataset& data);
  static TrainingFrame from_labeled(const LabeledDataset& data);
};

struct AssociationTest {
  double statistic = 0.0;
  double p_value = 1.0;
};

/// Linear rank statistic T = sum w x h standardized by its permutation mean and
/// variance; asymptotic chi-square(1) p-value. Constant x or h gives p = 1.
AssociationTest rank_association_test(std::span<const double> scores, std::span<const double> feature_values,
                                      std::span<const double> weights);

struct SplitCandidate {
  double threshold = 0.0;
  double criterion = 0.0;  // standardized two-sample statistic
};

/// Best `x <= threshold` cut over midpoints of consecutive distinct values,
/// with both sides weighing at least `min_node_size`.
std::optional<SplitCandidate> best_split(std::span<const double> scores, std::span<const double> feature_values,
                                         std::span<const double> weights, double min_node_size);

/// Convenience form: log-rank scores over `rows` (repeats allowed) of `data`.
std::optional<SplitCandidate> best_split(const SurvivalDataset& data, std::span<const std::size_t> rows,
                                         std::size_t feature, std::size_t min_node_size);

struct InternalNode {
  std::size_t feature = 0;
  double threshold = 0.0;
  double p_value = 1.0;  // multiplicity adjusted
  double statistic = 0.0;
  std::size_t left = 0;
  std::size_t right = 0;
};

struct TerminalNode {
  std::vector<std::size_t> members;  // distinct training rows
  std::vector<double> weights;       // case weight (bootstrap multiplicity) per member
  double n = 0.0;
  SurvivalCurve curve;     // survival mode
  double event_rate = 0.0;  // binary mode: weighted fraction of positives
};

using TreeNode = std::variant<InternalNode, TerminalNode>;

/// Flat tree; node 0 is the root.
class ConditionalTree {
 public:
  ConditionalTree() = default;
  ConditionalTree(ResponseKind kind, std::size_t n_features, std::vector<TreeNode> nodes);

  ResponseKind kind() const { return kind_; }
  std::size_t n_features() const { return n_features_; }
  const std::vector<TreeNode>& nodes() const { return nodes_; }
  const TreeNode& root() const { return nodes_.front(); }

  std::size_t terminal_index(std::span<const double> x) const;
  const TerminalNode& terminal(std::span<const double> x) const;
  std::size_t depth() const;
  std::size_t n_terminals() const;

 private:
  ResponseKind kind_ = ResponseKind::survival;
  std::size_t n_features_ = 0;
  std::vector<TreeNode> nodes_;
};

/// Grows one tree from per-row case weights (zero = row not used).
ConditionalTree grow_tree(const TrainingFrame& frame, std::span<const double> case_weights, const TreeConfig& config);

/// Grows a survival tree on `rows` (repeats count as multiplicity).
ConditionalTree grow_tree(const SurvivalDataset& data, std::span<const std::size_t> rows, const TreeConfig& config);

struct TreePrediction {
  std::vector<std::size_t> terminal_members;
  SurvivalCurve curve;
};

TreePrediction predict_tree(const ConditionalTree& tree, std::span<const double> x);

nlohmann::json to_json(const ConditionalTree& tree);
ConditionalTree tree_from_json(const nlohmann::json& doc, ResponseKind kind, std::size_t n_features);

}  // namespace survivalkit
