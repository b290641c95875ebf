#include "survivalkit/conditional_tree.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace survivalkit {

void LabeledDataset::validate() const {
  if (labels.empty()) throw Error("empty dataset");
  if (covariates.size() != labels.size()) throw Error("length mismatch");
  for (const auto& row : covariates) {
    if (row.size() != feature_names.size()) throw Error("covariate dimension mismatch");
  }
  bool has0 = false, has1 = false;
  for (int y : labels) {
    if (y != 0 && y != 1) throw Error("labels must be 0 or 1");
    has0 = has0 || y == 0;
    has1 = has1 || y == 1;
  }
  if (!has0 || !has1) throw Error("degenerate labels");
}

void TreeConfig::validate() const {
  if (!(alpha > 0.0 && alpha < 1.0)) throw Error("alpha must lie in (0,1)");
  if (min_node_size < 1) throw Error("min_node_size must be >= 1");
  if (min_split_size < 2 * min_node_size) throw Error("min_split_size must be >= 2 * min_node_size");
  if (mtry && *mtry == 0) throw Error("mtry must be >= 1");
}

TrainingFrame TrainingFrame::from_survival(const SurvivalDataset& data) {
  TrainingFrame f;
  f.kind = ResponseKind::survival;
  f.n_rows = data.size();
  f.feature_names = data.feature_names();
  f.columns.assign(data.dim(), std::vector<double>(data.size()));
  for (std::size_t i = 0; i < data.size(); ++i) {
    for (std::size_t j = 0; j < data.dim(); ++j) f.columns[j][i] = data.covariate(i, j);
    f.times.push_back(data.time(i));
    f.events.push_back(data.event(i) ? 1 : 0);
  }
  return f;
}

TrainingFrame TrainingFrame::from_labeled(const LabeledDataset& data) {
  data.validate();
  TrainingFrame f;
  f.kind = ResponseKind::binary;
  f.n_rows = data.size();
  f.feature_names = data.feature_names;
  f.columns.assign(data.dim(), std::vector<double>(data.size()));
  for (std::size_t i = 0; i < data.size(); ++i) {
    for (std::size_t j = 0; j < data.dim(); ++j) f.columns[j][i] = data.covariates[i][j];
    f.times.push_back(0.0);
    f.events.push_back(static_cast<char>(data.labels[i]));
  }
  return f;
}

namespace {

struct ScoreMoments {
  double n = 0.0;     // total weight
  double mean = 0.0;  // E(h)
  double var = 0.0;   // V(h), divisor n
};

ScoreMoments score_moments(std::span<const double> scores, std::span<const double> weights) {
  ScoreMoments m;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    m.n += weights[i];
    m.mean += weights[i] * scores[i];
  }
  if (m.n <= 0.0) return m;
  m.mean /= m.n;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const double d = scores[i] - m.mean;
    m.var += weights[i] * d * d;
  }
  m.var /= m.n;
  return m;
}

double chisq1_upper(double c) { return std::erfc(std::sqrt(0.5 * c)); }

}  // namespace

AssociationTest rank_association_test(std::span<const double> scores, std::span<const double> feature_values,
                                      std::span<const double> weights) {
  if (scores.size() != feature_values.size() || scores.size() != weights.size()) {
    throw Error("length mismatch");
  }
  const auto m = score_moments(scores, weights);
  if (m.n <= 1.0 || m.var <= 0.0) return {};

  bool constant = true;
  std::optional<double> first;
  double sum_wx = 0.0, stat = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (weights[i] <= 0.0) continue;
    if (!first) first = feature_values[i];
    else if (feature_values[i] != *first) constant = false;
    sum_wx += weights[i] * feature_values[i];
    stat += weights[i] * feature_values[i] * scores[i];
  }
  if (constant) return {};
  const double xbar = sum_wx / m.n;
  double ssx = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const double d = feature_values[i] - xbar;
    ssx += weights[i] * d * d;
  }
  // Permutation variance of T: V(h) * n/(n-1) * sum w (x - xbar)^2.
  const double variance = m.var * m.n / (m.n - 1.0) * ssx;
  if (!(variance > 0.0)) return {};
  const double mu = m.mean * sum_wx;
  const double c = (stat - mu) * (stat - mu) / variance;
  return {c, chisq1_upper(c)};
}

std::optional<SplitCandidate> best_split(std::span<const double> scores, std::span<const double> feature_values,
                                         std::span<const double> weights, double min_node_size) {
  if (scores.size() != feature_values.size() || scores.size() != weights.size()) {
    throw Error("length mismatch");
  }
  std::vector<std::size_t> order;
  order.reserve(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (weights[i] > 0.0) order.push_back(i);
  }
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return feature_values[a] < feature_values[b]; });

  const auto m = score_moments(scores, weights);
  if (m.n <= 1.0 || m.var <= 0.0 || order.empty()) return std::nullopt;

  std::optional<SplitCandidate> best;
  double left_w = 0.0, left_sum = 0.0;
  for (std::size_t k = 0; k + 1 < order.size(); ++k) {
    const auto i = order[k];
    left_w += weights[i];
    left_sum += weights[i] * scores[i];
    const double here = feature_values[i];
    const double next = feature_values[order[k + 1]];
    if (next == here) continue;
    const double right_w = m.n - left_w;
    if (left_w < min_node_size || right_w < min_node_size) continue;
    // Indicator covariate: sum w (x - xbar)^2 = n_L n_R / n.
    const double variance = m.var * left_w * right_w / (m.n - 1.0);
    if (!(variance > 0.0)) continue;
    const double diff = left_sum - m.mean * left_w;
    const double c = diff * diff / variance;
    if (!best || c > best->criterion) {
      best = SplitCandidate{here + 0.5 * (next - here), c};
    }
  }
  return best;
}

std::optional<SplitCandidate> best_split(const SurvivalDataset& data, std::span<const std::size_t> rows,
                                         std::size_t feature, std::size_t min_node_size) {
  if (feature >= data.dim()) throw Error("feature index out of range");
  std::vector<double> times, weights, values;
  std::vector<char> events;
  for (auto r : rows) {
    times.push_back(data.time(r));
    events.push_back(data.event(r) ? 1 : 0);
    weights.push_back(1.0);
    values.push_back(data.covariate(r, feature));
  }
  if (rows.empty()) return std::nullopt;
  auto scores = logrank_scores(times, events, weights);
  return best_split(scores, values, weights, static_cast<double>(min_node_size));
}

ConditionalTree::ConditionalTree(ResponseKind kind, std::size_t n_features, std::vector<TreeNode> nodes)
    : kind_(kind), n_features_(n_features), nodes_(std::move(nodes)) {
  if (nodes_.empty()) throw Error("tree without nodes");
}

std::size_t ConditionalTree::terminal_index(std::span<const double> x) const {
  if (x.size() != n_features_) throw Error("dimension mismatch");
  std::size_t idx = 0;
  while (const auto* inner = std::get_if<InternalNode>(&nodes_[idx])) {
    idx = x[inner->feature] <= inner->threshold ? inner->left : inner->right;
  }
  return idx;
}

const TerminalNode& ConditionalTree::terminal(std::span<const double> x) const {
  return std::get<TerminalNode>(nodes_[terminal_index(x)]);
}

std::size_t ConditionalTree::depth() const {
  std::vector<std::size_t> level(nodes_.size(), 0);
  std::size_t deepest = 0;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (const auto* inner = std::get_if<InternalNode>(&nodes_[i])) {
      level[inner->left] = level[i] + 1;
      level[inner->right] = level[i] + 1;
      deepest = std::max(deepest, level[i] + 1);
    }
  }
  return deepest;
}

std::size_t ConditionalTree::n_terminals() const {
  return static_cast<std::size_t>(std::count_if(nodes_.begin(), nodes_.end(),
                                                [](const auto& n) { return std::holds_alternative<TerminalNode>(n); }));
}

namespace {

class TreeGrower {
 public:
  TreeGrower(const TrainingFrame& frame, const TreeConfig& config)
      : frame_(frame), config_(config), rng_(config.rng_seed) {}

  std::vector<TreeNode> grow(std::vector<std::size_t> rows, std::vector<double> weights) {
    nodes_.clear();
    grow_node(std::move(rows), std::move(weights));
    return std::move(nodes_);
  }

 private:
  std::size_t make_terminal(std::vector<std::size_t> rows, std::vector<double> weights) {
    TerminalNode t;
    t.n = std::accumulate(weights.begin(), weights.end(), 0.0);
    if (frame_.kind == ResponseKind::survival) {
      std::vector<double> times;
      std::vector<char> events;
      for (auto r : rows) {
        times.push_back(frame_.times[r]);
        events.push_back(frame_.events[r]);
      }
      t.curve = kaplan_meier(build_risk_table(times, events, weights));
    } else {
      double pos = 0.0;
      for (std::size_t k = 0; k < rows.size(); ++k) pos += frame_.events[rows[k]] ? weights[k] : 0.0;
      t.event_rate = pos / t.n;
    }
    // Members sorted by row for a canonical layout.
    std::vector<std::size_t> order(rows.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](auto a, auto b) { return rows[a] < rows[b]; });
    for (auto k : order) {
      t.members.push_back(rows[k]);
      t.weights.push_back(weights[k]);
    }
    nodes_.emplace_back(std::move(t));
    return nodes_.size() - 1;
  }

  std::vector<double> node_scores(const std::vector<std::size_t>& rows, const std::vector<double>& weights) const {
    if (frame_.kind == ResponseKind::binary) {
      std::vector<double> y;
      y.reserve(rows.size());
      for (auto r : rows) y.push_back(frame_.events[r] ? 1.0 : 0.0);
      return y;
    }
    std::vector<double> times;
    std::vector<char> events;
    times.reserve(rows.size());
    events.reserve(rows.size());
    for (auto r : rows) {
      times.push_back(frame_.times[r]);
      events.push_back(frame_.events[r]);
    }
    return logrank_scores(times, events, weights);
  }

  static bool constant_in_node(const std::vector<double>& values, const std::vector<double>& weights) {
    std::optional<double> first;
    for (std::size_t k = 0; k < values.size(); ++k) {
      if (weights[k] <= 0.0) continue;
      if (!first) first = values[k];
      else if (values[k] != *first) return false;
    }
    return true;
  }

  std::vector<std::size_t> sample_features() {
    const auto p = frame_.n_features();
    std::vector<std::size_t> features(p);
    std::iota(features.begin(), features.end(), 0);
    const auto k = std::min(p, config_.mtry.value_or(p));
    if (k == p) return features;
    // Partial Fisher-Yates.
    for (std::size_t i = 0; i < k; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, p - 1);
      std::swap(features[i], features[pick(rng_)]);
    }
    features.resize(k);
    std::sort(features.begin(), features.end());
    return features;
  }

  std::size_t grow_node(std::vector<std::size_t> rows, std::vector<double> weights) {
    const double n = std::accumulate(weights.begin(), weights.end(), 0.0);
    if (n < static_cast<double>(config_.min_split_size) || frame_.n_features() == 0) {
      return make_terminal(std::move(rows), std::move(weights));
    }
    const auto scores = node_scores(rows, weights);
    const auto features = sample_features();

    std::vector<double> values(rows.size());
    double best_p = 2.0, best_stat = 0.0;
    std::size_t best_feature = 0;
    std::size_t n_tested = 0;
    for (auto f : features) {
      for (std::size_t k = 0; k < rows.size(); ++k) values[k] = frame_.columns[f][rows[k]];
      if (constant_in_node(values, weights)) continue;
      ++n_tested;
      const auto test = rank_association_test(scores, values, weights);
      if (test.p_value < best_p || (test.p_value == best_p && test.statistic > best_stat)) {
        best_p = test.p_value;
        best_stat = test.statistic;
        best_feature = f;
      }
    }
    // Bonferroni over the features tested at this node. Features constant in
    // the node carry no test, so they do not count.
    if (n_tested == 0) return make_terminal(std::move(rows), std::move(weights));
    const double adjusted = std::min(1.0, best_p * static_cast<double>(n_tested));
    if (!(adjusted <= config_.alpha)) {
      return make_terminal(std::move(rows), std::move(weights));
    }

    for (std::size_t k = 0; k < rows.size(); ++k) values[k] = frame_.columns[best_feature][rows[k]];
    const auto split = best_split(scores, values, weights, static_cast<double>(config_.min_node_size));
    if (!split) {
      return make_terminal(std::move(rows), std::move(weights));
    }

    std::vector<std::size_t> left_rows, right_rows;
    std::vector<double> left_w, right_w;
    for (std::size_t k = 0; k < rows.size(); ++k) {
      if (values[k] <= split->threshold) {
        left_rows.push_back(rows[k]);
        left_w.push_back(weights[k]);
      } else {
        right_rows.push_back(rows[k]);
        right_w.push_back(weights[k]);
      }
    }
    const std::size_t self = nodes_.size();
    nodes_.emplace_back(InternalNode{best_feature, split->threshold, adjusted, split->criterion, 0, 0});
    const auto left = grow_node(std::move(left_rows), std::move(left_w));
    const auto right = grow_node(std::move(right_rows), std::move(right_w));
    auto& inner = std::get<InternalNode>(nodes_[self]);
    inner.left = left;
    inner.right = right;
    return self;
  }

  const TrainingFrame& frame_;
  const TreeConfig& config_;
  std::mt19937_64 rng_;
  std::vector<TreeNode> nodes_;
};

}  // namespace

ConditionalTree grow_tree(const TrainingFrame& frame, std::span<const double> case_weights, const TreeConfig& config) {
  config.validate();
  if (case_weights.size() != frame.n_rows) throw Error("case weight length mismatch");
  std::vector<std::size_t> rows;
  std::vector<double> weights;
  for (std::size_t i = 0; i < frame.n_rows; ++i) {
    if (case_weights[i] > 0.0) {
      rows.push_back(i);
      weights.push_back(case_weights[i]);
    }
  }
  if (rows.empty()) throw Error("empty dataset");
  TreeGrower grower(frame, config);
  return {frame.kind, frame.n_features(), grower.grow(std::move(rows), std::move(weights))};
}

ConditionalTree grow_tree(const SurvivalDataset& data, std::span<const std::size_t> rows, const TreeConfig& config) {
  auto frame = TrainingFrame::from_survival(data);
  std::vector<double> weights(data.size(), 0.0);
  for (auto r : rows) {
    if (r >= data.size()) throw Error("row index out of range");
    weights[r] += data[r].weight;
  }
  return grow_tree(frame, weights, config);
}

TreePrediction predict_tree(const ConditionalTree& tree, std::span<const double> x) {
  const auto& t = tree.terminal(x);
  return {t.members, t.curve};
}

namespace {

nlohmann::json node_json(const ConditionalTree& tree, std::size_t idx) {
  const auto& node = tree.nodes()[idx];
  if (const auto* inner = std::get_if<InternalNode>(&node)) {
    return {{"feature", inner->feature},
            {"threshold", inner->threshold},
            {"p_value", inner->p_value},
            {"statistic", inner->statistic},
            {"left", node_json(tree, inner->left)},
            {"right", node_json(tree, inner->right)}};
  }
  const auto& t = std::get<TerminalNode>(node);
  nlohmann::json term = {{"n", t.n}, {"members", t.members}, {"weights", t.weights}};
  if (tree.kind() == ResponseKind::survival) {
    term["times"] = t.curve.times();
    term["probs"] = t.curve.probs();
  } else {
    term["rate"] = t.event_rate;
  }
  return {{"terminal", std::move(term)}};
}

std::size_t parse_node(const nlohmann::json& doc, ResponseKind kind, std::size_t n_features,
                       std::vector<TreeNode>& nodes) {
  if (doc.contains("terminal")) {
    const auto& term = doc.at("terminal");
    TerminalNode t;
    term.at("n").get_to(t.n);
    term.at("members").get_to(t.members);
    term.at("weights").get_to(t.weights);
    if (t.members.size() != t.weights.size()) throw Error("schema mismatch: terminal members/weights");
    if (kind == ResponseKind::survival) {
      t.curve = SurvivalCurve(term.at("times").get<std::vector<double>>(), term.at("probs").get<std::vector<double>>());
    } else {
      term.at("rate").get_to(t.event_rate);
    }
    nodes.emplace_back(std::move(t));
    return nodes.size() - 1;
  }
  InternalNode inner;
  doc.at("feature").get_to(inner.feature);
  doc.at("threshold").get_to(inner.threshold);
  doc.at("p_value").get_to(inner.p_value);
  inner.statistic = doc.value("statistic", 0.0);
  if (inner.feature >= n_features) throw Error("schema mismatch: split feature out of range");
  const std::size_t self = nodes.size();
  nodes.emplace_back(inner);
  const auto left = parse_node(doc.at("left"), kind, n_features, nodes);
  const auto right = parse_node(doc.at("right"), kind, n_features, nodes);
  auto& node = std::get<InternalNode>(nodes[self]);
  node.left = left;
  node.right = right;
  return self;
}

}  // namespace

nlohmann::json to_json(const ConditionalTree& tree) { return node_json(tree, 0); }

ConditionalTree tree_from_json(const nlohmann::json& doc, ResponseKind kind, std::size_t n_features) {
  std::vector<TreeNode> nodes;
  parse_node(doc, kind, n_features, nodes);
  return {kind, n_features, std::move(nodes)};
}

}  // namespace survivalkit
