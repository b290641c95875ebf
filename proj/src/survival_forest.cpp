#include "survivalkit/survival_forest.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "survivalkit/evaluation.hpp"
#include "survivalkit/parallel.hpp"

namespace survivalkit {

namespace {

constexpr std::size_t npos = std::numeric_limits<std::size_t>::max();

std::size_t sample_size(const ForestConfig& config, std::size_t n) {
  auto m = static_cast<std::size_t>(std::llround(config.bootstrap_fraction * static_cast<double>(n)));
  m = std::max<std::size_t>(m, 1);
  return config.sample_with_replacement ? m : std::min(m, n);
}

/// Grows all trees of an ensemble; tree b uses seeds derived from (seed, b) only.
Ensemble grow_ensemble(const TrainingFrame& frame, std::span<const double> row_weights, ForestConfig config) {
  config.validate();
  const std::size_t n = frame.n_rows;
  const std::size_t p = frame.n_features();
  if (!config.tree.mtry && p > 0) {
    config.tree.mtry = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(p))));
  }
  const std::size_t m = sample_size(config, n);

  std::vector<ConditionalTree> trees(config.n_trees);
  std::vector<std::vector<std::uint32_t>> inbag(config.n_trees, std::vector<std::uint32_t>(n, 0));
  parallel_for(
      config.n_trees,
      [&](std::size_t b) {
        std::mt19937_64 rng(derive_seed(config.rng_seed, 2 * b));
        auto& counts = inbag[b];
        if (config.sample_with_replacement) {
          std::uniform_int_distribution<std::size_t> pick(0, n - 1);
          for (std::size_t k = 0; k < m; ++k) ++counts[pick(rng)];
        } else if (m == n) {
          std::fill(counts.begin(), counts.end(), 1);
        } else {
          std::vector<std::size_t> idx(n);
          std::iota(idx.begin(), idx.end(), 0);
          for (std::size_t k = 0; k < m; ++k) {
            std::uniform_int_distribution<std::size_t> pick(k, n - 1);
            std::swap(idx[k], idx[pick(rng)]);
            counts[idx[k]] = 1;
          }
        }
        std::vector<double> case_weights(n);
        for (std::size_t i = 0; i < n; ++i) case_weights[i] = counts[i] * row_weights[i];
        TreeConfig tc = config.tree;
        tc.rng_seed = derive_seed(config.rng_seed, 2 * b + 1);
        trees[b] = grow_tree(frame, case_weights, tc);
      },
      config.threads);
  return Ensemble(config, frame.feature_names, std::move(trees), std::move(inbag));
}

void check_row_weights(std::span<const double> w) {
  for (double v : w) {
    if (!(v > 0.0)) throw Error("forest training rows need positive weights");
  }
}

}  // namespace

void ForestConfig::validate() const {
  if (n_trees < 1) throw Error("n_trees must be >= 1");
  if (!(bootstrap_fraction > 0.0)) throw Error("bootstrap_fraction must be positive");
  if (!sample_with_replacement && bootstrap_fraction > 1.0) {
    throw Error("bootstrap_fraction above 1 needs sampling with replacement");
  }
  tree.validate();
}

nlohmann::json to_json(const ForestConfig& c) {
  nlohmann::json doc = {{"n_trees", c.n_trees},
                        {"alpha", c.tree.alpha},
                        {"min_node_size", c.tree.min_node_size},
                        {"min_split_size", c.tree.min_split_size},
                        {"bootstrap_fraction", c.bootstrap_fraction},
                        {"sample_with_replacement", c.sample_with_replacement},
                        {"rng_seed", c.rng_seed}};
  doc["mtry"] = c.tree.mtry ? nlohmann::json(*c.tree.mtry) : nlohmann::json(nullptr);
  return doc;
}

ForestConfig forest_config_from_json(const nlohmann::json& doc) {
  ForestConfig c;
  c.n_trees = doc.value("n_trees", c.n_trees);
  c.tree.alpha = doc.value("alpha", c.tree.alpha);
  c.tree.min_node_size = doc.value("min_node_size", c.tree.min_node_size);
  c.tree.min_split_size = doc.value("min_split_size", c.tree.min_split_size);
  c.bootstrap_fraction = doc.value("bootstrap_fraction", c.bootstrap_fraction);
  c.sample_with_replacement = doc.value("sample_with_replacement", c.sample_with_replacement);
  c.rng_seed = doc.value("rng_seed", c.rng_seed);
  if (doc.contains("mtry") && !doc["mtry"].is_null()) c.tree.mtry = doc["mtry"].get<std::size_t>();
  c.validate();
  return c;
}

Ensemble::Ensemble(ForestConfig config, std::vector<std::string> feature_names, std::vector<ConditionalTree> trees,
                   std::vector<std::vector<std::uint32_t>> inbag)
    : config_(std::move(config)),
      feature_names_(std::move(feature_names)),
      trees_(std::move(trees)),
      inbag_(std::move(inbag)) {
  if (trees_.empty()) throw Error("forest without trees");
  if (inbag_.size() != trees_.size()) throw Error("one in-bag record per tree required");
  for (const auto& counts : inbag_) {
    if (counts.size() != inbag_.front().size()) throw Error("in-bag records differ in length");
  }
  for (const auto& t : trees_) {
    if (t.n_features() != feature_names_.size()) throw Error("dimension mismatch");
  }
}

std::size_t Ensemble::oob_count(std::size_t row) const {
  std::size_t c = 0;
  for (const auto& counts : inbag_) c += counts[row] == 0 ? 1 : 0;
  return c;
}

void Ensemble::check_dim(std::span<const double> x) const {
  if (x.size() != feature_names_.size()) throw Error("dimension mismatch");
}

nlohmann::json Ensemble::ensemble_json() const {
  nlohmann::json inbag = nlohmann::json::array();
  for (const auto& counts : inbag_) {
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < counts.size(); ++i) rows.insert(rows.end(), counts[i], i);
    inbag.push_back(std::move(rows));
  }
  nlohmann::json trees = nlohmann::json::array();
  for (const auto& t : trees_) trees.push_back(survivalkit::to_json(t));
  return {{"features", feature_names_}, {"config", survivalkit::to_json(config_)}, {"inbag", std::move(inbag)},
          {"trees", std::move(trees)}};
}

Ensemble Ensemble::ensemble_from_json(const nlohmann::json& doc, ResponseKind kind) {
  auto names = doc.at("features").get<std::vector<std::string>>();
  auto config = forest_config_from_json(doc.at("config"));
  const std::size_t n = doc.contains("train_times") ? doc["train_times"].size() : doc.at("train_labels").size();
  std::vector<std::vector<std::uint32_t>> inbag;
  for (const auto& rows : doc.at("inbag")) {
    std::vector<std::uint32_t> counts(n, 0);
    for (const auto& r : rows) {
      const auto i = r.get<std::size_t>();
      if (i >= n) throw Error("in-bag row out of range");
      ++counts[i];
    }
    inbag.push_back(std::move(counts));
  }
  std::vector<ConditionalTree> trees;
  for (const auto& t : doc.at("trees")) trees.push_back(tree_from_json(t, kind, names.size()));
  return Ensemble(std::move(config), std::move(names), std::move(trees), std::move(inbag));
}

SurvivalForest::SurvivalForest(Ensemble ensemble, std::vector<double> train_times, std::vector<char> train_events)
    : Ensemble(std::move(ensemble)), train_times_(std::move(train_times)), train_events_(std::move(train_events)) {
  if (train_times_.size() != n_train() || train_events_.size() != n_train()) {
    throw Error("training outcome length mismatch");
  }
  for (std::size_t i = 0; i < train_times_.size(); ++i) {
    if (train_events_[i]) grid_.push_back(train_times_[i]);
  }
  std::sort(grid_.begin(), grid_.end());
  grid_.erase(std::unique(grid_.begin(), grid_.end()), grid_.end());
  risk_end_.resize(train_times_.size());
  event_pos_.assign(train_times_.size(), npos);
  for (std::size_t i = 0; i < train_times_.size(); ++i) {
    const auto it = std::upper_bound(grid_.begin(), grid_.end(), train_times_[i]);
    risk_end_[i] = static_cast<std::size_t>(it - grid_.begin());
    if (train_events_[i]) event_pos_[i] = risk_end_[i] - 1;
  }
}

template <class Input, class Keep>
SurvivalCurve SurvivalForest::aggregate(Input input, Keep keep) const {
  const std::size_t g = grid_.size();
  std::vector<double> leaving(g + 1, 0.0);  // weight whose last at-risk grid index is k - 1
  std::vector<double> events(g, 0.0);
  double total = 0.0;
  bool any = false;
  for (std::size_t b = 0; b < trees_.size(); ++b) {
    if (!keep(b)) continue;
    any = true;
    const auto& node = trees_[b].terminal(input(b));
    for (std::size_t k = 0; k < node.members.size(); ++k) {
      const auto r = node.members[k];
      const double w = node.weights[k];
      total += w;
      leaving[risk_end_[r]] += w;
      if (event_pos_[r] != npos) events[event_pos_[r]] += w;
    }
  }
  if (!any) throw Error("no trees available for prediction");

  std::vector<double> times, probs;
  double gone = leaving[0], s = 1.0;
  for (std::size_t j = 0; j < g; ++j) {
    if (events[j] > 0.0) {
      const double at_risk = total - gone;
      s *= 1.0 - events[j] / at_risk;
      s = std::clamp(s, 0.0, 1.0);
      times.push_back(grid_[j]);
      probs.push_back(s);
    }
    gone += leaving[j + 1];
  }
  return {std::move(times), std::move(probs)};
}

SurvivalCurve SurvivalForest::predict(std::span<const double> x) const {
  check_dim(x);
  return aggregate([&](std::size_t) { return x; }, [](std::size_t) { return true; });
}

SurvivalCurve SurvivalForest::predict_oob(std::span<const double> x, std::size_t row) const {
  check_dim(x);
  if (row >= n_train()) throw Error("row index out of range");
  return aggregate([&](std::size_t) { return x; }, [&](std::size_t b) { return inbag_[b][row] == 0; });
}

nlohmann::json SurvivalForest::to_json() const {
  auto doc = ensemble_json();
  doc["model"] = "forest";
  doc["train_times"] = train_times_;
  std::vector<int> events(train_events_.begin(), train_events_.end());
  doc["train_events"] = events;
  return doc;
}

SurvivalForest SurvivalForest::from_json(const nlohmann::json& doc) {
  if (doc.value("model", "") != "forest") throw Error("not a forest model");
  auto times = doc.at("train_times").get<std::vector<double>>();
  auto ev = doc.at("train_events").get<std::vector<int>>();
  std::vector<char> events(ev.begin(), ev.end());
  return {ensemble_from_json(doc, ResponseKind::survival), std::move(times), std::move(events)};
}

SurvivalForest fit_forest(const SurvivalDataset& data, const ForestConfig& config) {
  const auto frame = TrainingFrame::from_survival(data);
  std::vector<double> w;
  for (const auto& obs : data.observations()) w.push_back(obs.weight);
  check_row_weights(w);
  auto ensemble = grow_ensemble(frame, w, config);
  return {std::move(ensemble), frame.times, frame.events};
}

SurvivalCurve predict_forest_survival(const SurvivalForest& forest, std::span<const double> x) {
  return forest.predict(x);
}

std::vector<SurvivalCurve> predict_forest_survival(const SurvivalForest& forest,
                                                   const std::vector<std::vector<double>>& rows,
                                                   std::size_t threads) {
  std::vector<SurvivalCurve> out(rows.size());
  parallel_for(rows.size(), [&](std::size_t i) { out[i] = forest.predict(rows[i]); }, threads);
  return out;
}

RiskPrediction classify_risk(const SurvivalCurve& curve, double horizon) {
  if (!(horizon > 0.0)) throw Error("horizon must be positive");
  RiskPrediction r;
  r.median = median_survival(curve);
  r.at_risk = r.median && *r.median <= horizon;
  return r;
}

RiskPrediction predict_median_and_risk(const SurvivalForest& forest, std::span<const double> x, double horizon) {
  if (!(horizon > 0.0)) throw Error("horizon must be positive");
  return classify_risk(forest.predict(x), horizon);
}

std::vector<FeatureImportance> variable_importance(const SurvivalForest& forest, const SurvivalDataset& data,
                                                   const ImportanceConfig& config) {
  if (data.size() != forest.n_train() || data.dim() != forest.n_features()) {
    throw Error("dataset does not match the forest's training data");
  }
  if (config.n_repeats < 1) throw Error("n_repeats must be >= 1");
  std::vector<std::size_t> oob_rows;
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (forest.oob_count(i) > 0) oob_rows.push_back(i);
  }
  if (oob_rows.empty()) throw Error("no out-of-bag data");

  const auto censoring = censoring_survival(data);
  const auto grid = default_grid(data, config.grid_points, config.horizon);
  const auto oob_data = data.subset(oob_rows);

  // Per-row integrated losses; importance is their mean difference.
  auto oob_losses = [&](std::optional<std::size_t> feature, const std::vector<std::size_t>& perm) {
    std::vector<SurvivalCurve> preds(oob_rows.size());
    std::vector<double> x;
    for (std::size_t k = 0; k < oob_rows.size(); ++k) {
      x = data[oob_rows[k]].covariates;
      if (feature) x[*feature] = data.covariate(oob_rows[perm[k]], *feature);
      preds[k] = forest.predict_oob(x, oob_rows[k]);
    }
    return brier_contributions(preds, oob_data, grid, censoring);
  };

  const std::size_t m = oob_rows.size();
  std::vector<std::size_t> identity(m);
  std::iota(identity.begin(), identity.end(), 0);
  const auto baseline = oob_losses(std::nullopt, identity);

  const std::size_t p = data.dim();
  const std::size_t reps = config.n_repeats;
  std::vector<std::vector<double>> delta(p * reps);  // [feature * reps + repeat][oob row]
  parallel_for(
      p * reps,
      [&](std::size_t task) {
        const std::size_t f = task / reps;
        std::mt19937_64 rng(derive_seed(config.seed, task));
        auto perm = identity;
        std::shuffle(perm.begin(), perm.end(), rng);
        auto losses = oob_losses(f, perm);
        for (std::size_t k = 0; k < m; ++k) losses[k] -= baseline[k];
        delta[task] = std::move(losses);
      },
      config.threads);

  auto mean_sd = [](const std::vector<double>& v) {
    const double n = static_cast<double>(v.size());
    const double mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    return std::pair{mean, v.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0};
  };

  std::vector<FeatureImportance> out(p);
  for (std::size_t f = 0; f < p; ++f) {
    out[f].feature = data.feature_names()[f];
    std::vector<double> per_repeat(reps), per_row(m, 0.0);
    for (std::size_t r = 0; r < reps; ++r) {
      const auto& d = delta[f * reps + r];
      per_repeat[r] = std::accumulate(d.begin(), d.end(), 0.0) / static_cast<double>(m);
      for (std::size_t k = 0; k < m; ++k) per_row[k] += d[k] / static_cast<double>(reps);
    }
    const auto [mean, sd_repeat] = mean_sd(per_repeat);
    out[f].importance = mean;
    out[f].std_error = sd_repeat / std::sqrt(static_cast<double>(reps));
    out[f].row_std_error = mean_sd(per_row).second / std::sqrt(static_cast<double>(m));
  }
  std::vector<std::size_t> order(p);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](auto a, auto b) { return out[a].importance > out[b].importance; });
  for (std::size_t k = 0; k < p; ++k) out[order[k]].rank = k + 1;
  return out;
}

BinaryForest::BinaryForest(Ensemble ensemble, std::vector<int> train_labels)
    : Ensemble(std::move(ensemble)), train_labels_(std::move(train_labels)) {
  if (train_labels_.size() != n_train()) throw Error("training label length mismatch");
}

double BinaryForest::predict(std::span<const double> x) const {
  check_dim(x);
  double pos = 0.0, total = 0.0;
  for (const auto& tree : trees_) {
    const auto& node = tree.terminal(x);
    for (std::size_t k = 0; k < node.members.size(); ++k) {
      total += node.weights[k];
      if (train_labels_[node.members[k]] == 1) pos += node.weights[k];
    }
  }
  return pos / total;
}

nlohmann::json BinaryForest::to_json() const {
  auto doc = ensemble_json();
  doc["model"] = "binary-forest";
  doc["train_labels"] = train_labels_;
  return doc;
}

BinaryForest BinaryForest::from_json(const nlohmann::json& doc) {
  if (doc.value("model", "") != "binary-forest") throw Error("not a binary forest model");
  auto labels = doc.at("train_labels").get<std::vector<int>>();
  return {ensemble_from_json(doc, ResponseKind::binary), std::move(labels)};
}

BinaryForest fit_binary_forest(const LabeledDataset& data, const ForestConfig& config) {
  const auto frame = TrainingFrame::from_labeled(data);
  std::vector<double> w(frame.n_rows, 1.0);
  return {grow_ensemble(frame, w, config), data.labels};
}

double predict_binary(const BinaryForest& forest, std::span<const double> x) { return forest.predict(x); }

}  // namespace survivalkit
