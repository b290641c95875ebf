// survivalkit: batch front end over the library. Every subcommand reads files,
// writes files and is a pure function of its inputs, flags and seed.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "survivalkit/churn_pipeline.hpp"
#include "survivalkit/evaluation.hpp"
#include "survivalkit/models.hpp"
#include "survivalkit/parallel.hpp"
#include "survivalkit/synthetic_data.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace survivalkit;

namespace {

struct RunConfig {
  std::string input;
  std::string output;
  std::string model = "forest";
  std::uint64_t seed = 1;
  std::string segment = "all";
  std::vector<std::string> features;
  std::string config;

  // featurize
  std::int64_t inactivity_days = 10;
  std::string observation_end;
  double whale_quantile = 0.9;

  // fit
  std::size_t n_trees = 1000;
  double alpha = 0.05;
  std::optional<std::size_t> mtry;
  std::size_t min_node_size = 20;
  std::size_t min_split_size = 60;

  // predict / evaluate / importance
  std::optional<double> horizon;
  std::string curves_dir;
  std::string mode = "holdout";
  std::size_t n_boot = 1000;
  std::size_t grid_points = 100;
  double test_fraction = 0.5;
  std::size_t n_repeats = 5;
};

// Left out of the default feature set: for churned players it equals the
// survival time itself.
const char* const kLeakyFeature = "lifetime_days";

std::ofstream open_output(const std::string& path) {
  if (path.empty()) throw Error("missing --output");
  const auto parent = fs::path(path).parent_path();
  if (!parent.empty()) fs::create_directories(parent);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path);
  return out;
}

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::exception&) {
    throw Error("invalid JSON in " + path);
  }
}

std::optional<Segment> segment_filter(const RunConfig& c) {
  if (c.segment == "all") return std::nullopt;
  return parse_segment(c.segment);
}

/// Covariates used for fitting: --features if given, else every CSV covariate
/// except the leaky one.
std::vector<std::string> fit_features(const RunConfig& c, const DatasetCsv& csv) {
  if (!c.features.empty()) return c.features;
  std::vector<std::string> out;
  for (const auto& name : csv.data.feature_names()) {
    if (name != kLeakyFeature) out.push_back(name);
  }
  return out;
}

/// Player ids of the rows select_dataset keeps, or row numbers without an id column.
std::vector<std::string> selected_ids(const DatasetCsv& csv, std::optional<Segment> segment) {
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < csv.data.size(); ++i) {
    if (segment && parse_segment(csv.segments.at(i)) != *segment) continue;
    ids.push_back(csv.player_ids.empty() ? std::to_string(i) : csv.player_ids[i]);
  }
  return ids;
}

ModelSpec model_spec(const RunConfig& c, const std::string& kind) {
  ModelSpec spec;
  spec.kind = kind;
  spec.forest.n_trees = c.n_trees;
  spec.forest.rng_seed = c.seed;
  spec.forest.tree.alpha = c.alpha;
  spec.forest.tree.mtry = c.mtry;
  spec.forest.tree.min_node_size = c.min_node_size;
  spec.forest.tree.min_split_size = c.min_split_size;
  spec.validate();
  return spec;
}

std::vector<SurvivalCurve> predict_all(const Model& model, const SurvivalDataset& data) {
  std::vector<SurvivalCurve> out(data.size());
  parallel_for(data.size(), [&](std::size_t i) { out[i] = predict_curve(model, data[i].covariates); });
  return out;
}

std::string optional_double(const std::optional<double>& v) { return v ? format_double(*v) : ""; }

void write_error_curve(const std::string& path, const ErrorCurve& curve) {
  auto out = open_output(path);
  out << "time,brier_score\n";
  for (std::size_t k = 0; k < curve.times.size(); ++k) {
    out << format_double(curve.times[k]) << ',' << format_double(curve.bs[k]) << '\n';
  }
}

void write_calibration(const std::string& path, const CalibrationPairs& pairs) {
  auto out = open_output(path);
  out << "observed,predicted,mean,difference\n";
  for (std::size_t k = 0; k < pairs.observed.size(); ++k) {
    out << format_double(pairs.observed[k]) << ',' << format_double(pairs.predicted[k]) << ','
        << format_double(pairs.mean[k]) << ',' << format_double(pairs.difference[k]) << '\n';
  }
}

CalibrationPairs calibration_of(std::span<const SurvivalCurve> curves, const SurvivalDataset& data) {
  std::vector<std::optional<double>> medians;
  for (const auto& c : curves) medians.push_back(median_survival(c));
  return calibration_pairs(medians, data);
}

// Commands ------------------------------------------------------------------

void cmd_simulate(const RunConfig& c, bool seed_given) {
  auto doc = read_json_file(c.input);
  if (seed_given) doc["seed"] = c.seed;
  const auto type = doc.value("type", "survival");
  auto out = open_output(c.output);
  if (type == "survival") {
    write_dataset_csv(out, sample_survival(hazard_spec_from_json(doc)));
  } else if (type == "event_log") {
    write_event_log(out, sample_event_log(cohort_spec_from_json(doc)));
  } else {
    throw Error("unknown simulation type '" + type + "'");
  }
}

void cmd_featurize(const RunConfig& c) {
  ChurnConfig config;
  config.inactivity_days = c.inactivity_days;
  config.whale_quantile = c.whale_quantile;
  if (!c.observation_end.empty()) config.observation_end_day = parse_day(c.observation_end);
  auto rows = featurize(read_event_log(c.input), config);
  auto out = open_output(c.output);
  write_feature_csv(out, rows);
}

void cmd_fit(const RunConfig& c) {
  const auto csv = read_dataset_csv(c.input);
  const auto data = select_dataset(csv, fit_features(c, csv), segment_filter(c));
  const auto model = fit_model(model_spec(c, c.model), data);
  auto out = open_output(c.output);
  out << to_json(model).dump() << '\n';
}

void cmd_predict(const RunConfig& c) {
  const auto model = model_from_json(read_json_file(c.model));
  const auto csv = read_dataset_csv(c.input);
  const auto data = select_dataset(csv, model_features(model), segment_filter(c));
  const auto ids = selected_ids(csv, segment_filter(c));
  auto out = open_output(c.output);

  if (const auto* binary = std::get_if<BinaryForest>(&model)) {
    out << "player_id,churn_probability\n";
    for (std::size_t i = 0; i < data.size(); ++i) {
      out << ids[i] << ',' << format_double(binary->predict(data[i].covariates)) << '\n';
    }
    return;
  }
  const double horizon = c.horizon.value_or(30.0);
  const auto curves = predict_all(model, data);
  out << "player_id,median_survival,at_risk,curve_file\n";
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto risk = classify_risk(curves[i], horizon);
    std::string curve_file;
    if (!c.curves_dir.empty()) {
      curve_file = (fs::path(c.curves_dir) / (ids[i] + ".csv")).string();
      auto curve_out = open_output(curve_file);
      write_curve_csv(curve_out, curves[i]);
    }
    out << ids[i] << ',' << optional_double(risk.median) << ',' << (risk.at_risk ? 1 : 0) << ',' << curve_file
        << '\n';
  }
}

json effective_json(const RunConfig& c, const std::string& kind, const std::vector<std::string>& features) {
  json doc{{"input", c.input},       {"model", c.model},         {"mode", c.mode},
           {"seed", c.seed},         {"segment", c.segment},     {"features", features},
           {"n-boot", c.n_boot},     {"grid-points", c.grid_points}, {"test-fraction", c.test_fraction}};
  doc["horizon"] = c.horizon ? json(*c.horizon) : json(nullptr);
  if (kind == "forest" || kind == "binary-forest") {
    doc["n-trees"] = c.n_trees;
    doc["alpha"] = c.alpha;
    doc["mtry"] = c.mtry ? json(*c.mtry) : json(nullptr);
    doc["min-node-size"] = c.min_node_size;
    doc["min-split-size"] = c.min_split_size;
  }
  return doc;
}

/// Seeded split of row indices into (train, test).
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> holdout_split(std::size_t n, double test_fraction,
                                                                            std::uint64_t seed) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::mt19937_64 rng(derive_seed(seed, 0));
  std::shuffle(idx.begin(), idx.end(), rng);
  const auto n_test = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(n)));
  if (n_test == 0 || n_test >= n) throw Error("test fraction leaves an empty split");
  std::vector<std::size_t> test(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_test));
  std::vector<std::size_t> train(idx.begin() + static_cast<std::ptrdiff_t>(n_test), idx.end());
  std::sort(test.begin(), test.end());
  std::sort(train.begin(), train.end());
  return {train, test};
}

void cmd_evaluate(const RunConfig& c) {
  if (c.mode != "holdout" && c.mode != "bootstrap-cv") throw Error("unknown mode '" + c.mode + "'");
  if (!(c.test_fraction > 0.0 && c.test_fraction < 1.0)) throw Error("test fraction must be in (0, 1)");
  if (c.grid_points < 2) throw Error("grid points must be >= 2");

  // --model is either a fitted model file or a model kind to fit here.
  const bool from_file = fs::is_regular_file(c.model);
  std::optional<Model> fitted;
  std::string kind = c.model;
  if (from_file) {
    fitted = model_from_json(read_json_file(c.model));
    kind = model_kind(*fitted);
  }
  const auto csv = read_dataset_csv(c.input);
  const auto features = fitted ? model_features(*fitted) : fit_features(c, csv);
  const auto data = select_dataset(csv, features, segment_filter(c));

  json summary{{"model", kind}, {"mode", c.mode}, {"n", data.size()}};
  const fs::path dir(c.output);
  fs::create_directories(dir);

  if (kind == "binary-forest") {
    if (c.mode != "holdout") throw Error("binary-forest supports holdout evaluation only");
    SurvivalDataset test = data;
    if (!fitted) {
      auto [train_rows, test_rows] = holdout_split(data.size(), c.test_fraction, c.seed);
      fitted = fit_model(model_spec(c, kind), data.subset(train_rows));
      test = data.subset(test_rows);
    }
    const auto& forest = std::get<BinaryForest>(*fitted);
    const auto labeled = event_labels(test);
    std::vector<double> scores;
    for (const auto& x : labeled.covariates) scores.push_back(forest.predict(x));
    summary["auc"] = roc_auc(scores, labeled.labels);
    summary["n_test"] = test.size();
    summary["config"] = effective_json(c, kind, features);
    auto out = open_output((dir / "summary.json").string());
    out << summary.dump(2) << '\n';
    return;
  }

  if (c.mode == "holdout") {
    SurvivalDataset test = data;
    if (!fitted) {
      auto [train_rows, test_rows] = holdout_split(data.size(), c.test_fraction, c.seed);
      fitted = fit_model(model_spec(c, kind), data.subset(train_rows));
      test = data.subset(test_rows);
    }
    const auto grid = default_grid(test, c.grid_points, c.horizon);
    const auto curves = predict_all(*fitted, test);
    const auto curve = brier_curve(curves, test, grid);
    write_error_curve((dir / "error_curve.csv").string(), curve);
    write_calibration((dir / "calibration.csv").string(), calibration_of(curves, test));
    summary["ibs"] = curve.ibs;
    summary["n_boot"] = 0;
    summary["horizon"] = curve.times.back();
    summary["truncated"] = curve.truncated;
    summary["n_test"] = test.size();
  } else {
    if (c.n_boot < 1) throw Error("n_boot must be >= 1");
    // A model file contributes only its kind; settings come from flags and config.
    const auto spec = model_spec(c, kind);
    const auto grid = default_grid(data, c.grid_points, c.horizon);
    const auto result = bootstrap_cv_error(make_fitter(spec), data, c.n_boot, grid, c.seed);
    write_error_curve((dir / "error_curve.csv").string(), result.mean_curve);

    // Calibration from a fit on all rows: out-of-bag for forests, apparent otherwise.
    const auto full = fit_model(spec, data);
    if (const auto* forest = std::get_if<SurvivalForest>(&full)) {
      std::vector<std::optional<double>> medians(data.size());
      parallel_for(data.size(), [&](std::size_t i) {
        if (forest->oob_count(i) > 0) medians[i] = median_survival(forest->predict_oob(data[i].covariates, i));
      });
      write_calibration((dir / "calibration.csv").string(), calibration_pairs(medians, data));
    } else {
      write_calibration((dir / "calibration.csv").string(), calibration_of(predict_all(full, data), data));
    }
    summary["ibs"] = result.mean_curve.ibs;
    summary["n_boot"] = result.n_boot;
    summary["horizon"] = result.mean_curve.times.back();
    summary["truncated"] = result.mean_curve.truncated;
    summary["replicate_ibs"] = result.replicate_ibs;
  }
  summary["config"] = effective_json(c, kind, features);
  auto out = open_output((dir / "summary.json").string());
  out << summary.dump(2) << '\n';
}

void cmd_importance(const RunConfig& c) {
  const auto model = model_from_json(read_json_file(c.model));
  const auto* forest = std::get_if<SurvivalForest>(&model);
  if (!forest) throw Error("importance needs a forest model");
  const auto csv = read_dataset_csv(c.input);
  const auto data = select_dataset(csv, forest->feature_names(), segment_filter(c));
  ImportanceConfig config;
  config.n_repeats = c.n_repeats;
  config.seed = c.seed;
  config.grid_points = c.grid_points;
  config.horizon = c.horizon;
  auto out = open_output(c.output);
  out << "feature,importance,std_error,row_std_error,rank\n";
  for (const auto& f : variable_importance(*forest, data, config)) {
    out << f.feature << ',' << format_double(f.importance) << ',' << format_double(f.std_error) << ','
        << format_double(f.row_std_error) << ',' << f.rank << '\n';
  }
}

// Config files ----------------------------------------------------------------

std::string scalar_text(const json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_null()) throw Error("config values cannot be null");
  return v.dump();
}

/// Fills options the command line left unset from a JSON object whose keys
/// are flag names without the leading dashes. Keys meant for other
/// subcommands are skipped; keys no subcommand knows are rejected.
void apply_config(CLI::App& app, CLI::App& sub, const std::string& path) {
  const auto doc = read_json_file(path);
  if (!doc.is_object()) throw Error("config must be a JSON object");
  for (const auto& [key, value] : doc.items()) {
    if (key == "config") continue;
    CLI::Option* opt = sub.get_option_no_throw("--" + key);
    if (!opt) {
      bool known = false;
      for (const auto* other : app.get_subcommands({})) known = known || other->get_option_no_throw("--" + key);
      if (!known) throw Error("unknown config key '" + key + "'");
      continue;
    }
    if (opt->count() > 0 || value.is_null()) continue;
    if (value.is_array()) {
      for (const auto& item : value) opt->add_result(scalar_text(item));
    } else {
      opt->add_result(scalar_text(value));
    }
    opt->run_callback();
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"survivalkit: churn survival modeling"};
  app.require_subcommand(1);
  RunConfig c;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--input", c.input, "input file")->required();
    sub->add_option("--output", c.output, "output path")->required();
    sub->add_option("--seed", c.seed, "random seed");
    sub->add_option("--config", c.config, "JSON config; flags take precedence");
  };
  auto data_selection = [&](CLI::App* sub) {
    sub->add_option("--segment", c.segment, "whale, payer, non_payer or all");
  };
  auto forest_options = [&](CLI::App* sub) {
    sub->add_option("--features", c.features, "comma-separated covariates")->delimiter(',');
    sub->add_option("--n-trees", c.n_trees, "trees per forest");
    sub->add_option("--alpha", c.alpha, "split significance level");
    sub->add_option("--mtry", c.mtry, "features tried per node");
    sub->add_option("--min-node-size", c.min_node_size);
    sub->add_option("--min-split-size", c.min_split_size);
  };

  auto* simulate = app.add_subcommand("simulate", "sample a survival dataset or an event log from a JSON spec");
  common(simulate);

  auto* featurize_cmd = app.add_subcommand("featurize", "event log CSV to feature CSV");
  common(featurize_cmd);
  featurize_cmd->add_option("--inactivity-days", c.inactivity_days, "days without play that count as churn");
  featurize_cmd->add_option("--observation-end", c.observation_end, "YYYY-MM-DD; default last event day");
  featurize_cmd->add_option("--whale-quantile", c.whale_quantile);

  auto* fit = app.add_subcommand("fit", "fit km, cox, forest or binary-forest");
  common(fit);
  data_selection(fit);
  forest_options(fit);
  fit->add_option("--model", c.model, "km, cox, forest or binary-forest");

  auto* predict = app.add_subcommand("predict", "median survival and risk flags per player");
  common(predict);
  data_selection(predict);
  predict->add_option("--model", c.model, "model JSON")->required();
  predict->add_option("--horizon", c.horizon, "days; at_risk means median <= horizon (default 30)");
  predict->add_option("--curves-dir", c.curves_dir, "write one survival curve CSV per player");

  auto* evaluate = app.add_subcommand("evaluate", "Brier error curve, IBS summary and calibration pairs");
  common(evaluate);
  data_selection(evaluate);
  forest_options(evaluate);
  evaluate->add_option("--model", c.model, "model JSON or model kind")->required();
  evaluate->add_option("--mode", c.mode, "holdout or bootstrap-cv");
  evaluate->add_option("--n-boot", c.n_boot, "bootstrap replicates");
  evaluate->add_option("--horizon", c.horizon, "IBS horizon in days");
  evaluate->add_option("--grid-points", c.grid_points);
  evaluate->add_option("--test-fraction", c.test_fraction, "held-out share when fitting a kind");

  auto* importance = app.add_subcommand("importance", "permutation importance of a forest");
  common(importance);
  data_selection(importance);
  importance->add_option("--model", c.model, "forest model JSON")->required();
  importance->add_option("--n-repeats", c.n_repeats);
  importance->add_option("--horizon", c.horizon);
  importance->add_option("--grid-points", c.grid_points);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }

  try {
    CLI::App* sub = app.get_subcommands().front();
    const bool seed_flag = sub->get_option("--seed")->count() > 0;
    if (!c.config.empty()) apply_config(app, *sub, c.config);
    const bool seed_given = sub->get_option("--seed")->count() > 0 || seed_flag;
    const auto name = sub->get_name();
    if (name == "simulate") cmd_simulate(c, seed_given);
    if (name == "featurize") cmd_featurize(c);
    if (name == "fit") cmd_fit(c);
    if (name == "predict") cmd_predict(c);
    if (name == "evaluate") cmd_evaluate(c);
    if (name == "importance") cmd_importance(c);
  } catch (const std::exception& e) {
    std::string msg = e.what();
    std::replace(msg.begin(), msg.end(), '\n', ' ');
    std::cerr << "error: " << msg << '\n';
    return 1;
  }
  return 0;
}
