#pragma once

#include <span>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"
#include "survivalkit/conditional_tree.hpp"
#include "survivalkit/cox.hpp"
#include "survivalkit/evaluation.hpp"
#include "survivalkit/survival_forest.hpp"

namespace survivalkit {

/// Covariate-free baseline: the pooled Kaplan-Meier curve.
struct KaplanMeierModel {
  std::vector<std::string> feature_names;  // kept so predict can check the schema
  SurvivalCurve curve;
};

using Model = std::variant<KaplanMeierModel, CoxModel, SurvivalForest, BinaryForest>;

/// What to fit: "km", "cox", "forest" or "binary-forest", with its settings.
struct ModelSpec {
  std::string kind = "forest";
  CoxConfig cox;
  ForestConfig forest;

  void validate() const;
};

nlohmann::json to_json(const ModelSpec& spec);

/// Binary view of survival data: label 1 for an observed event.
LabeledDataset event_labels(const SurvivalDataset& data);

Model fit_model(const ModelSpec& spec, const SurvivalDataset& data);
std::string model_kind(const Model& model);
const std::vector<std::string>& model_features(const Model& model);

/// Survival curve at x. Binary forests have none and throw.
SurvivalCurve predict_curve(const Model& model, std::span<const double> x);

/// Adapter for bootstrap_cv_error. Binary forests are rejected.
ModelFitter make_fitter(const ModelSpec& spec);

nlohmann::json to_json(const Model& model);
Model model_from_json(const nlohmann::json& doc);

}  // namespace survivalkit
