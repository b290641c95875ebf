#include "survivalkit/models.hpp"

#include <algorithm>
#include <memory>

namespace survivalkit {

namespace {

const char* const kKinds[] = {"km", "cox", "forest", "binary-forest"};

template <class... Fs>
struct overloaded : Fs... {
  using Fs::operator()...;
};
template <class... Fs>
overloaded(Fs...) -> overloaded<Fs...>;

nlohmann::json cox_config_json(const CoxConfig& c) {
  return {{"tol", c.tol}, {"max_iter", c.max_iter}};
}

}  // namespace

void ModelSpec::validate() const {
  if (std::find(std::begin(kKinds), std::end(kKinds), kind) == std::end(kKinds)) {
    throw Error("unknown model '" + kind + "'");
  }
  if (kind == "forest" || kind == "binary-forest") forest.validate();
}

nlohmann::json to_json(const ModelSpec& spec) {
  nlohmann::json doc{{"model", spec.kind}};
  if (spec.kind == "cox") doc["cox"] = cox_config_json(spec.cox);
  if (spec.kind == "forest" || spec.kind == "binary-forest") doc["forest"] = to_json(spec.forest);
  return doc;
}

LabeledDataset event_labels(const SurvivalDataset& data) {
  LabeledDataset out;
  out.feature_names = data.feature_names();
  for (const auto& o : data.observations()) {
    out.covariates.push_back(o.covariates);
    out.labels.push_back(o.event ? 1 : 0);
  }
  return out;
}

Model fit_model(const ModelSpec& spec, const SurvivalDataset& data) {
  spec.validate();
  if (spec.kind == "km") return KaplanMeierModel{data.feature_names(), kaplan_meier(data)};
  if (spec.kind == "cox") return fit_cox(data, spec.cox);
  if (spec.kind == "forest") return fit_forest(data, spec.forest);
  return fit_binary_forest(event_labels(data), spec.forest);
}

std::string model_kind(const Model& model) { return kKinds[model.index()]; }

const std::vector<std::string>& model_features(const Model& model) {
  return std::visit(overloaded{[](const KaplanMeierModel& m) -> const std::vector<std::string>& { return m.feature_names; },
                               [](const CoxModel& m) -> const std::vector<std::string>& { return m.feature_names; },
                               [](const Ensemble& m) -> const std::vector<std::string>& { return m.feature_names(); }},
                    model);
}

SurvivalCurve predict_curve(const Model& model, std::span<const double> x) {
  if (x.size() != model_features(model).size()) throw Error("covariate dimension mismatch");
  return std::visit(overloaded{[](const KaplanMeierModel& m) { return m.curve; },
                               [&](const CoxModel& m) { return predict_cox_survival(m, x); },
                               [&](const SurvivalForest& m) { return m.predict(x); },
                               [](const BinaryForest&) -> SurvivalCurve {
                                 throw Error("binary-forest predicts probabilities, not survival curves");
                               }},
                    model);
}

ModelFitter make_fitter(const ModelSpec& spec) {
  spec.validate();
  if (spec.kind == "binary-forest") throw Error("binary-forest predicts probabilities, not survival curves");
  return [spec](const SurvivalDataset& train) -> CurvePredictor {
    auto model = std::make_shared<const Model>(fit_model(spec, train));
    return [model](std::span<const double> x) { return predict_curve(*model, x); };
  };
}

nlohmann::json to_json(const Model& model) {
  return std::visit(overloaded{[](const KaplanMeierModel& m) -> nlohmann::json {
                                 return {{"model", "km"},
                                         {"features", m.feature_names},
                                         {"times", m.curve.times()},
                                         {"survival", m.curve.probs()}};
                               },
                               [](const CoxModel& m) { return to_json(m); },
                               [](const SurvivalForest& m) { return m.to_json(); },
                               [](const BinaryForest& m) { return m.to_json(); }},
                    model);
}

Model model_from_json(const nlohmann::json& doc) {
  if (!doc.is_object() || !doc.contains("model")) throw Error("schema mismatch: not a model document");
  const auto kind = doc["model"].get<std::string>();
  if (kind == "km") {
    return KaplanMeierModel{doc.at("features").get<std::vector<std::string>>(),
                            {doc.at("times").get<std::vector<double>>(), doc.at("survival").get<std::vector<double>>()}};
  }
  if (kind == "cox") return cox_model_from_json(doc);
  if (kind == "forest") return SurvivalForest::from_json(doc);
  if (kind == "binary-forest") return BinaryForest::from_json(doc);
  throw Error("unknown model '" + kind + "'");
}

}  // namespace survivalkit
