#include <optional>
#include <string>
#include <vector>

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "survivalkit/cox.hpp"
#include "survivalkit/evaluation.hpp"
#include "survivalkit/models.hpp"
#include "survivalkit/survival_core.hpp"
#include "survivalkit/survival_forest.hpp"
#include "survivalkit/synthetic_data.hpp"

namespace py = pybind11;
using namespace survivalkit;

namespace {

SurvivalDataset make_dataset(const std::vector<double>& times, const std::vector<bool>& events,
                             const std::optional<std::vector<std::vector<double>>>& covariates,
                             const std::optional<std::vector<std::string>>& feature_names) {
  if (times.size() != events.size()) throw Error("length mismatch");
  if (covariates && covariates->size() != times.size()) throw Error("length mismatch");
  std::vector<std::string> names;
  if (feature_names) {
    names = *feature_names;
  } else if (covariates && !covariates->empty()) {
    for (std::size_t j = 0; j < covariates->front().size(); ++j) names.push_back("x" + std::to_string(j + 1));
  }
  std::vector<Observation> rows;
  rows.reserve(times.size());
  for (std::size_t i = 0; i < times.size(); ++i) {
    rows.push_back({times[i], events[i], covariates ? (*covariates)[i] : std::vector<double>{}, 1.0});
  }
  return {std::move(rows), std::move(names)};
}

}  // namespace

PYBIND11_MODULE(_survivalkit, m) {
  m.doc() = "Censored survival models for churn prediction";
  py::register_exception<Error>(m, "SurvivalkitError", PyExc_ValueError);

  py::class_<SurvivalCurve>(m, "SurvivalCurve")
      .def(py::init<std::vector<double>, std::vector<double>>(), py::arg("times"), py::arg("probs"))
      .def_property_readonly("times", &SurvivalCurve::times)
      .def_property_readonly("probs", &SurvivalCurve::probs)
      .def("__call__", &SurvivalCurve::operator(), py::arg("t"))
      .def("left_limit", &SurvivalCurve::left_limit, py::arg("t"))
      .def("__len__", &SurvivalCurve::size);

  py::class_<SurvivalDataset>(m, "SurvivalDataset")
      .def(py::init(&make_dataset), py::arg("times"), py::arg("events"), py::arg("covariates") = py::none(),
           py::arg("feature_names") = py::none())
      .def("__len__", &SurvivalDataset::size)
      .def_property_readonly("feature_names", &SurvivalDataset::feature_names)
      .def_property_readonly("times",
                             [](const SurvivalDataset& d) {
                               std::vector<double> t;
                               for (const auto& o : d.observations()) t.push_back(o.time);
                               return t;
                             })
      .def_property_readonly("events",
                             [](const SurvivalDataset& d) {
                               std::vector<bool> e;
                               for (const auto& o : d.observations()) e.push_back(o.event);
                               return e;
                             })
      .def_property_readonly("covariates", [](const SurvivalDataset& d) {
        std::vector<std::vector<double>> x;
        for (const auto& o : d.observations()) x.push_back(o.covariates);
        return x;
      });

  m.def("kaplan_meier", py::overload_cast<const SurvivalDataset&>(&kaplan_meier), py::arg("data"));
  m.def("median_survival", &median_survival, py::arg("curve"));

  py::class_<CoxModel>(m, "CoxModel")
      .def_readonly("feature_names", &CoxModel::feature_names)
      .def_readonly("beta", &CoxModel::beta)
      .def_readonly("loglik", &CoxModel::loglik)
      .def_readonly("n_iter", &CoxModel::n_iter)
      .def_readonly("converged", &CoxModel::converged)
      .def(
          "predict", [](const CoxModel& m, const std::vector<double>& x) { return predict_cox_survival(m, x); },
          py::arg("x"));
  m.def(
      "fit_cox", [](const SurvivalDataset& data, int max_iter) {
        CoxConfig config;
        config.max_iter = max_iter;
        return fit_cox(data, config);
      },
      py::arg("data"), py::arg("max_iter") = 50);

  py::class_<SurvivalForest>(m, "SurvivalForest")
      .def_property_readonly("n_trees", &SurvivalForest::n_trees)
      .def_property_readonly("feature_names", &SurvivalForest::feature_names)
      .def(
          "predict", [](const SurvivalForest& f, const std::vector<double>& x) { return f.predict(x); },
          py::arg("x"))
      .def(
          "predict_oob",
          [](const SurvivalForest& f, const std::vector<double>& x, std::size_t row) { return f.predict_oob(x, row); },
          py::arg("x"), py::arg("row"))
      .def("to_json", [](const SurvivalForest& f) { return f.to_json().dump(); })
      .def_static("from_json", [](const std::string& text) {
        return SurvivalForest::from_json(nlohmann::json::parse(text));
      });
  m.def(
      "fit_forest",
      [](const SurvivalDataset& data, std::size_t n_trees, double alpha, std::optional<std::size_t> mtry,
         std::size_t min_node_size, std::size_t min_split_size, std::uint64_t seed, std::size_t threads) {
        ForestConfig config;
        config.n_trees = n_trees;
        config.tree.alpha = alpha;
        config.tree.mtry = mtry;
        config.tree.min_node_size = min_node_size;
        config.tree.min_split_size = min_split_size;
        config.rng_seed = seed;
        config.threads = threads;
        py::gil_scoped_release release;
        return fit_forest(data, config);
      },
      py::arg("data"), py::arg("n_trees") = 1000, py::arg("alpha") = 0.05, py::arg("mtry") = py::none(),
      py::arg("min_node_size") = 20, py::arg("min_split_size") = 60, py::arg("seed") = 1, py::arg("threads") = 0);

  py::class_<FeatureImportance>(m, "FeatureImportance")
      .def_readonly("feature", &FeatureImportance::feature)
      .def_readonly("importance", &FeatureImportance::importance)
      .def_readonly("std_error", &FeatureImportance::std_error)
      .def_readonly("row_std_error", &FeatureImportance::row_std_error)
      .def_readonly("rank", &FeatureImportance::rank);
  m.def(
      "variable_importance",
      [](const SurvivalForest& forest, const SurvivalDataset& data, std::size_t n_repeats, std::uint64_t seed,
         std::optional<double> horizon) {
        ImportanceConfig config;
        config.n_repeats = n_repeats;
        config.seed = seed;
        config.horizon = horizon;
        py::gil_scoped_release release;
        return variable_importance(forest, data, config);
      },
      py::arg("forest"), py::arg("data"), py::arg("n_repeats") = 5, py::arg("seed") = 1,
      py::arg("horizon") = py::none());

  py::class_<ErrorCurve>(m, "ErrorCurve")
      .def_readonly("times", &ErrorCurve::times)
      .def_readonly("bs", &ErrorCurve::bs)
      .def_readonly("ibs", &ErrorCurve::ibs)
      .def_readonly("truncated", &ErrorCurve::truncated);
  m.def("default_grid", &default_grid, py::arg("data"), py::arg("points") = 100, py::arg("horizon") = py::none(),
        py::arg("quantile") = 0.95);
  m.def(
      "brier_curve",
      [](const std::vector<SurvivalCurve>& predictions, const SurvivalDataset& data, const std::vector<double>& grid) {
        return brier_curve(predictions, data, grid);
      },
      py::arg("predictions"), py::arg("data"), py::arg("grid"));
  m.def(
      "roc_auc", [](const std::vector<double>& scores, const std::vector<int>& labels) { return roc_auc(scores, labels); },
      py::arg("scores"), py::arg("labels"));
  m.def(
      "welch_t_test",
      [](const std::vector<double>& a, const std::vector<double>& b) {
        const auto r = welch_t_test(a, b);
        return py::make_tuple(r.t, r.df, r.p_value);
      },
      py::arg("a"), py::arg("b"));

  m.def(
      "sample_survival", [](const std::string& spec_json) {
        return sample_survival(hazard_spec_from_json(nlohmann::json::parse(spec_json)));
      },
      py::arg("spec_json"));
}
