#pragma once

#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"
#include "survivalkit/survival_core.hpp"

namespace survivalkit {

struct CoxConfig {
  double tol = 1e-6;             // gradient max-norm
  int max_iter = 50;
  double rel_loglik_tol = 1e-9;
  int max_halvings = 20;
  double divergence_bound = 50.0;  // on standardized coefficients
};

/// Fitted proportional-hazards model: h(t|x) = h0(t) exp(beta . x), with the
/// Breslow step estimate of the cumulative baseline hazard.
struct CoxModel {
  std::vector<std::string> feature_names;
  std::vector<double> beta;
  std::vector<double> baseline_times;
  std::vector<double> baseline_cumhaz;
  double loglik = 0.0;
  int n_iter = 0;
  bool converged = false;

  double linear_predictor(std::span<const double> x) const;
};

/// Breslow log partial likelihood with its gradient and Hessian in beta.
struct CoxDerivatives {
  double loglik = 0.0;
  Eigen::VectorXd gradient;
  Eigen::MatrixXd hessian;
};

double cox_log_partial_likelihood(const SurvivalDataset& data, std::span<const double> beta);
CoxDerivatives cox_derivatives(const SurvivalDataset& data, std::span<const double> beta);

/// Newton-Raphson with step-halving on internally standardized covariates.
/// Throws Error("no events"), Error("collinear covariates") or
/// Error("separation / non-identifiable").
CoxModel fit_cox(const SurvivalDataset& data, const CoxConfig& config = {});

SurvivalCurve predict_cox_survival(const CoxModel& model, std::span<const double> x);

nlohmann::json to_json(const CoxModel& model);
CoxModel cox_model_from_json(const nlohmann::json& doc);

}  // namespace survivalkit
