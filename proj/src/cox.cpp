#include "survivalkit/cox.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace survivalkit {

namespace {

struct Design {
  Eigen::MatrixXd x;  // n x p
  std::vector<double> times;
  std::vector<char> events;
  std::vector<double> weights;
  std::vector<std::size_t> order;  // indices by decreasing time
};

Design make_design(const SurvivalDataset& data) {
  const auto n = data.size();
  const auto p = data.dim();
  Design d;
  d.x.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(p));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < p; ++j) {
      d.x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = data.covariate(i, j);
    }
    d.times.push_back(data.time(i));
    d.events.push_back(data.event(i) ? 1 : 0);
    d.weights.push_back(data[i].weight);
  }
  d.order.resize(n);
  std::iota(d.order.begin(), d.order.end(), 0);
  std::stable_sort(d.order.begin(), d.order.end(),
                   [&](auto a, auto b) { return d.times[a] > d.times[b]; });
  return d;
}

// One backward sweep over decreasing times accumulates the risk-set sums
// S0 = sum w e^eta, S1 = sum w e^eta x, S2 = sum w e^eta x x^T.
CoxDerivatives derivatives(const Design& d, const Eigen::VectorXd& beta, bool need_hessian) {
  const auto n = static_cast<Eigen::Index>(d.times.size());
  const auto p = d.x.cols();
  Eigen::VectorXd eta = d.x * beta;
  const double shift = n > 0 ? eta.maxCoeff() : 0.0;

  CoxDerivatives out;
  out.gradient = Eigen::VectorXd::Zero(p);
  out.hessian = Eigen::MatrixXd::Zero(p, p);
  double s0 = 0.0;
  Eigen::VectorXd s1 = Eigen::VectorXd::Zero(p);
  Eigen::MatrixXd s2 = Eigen::MatrixXd::Zero(p, p);

  std::size_t k = 0;
  const auto total = d.order.size();
  while (k < total) {
    const double t = d.times[d.order[k]];
    double dead = 0.0;
    std::size_t start = k;
    for (; k < total && d.times[d.order[k]] == t; ++k) {
      const auto i = static_cast<Eigen::Index>(d.order[k]);
      const double w = d.weights[d.order[k]];
      const double r = w * std::exp(eta(i) - shift);
      s0 += r;
      s1.noalias() += r * d.x.row(i).transpose();
      if (need_hessian) s2.noalias() += r * d.x.row(i).transpose() * d.x.row(i);
    }
    for (std::size_t m = start; m < k; ++m) {
      const auto i = static_cast<Eigen::Index>(d.order[m]);
      if (!d.events[d.order[m]]) continue;
      const double w = d.weights[d.order[m]];
      out.loglik += w * eta(i);
      out.gradient.noalias() += w * d.x.row(i).transpose();
      dead += w;
    }
    if (dead > 0.0) {
      out.loglik -= dead * (std::log(s0) + shift);
      const Eigen::VectorXd mean = s1 / s0;
      out.gradient.noalias() -= dead * mean;
      if (need_hessian) out.hessian.noalias() -= dead * (s2 / s0 - mean * mean.transpose());
    }
  }
  return out;
}

Eigen::VectorXd to_vector(std::span<const double> v) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
  for (std::size_t j = 0; j < v.size(); ++j) out(static_cast<Eigen::Index>(j)) = v[j];
  return out;
}

void check_dim(const SurvivalDataset& data, std::span<const double> beta) {
  if (beta.size() != data.dim()) {
    throw Error("dimension mismatch: beta has " + std::to_string(beta.size()) + " entries, data has " +
                std::to_string(data.dim()) + " covariates");
  }
}

}  // namespace

double CoxModel::linear_predictor(std::span<const double> x) const {
  if (x.size() != beta.size()) {
    throw Error("dimension mismatch");
  }
  double eta = 0.0;
  for (std::size_t j = 0; j < x.size(); ++j) eta += beta[j] * x[j];
  return eta;
}

double cox_log_partial_likelihood(const SurvivalDataset& data, std::span<const double> beta) {
  check_dim(data, beta);
  return derivatives(make_design(data), to_vector(beta), false).loglik;
}

CoxDerivatives cox_derivatives(const SurvivalDataset& data, std::span<const double> beta) {
  check_dim(data, beta);
  return derivatives(make_design(data), to_vector(beta), true);
}

CoxModel fit_cox(const SurvivalDataset& data, const CoxConfig& config) {
  const auto p = static_cast<Eigen::Index>(data.dim());
  double event_weight = 0.0;
  for (const auto& obs : data.observations()) {
    if (obs.event) event_weight += obs.weight;
  }
  if (event_weight <= 0.0) {
    throw Error("no events");
  }
  if (p == 0) {
    throw Error("collinear covariates");
  }

  Design design = make_design(data);
  const auto n = design.x.rows();
  Eigen::VectorXd center = design.x.colwise().mean();
  Eigen::VectorXd scale(p);
  for (Eigen::Index j = 0; j < p; ++j) {
    const double var = (design.x.col(j).array() - center(j)).square().sum() / static_cast<double>(n);
    scale(j) = std::sqrt(var);
    if (!(scale(j) > 1e-12 * std::max(1.0, std::abs(center(j))))) {
      throw Error("collinear covariates");
    }
  }
  for (Eigen::Index j = 0; j < p; ++j) {
    design.x.col(j) = (design.x.col(j).array() - center(j)) / scale(j);
  }

  Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
  CoxDerivatives cur = derivatives(design, beta, true);
  auto grad_norm = [&](const Eigen::VectorXd& g) {
    // Both the standardized and the original-scale gradient must be small.
    return std::max(g.cwiseAbs().maxCoeff(), g.cwiseQuotient(scale).cwiseAbs().maxCoeff());
  };

  // Information on the diagonal collapses toward zero along a direction of
  // monotone likelihood; compare against its value at beta = 0.
  const Eigen::VectorXd initial_info = (-cur.hessian).diagonal();
  auto check_separation = [&](const CoxDerivatives& d, const Eigen::VectorXd& b) {
    const Eigen::VectorXd info = (-d.hessian).diagonal();
    for (Eigen::Index j = 0; j < p; ++j) {
      if (info(j) < 1e-5 * initial_info(j) || std::abs(b(j)) > config.divergence_bound) {
        throw Error("separation / non-identifiable");
      }
    }
  };

  CoxModel model;
  model.feature_names = data.feature_names();
  bool converged = grad_norm(cur.gradient) < config.tol;
  int iter = 0;
  while (!converged && iter < config.max_iter) {
    ++iter;
    Eigen::MatrixXd info = -cur.hessian;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(info);
    const Eigen::VectorXd diag = ldlt.vectorD();
    const double dmax = diag.cwiseAbs().maxCoeff();
    if (ldlt.info() != Eigen::Success || !(dmax > 0.0) || diag.minCoeff() <= 1e-10 * dmax) {
      if (iter == 1) throw Error("collinear covariates");
      check_separation(cur, beta);
      throw Error("collinear covariates");
    }
    const Eigen::VectorXd step = ldlt.solve(cur.gradient);

    double factor = 1.0;
    Eigen::VectorXd next = beta + step;
    CoxDerivatives trial = derivatives(design, next, true);
    for (int h = 0; h < config.max_halvings && !(trial.loglik >= cur.loglik); ++h) {
      factor *= 0.5;
      next = beta + factor * step;
      trial = derivatives(design, next, true);
    }
    if (!(trial.loglik >= cur.loglik)) {
      // No ascent left at working precision.
      converged = grad_norm(cur.gradient) < config.tol;
      break;
    }
    if (trial.loglik > cur.loglik) {
      check_separation(trial, next);
    }
    const double rel = std::abs(trial.loglik - cur.loglik) / (std::abs(cur.loglik) + 1e-300);
    beta = next;
    cur = std::move(trial);
    converged = rel < config.rel_loglik_tol && grad_norm(cur.gradient) < config.tol;
  }

  // Back to the original covariate scale.
  Eigen::VectorXd beta_orig = beta.cwiseQuotient(scale);
  model.beta.assign(beta_orig.data(), beta_orig.data() + p);
  model.n_iter = iter;
  model.converged = converged;
  model.loglik = cur.loglik;  // centering does not change the partial likelihood

  // Breslow baseline on the original scale.
  const Eigen::VectorXd risk = (design.x * beta).array().exp();  // equals exp(beta_orig.(x - center))
  const double offset = beta_orig.dot(center);
  std::size_t k = 0;
  double s0 = 0.0;
  std::vector<double> times, increments;
  const auto& order = design.order;
  while (k < order.size()) {
    const double t = design.times[order[k]];
    double dead = 0.0;
    for (; k < order.size() && design.times[order[k]] == t; ++k) {
      const auto i = order[k];
      s0 += design.weights[i] * risk(static_cast<Eigen::Index>(i));
      if (design.events[i]) dead += design.weights[i];
    }
    if (dead > 0.0) {
      times.push_back(t);
      increments.push_back(dead / (s0 * std::exp(offset)));
    }
  }
  std::reverse(times.begin(), times.end());
  std::reverse(increments.begin(), increments.end());
  double cum = 0.0;
  for (double inc : increments) {
    cum += inc;
    model.baseline_cumhaz.push_back(cum);
  }
  model.baseline_times = std::move(times);
  return model;
}

SurvivalCurve predict_cox_survival(const CoxModel& model, std::span<const double> x) {
  const double hr = std::exp(model.linear_predictor(x));
  std::vector<double> probs;
  probs.reserve(model.baseline_cumhaz.size());
  for (double h : model.baseline_cumhaz) {
    probs.push_back(std::exp(-h * hr));
  }
  return {model.baseline_times, std::move(probs)};
}

nlohmann::json to_json(const CoxModel& model) {
  return {{"model", "cox"},
          {"features", model.feature_names},
          {"beta", model.beta},
          {"baseline_times", model.baseline_times},
          {"baseline_cumhaz", model.baseline_cumhaz},
          {"loglik", model.loglik},
          {"converged", model.converged},
          {"n_iter", model.n_iter}};
}

CoxModel cox_model_from_json(const nlohmann::json& doc) {
  CoxModel model;
  doc.at("features").get_to(model.feature_names);
  doc.at("beta").get_to(model.beta);
  doc.at("baseline_times").get_to(model.baseline_times);
  doc.at("baseline_cumhaz").get_to(model.baseline_cumhaz);
  doc.at("loglik").get_to(model.loglik);
  doc.at("converged").get_to(model.converged);
  doc.at("n_iter").get_to(model.n_iter);
  if (model.beta.size() != model.feature_names.size() ||
      model.baseline_times.size() != model.baseline_cumhaz.size()) {
    throw Error("schema mismatch: inconsistent cox model document");
  }
  return model;
}

}  // namespace survivalkit
