#pragma once

#include <cmath>
#include <random>
#include <vector>

#include "survivalkit/survival_core.hpp"

namespace survivalkit::testing {

inline SurvivalDataset make_dataset(const std::vector<std::pair<double, bool>>& rows) {
  std::vector<Observation> obs;
  for (auto [t, e] : rows) obs.push_back({t, e, {}, 1.0});
  return {std::move(obs), {}};
}

/// The five-row example used throughout: (1,e),(2,e),(2,e),(3,c),(4,e).
inline SurvivalDataset five_rows() {
  return make_dataset({{1, true}, {2, true}, {2, true}, {3, false}, {4, true}});
}

/// Random censored sample on an integer grid so ties occur.
inline SurvivalDataset random_censored(std::mt19937_64& rng, std::size_t n, std::size_t dim = 0) {
  std::uniform_int_distribution<int> time(0, 30);
  std::bernoulli_distribution event(0.7);
  std::normal_distribution<double> x;
  std::vector<Observation> obs;
  std::vector<std::string> names;
  for (std::size_t j = 0; j < dim; ++j) names.push_back("x" + std::to_string(j));
  for (std::size_t i = 0; i < n; ++i) {
    Observation o{static_cast<double>(time(rng)), event(rng), {}, 1.0};
    for (std::size_t j = 0; j < dim; ++j) o.covariates.push_back(x(rng));
    obs.push_back(std::move(o));
  }
  return {std::move(obs), names};
}

inline double sup_distance(const SurvivalCurve& a, const SurvivalCurve& b) {
  std::vector<double> pts = a.times();
  pts.insert(pts.end(), b.times().begin(), b.times().end());
  double d = 0.0;
  for (double t : pts) d = std::max(d, std::abs(a(t) - b(t)));
  return d;
}

}  // namespace survivalkit::testing
