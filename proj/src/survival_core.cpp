#include "survivalkit/survival_core.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <ostream>

#include "survivalkit/csv.hpp"

namespace survivalkit {

SurvivalDataset::SurvivalDataset(std::vector<Observation> observations,
                                 std::vector<std::string> feature_names)
    : observations_(std::move(observations)), feature_names_(std::move(feature_names)) {
  if (observations_.empty()) {
    throw Error("empty dataset");
  }
  for (const auto& obs : observations_) {
    if (obs.covariates.size() != feature_names_.size()) {
      throw Error("covariate dimension mismatch");
    }
    if (!(obs.time >= 0.0) || !std::isfinite(obs.time)) {
      throw Error("negative or non-finite time");
    }
    if (!(obs.weight >= 0.0)) {
      throw Error("negative weight");
    }
  }
}

SurvivalDataset SurvivalDataset::subset(std::span<const std::size_t> rows) const {
  std::vector<Observation> out;
  out.reserve(rows.size());
  for (auto r : rows) {
    out.push_back(observations_.at(r));
  }
  return {std::move(out), feature_names_};
}

std::optional<std::size_t> SurvivalDataset::feature_index(const std::string& name) const {
  auto it = std::find(feature_names_.begin(), feature_names_.end(), name);
  if (it == feature_names_.end()) {
    return std::nullopt;
  }
  return static_cast<std::size_t>(it - feature_names_.begin());
}

SurvivalCurve::SurvivalCurve(std::vector<double> times, std::vector<double> probs)
    : times_(std::move(times)), probs_(std::move(probs)) {
  if (times_.size() != probs_.size()) {
    throw Error("curve times/probs length mismatch");
  }
  for (std::size_t j = 0; j < times_.size(); ++j) {
    if (j > 0 && !(times_[j] > times_[j - 1])) {
      throw Error("curve times not strictly increasing");
    }
    if (!(probs_[j] >= 0.0 && probs_[j] <= 1.0)) {
      throw Error("curve probability outside [0,1]");
    }
    if (j > 0 && probs_[j] > probs_[j - 1]) {
      throw Error("curve not non-increasing");
    }
  }
}

double SurvivalCurve::operator()(double t) const {
  auto it = std::upper_bound(times_.begin(), times_.end(), t);
  if (it == times_.begin()) {
    return 1.0;
  }
  return probs_[static_cast<std::size_t>(it - times_.begin()) - 1];
}

double SurvivalCurve::left_limit(double t) const {
  auto it = std::lower_bound(times_.begin(), times_.end(), t);
  if (it == times_.begin()) {
    return 1.0;
  }
  return probs_[static_cast<std::size_t>(it - times_.begin()) - 1];
}

RiskTable build_risk_table(std::span<const double> times, std::span<const char> events,
                           std::span<const double> weights) {
  const std::size_t n = times.size();
  if (n == 0) {
    throw Error("empty dataset");
  }
  if (events.size() != n || weights.size() != n) {
    throw Error("length mismatch");
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return times[a] < times[b]; });

  // Walk backwards so the at-risk weight is a running suffix sum.
  RiskTable table;
  double at_risk = 0.0;
  std::size_t k = n;
  while (k > 0) {
    const double t = times[order[k - 1]];
    double d = 0.0;
    while (k > 0 && times[order[k - 1]] == t) {
      const auto i = order[k - 1];
      at_risk += weights[i];
      if (events[i]) d += weights[i];
      --k;
    }
    if (d > 0.0) {
      table.times.push_back(t);
      table.at_risk.push_back(at_risk);
      table.events.push_back(d);
    }
  }
  std::reverse(table.times.begin(), table.times.end());
  std::reverse(table.at_risk.begin(), table.at_risk.end());
  std::reverse(table.events.begin(), table.events.end());
  return table;
}

namespace {

struct Columns {
  std::vector<double> times;
  std::vector<char> events;
  std::vector<double> weights;
};

Columns columns_of(const SurvivalDataset& data) {
  Columns c;
  c.times.reserve(data.size());
  c.events.reserve(data.size());
  c.weights.reserve(data.size());
  for (const auto& obs : data.observations()) {
    c.times.push_back(obs.time);
    c.events.push_back(obs.event ? 1 : 0);
    c.weights.push_back(obs.weight);
  }
  return c;
}

}  // namespace

RiskTable build_risk_table(const SurvivalDataset& data) {
  auto c = columns_of(data);
  return build_risk_table(c.times, c.events, c.weights);
}

SurvivalCurve kaplan_meier(const RiskTable& table) {
  std::vector<double> probs;
  probs.reserve(table.size());
  double s = 1.0;
  for (std::size_t j = 0; j < table.size(); ++j) {
    s *= 1.0 - table.events[j] / table.at_risk[j];
    // Rounding can leave 1 - d/n a hair below zero when d == n.
    probs.push_back(std::clamp(s, 0.0, 1.0));
  }
  return {table.times, std::move(probs)};
}

SurvivalCurve kaplan_meier(const SurvivalDataset& data) { return kaplan_meier(build_risk_table(data)); }

std::optional<double> median_survival(const SurvivalCurve& curve) {
  for (std::size_t j = 0; j < curve.size(); ++j) {
    if (curve.probs()[j] <= 0.5) {
      return curve.times()[j];
    }
  }
  return std::nullopt;
}

std::vector<double> logrank_scores(std::span<const double> times, std::span<const char> events,
                                   std::span<const double> weights) {
  auto table = build_risk_table(times, events, weights);
  std::vector<double> cumhaz(table.size());
  double acc = 0.0;
  for (std::size_t j = 0; j < table.size(); ++j) {
    acc += table.events[j] / table.at_risk[j];
    cumhaz[j] = acc;
  }
  std::vector<double> scores(times.size());
  for (std::size_t i = 0; i < times.size(); ++i) {
    auto it = std::upper_bound(table.times.begin(), table.times.end(), times[i]);
    const double h = it == table.times.begin() ? 0.0 : cumhaz[static_cast<std::size_t>(it - table.times.begin()) - 1];
    scores[i] = h - (events[i] ? 1.0 : 0.0);
  }
  return scores;
}

std::vector<double> logrank_scores(const SurvivalDataset& data) {
  auto c = columns_of(data);
  return logrank_scores(c.times, c.events, c.weights);
}

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

DatasetCsv read_dataset_csv(std::istream& in) {
  std::string line;
  if (!csv::read_line(in, line)) {
    throw Error("empty dataset");
  }
  auto header = csv::split(line);
  std::optional<std::size_t> time_col, event_col, id_col, segment_col;
  std::vector<std::size_t> covariate_cols;
  std::vector<std::string> names;
  for (std::size_t c = 0; c < header.size(); ++c) {
    const auto& h = header[c];
    if (h == "time") time_col = c;
    else if (h == "event") event_col = c;
    else if (h == "player_id") id_col = c;
    else if (h == "segment") segment_col = c;
    else {
      covariate_cols.push_back(c);
      names.push_back(h);
    }
  }
  if (!time_col || !event_col) {
    throw Error("schema mismatch: dataset needs time and event columns");
  }

  std::vector<Observation> rows;
  std::vector<std::string> ids, segments;
  std::size_t line_no = 1;
  while (csv::read_line(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    auto fields = csv::split(line);
    if (fields.size() != header.size()) {
      throw Error("schema mismatch: line " + std::to_string(line_no) + " has " +
                  std::to_string(fields.size()) + " fields");
    }
    Observation obs;
    obs.time = csv::parse_double(fields[*time_col]);
    const auto ev = csv::parse_int(fields[*event_col]);
    if (ev != 0 && ev != 1) {
      throw Error("event must be 0 or 1 on line " + std::to_string(line_no));
    }
    obs.event = ev == 1;
    obs.covariates.reserve(covariate_cols.size());
    for (auto c : covariate_cols) {
      obs.covariates.push_back(csv::parse_double(fields[c]));
    }
    rows.push_back(std::move(obs));
    if (id_col) ids.push_back(fields[*id_col]);
    if (segment_col) segments.push_back(fields[*segment_col]);
  }
  return {SurvivalDataset(std::move(rows), std::move(names)), std::move(ids), std::move(segments)};
}

DatasetCsv read_dataset_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw Error("cannot open " + path);
  }
  return read_dataset_csv(in);
}

void write_dataset_csv(std::ostream& out, const SurvivalDataset& data) {
  out << "time,event";
  for (const auto& name : data.feature_names()) out << ',' << name;
  out << '\n';
  for (const auto& obs : data.observations()) {
    out << format_double(obs.time) << ',' << (obs.event ? 1 : 0);
    for (double x : obs.covariates) out << ',' << format_double(x);
    out << '\n';
  }
}

void write_curve_csv(std::ostream& out, const SurvivalCurve& curve) {
  out << "time,survival\n0,1\n";
  for (std::size_t j = 0; j < curve.size(); ++j) {
    out << format_double(curve.times()[j]) << ',' << format_double(curve.probs()[j]) << '\n';
  }
}

SurvivalCurve read_curve_csv(std::istream& in) {
  std::string line;
  if (!csv::read_line(in, line) || line != "time,survival") {
    throw Error("schema mismatch: expected time,survival header");
  }
  std::vector<double> times, probs;
  bool first = true;
  while (csv::read_line(in, line)) {
    if (line.empty()) continue;
    auto fields = csv::split(line);
    if (fields.size() != 2) throw Error("schema mismatch: curve rows need 2 fields");
    const double t = csv::parse_double(fields[0]);
    const double p = csv::parse_double(fields[1]);
    if (first) {
      first = false;
      if (t == 0.0 && p == 1.0) continue;  // the S(0)=1 anchor row
    }
    times.push_back(t);
    probs.push_back(p);
  }
  return {std::move(times), std::move(probs)};
}

}  // namespace survivalkit
