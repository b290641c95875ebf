#include "survivalkit/synthetic_data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <random>

#include "survivalkit/parallel.hpp"

namespace survivalkit {

namespace {

// Uniform censoring on [0, c] against Exp(rate) censors (1 - e^-k) / k of the
// sample with k = rate * c; k = 3.2 gives 30%.
constexpr double kThirtyPercent = 3.2;

double open_unit(std::mt19937_64& rng) {
  // (0, 1]: keeps -log finite.
  const double u = 1.0 - std::generate_canonical<double, 64>(rng);
  return u > 0.0 ? u : std::numeric_limits<double>::min();
}

template <class E>
E enum_from(const nlohmann::json& doc, const char* key, std::initializer_list<std::pair<const char*, E>> table,
            E fallback) {
  if (!doc.contains(key)) return fallback;
  const auto s = doc.at(key).get<std::string>();
  for (const auto& [name, value] : table) {
    if (s == name) return value;
  }
  throw Error(std::string("unknown ") + key + " '" + s + "'");
}

const std::initializer_list<std::pair<const char*, HazardKind>> kHazardNames{
    {"exponential", HazardKind::exponential},
    {"weibull", HazardKind::weibull},
    {"cox_linear", HazardKind::cox_linear},
    {"nonlinear", HazardKind::nonlinear}};
const std::initializer_list<std::pair<const char*, CensoringKind>> kCensoringNames{
    {"none", CensoringKind::none}, {"uniform", CensoringKind::uniform}, {"administrative", CensoringKind::administrative}};
const std::initializer_list<std::pair<const char*, CovariateDist>> kCovariateNames{
    {"uniform", CovariateDist::uniform}, {"normal", CovariateDist::normal}};

template <class E>
const char* name_of(std::initializer_list<std::pair<const char*, E>> table, E value) {
  for (const auto& [name, v] : table) {
    if (v == value) return name;
  }
  return "";
}

}  // namespace

void HazardSpec::validate() const {
  if (n < 1) throw Error("n must be >= 1");
  if (!(rate > 0.0)) throw Error("rate must be positive");
  if (kind == HazardKind::weibull && !(shape > 0.0 && scale > 0.0)) throw Error("weibull shape and scale must be positive");
  if (kind == HazardKind::cox_linear && beta.empty()) throw Error("cox_linear needs beta");
  if (kind == HazardKind::nonlinear && beta.size() != 3) throw Error("nonlinear needs 3 coefficients");
  if (censoring == CensoringKind::uniform && c_max && !(*c_max > 0.0)) throw Error("c_max must be positive");
  if (censoring == CensoringKind::administrative && !(tau > 0.0)) throw Error("tau must be positive");
}

std::size_t HazardSpec::n_covariates() const {
  switch (kind) {
    case HazardKind::cox_linear: return beta.size() + n_noise;
    case HazardKind::nonlinear: return 3 + n_noise;
    default: return n_noise;
  }
}

double HazardSpec::risk(std::span<const double> x) const {
  double eta = 0.0;
  if (kind == HazardKind::cox_linear) {
    for (std::size_t j = 0; j < beta.size(); ++j) eta += beta[j] * x[j];
  } else if (kind == HazardKind::nonlinear) {
    eta = beta[0] * x[0] + beta[1] * x[0] * x[1] + beta[2] * (x[2] > 0.5 ? 1.0 : 0.0);
  }
  return std::exp(eta);
}

HazardSpec hazard_spec_from_json(const nlohmann::json& doc) {
  HazardSpec s;
  s.kind = enum_from(doc, "hazard", kHazardNames, s.kind);
  s.rate = doc.value("rate", s.rate);
  s.shape = doc.value("shape", s.shape);
  s.scale = doc.value("scale", s.scale);
  s.beta = doc.value("beta", s.beta);
  s.n_noise = doc.value("n_noise", s.n_noise);
  s.covariates = enum_from(doc, "covariates", kCovariateNames, s.covariates);
  s.censoring = enum_from(doc, "censoring", kCensoringNames, s.censoring);
  if (doc.contains("c_max") && !doc["c_max"].is_null()) s.c_max = doc["c_max"].get<double>();
  s.tau = doc.value("tau", s.tau);
  s.n = doc.value("n", s.n);
  s.seed = doc.value("seed", s.seed);
  s.validate();
  return s;
}

nlohmann::json to_json(const HazardSpec& s) {
  nlohmann::json doc = {{"type", "survival"},
                        {"hazard", name_of(kHazardNames, s.kind)},
                        {"rate", s.rate},
                        {"shape", s.shape},
                        {"scale", s.scale},
                        {"beta", s.beta},
                        {"n_noise", s.n_noise},
                        {"covariates", name_of(kCovariateNames, s.covariates)},
                        {"censoring", name_of(kCensoringNames, s.censoring)},
                        {"tau", s.tau},
                        {"n", s.n},
                        {"seed", s.seed}};
  doc["c_max"] = s.c_max ? nlohmann::json(*s.c_max) : nlohmann::json(nullptr);
  return doc;
}

SurvivalDataset sample_survival(const HazardSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> normal;
  const std::size_t p = spec.n_covariates();
  const std::size_t informative = p - spec.n_noise;
  std::vector<std::string> names;
  for (std::size_t j = 0; j < informative; ++j) names.push_back("x" + std::to_string(j + 1));
  for (std::size_t j = 0; j < spec.n_noise; ++j) names.push_back("noise" + std::to_string(j + 1));

  const double base_scale = spec.kind == HazardKind::weibull ? spec.scale : 1.0 / spec.rate;
  const double c_max = spec.c_max.value_or(kThirtyPercent * base_scale);

  std::vector<Observation> rows;
  rows.reserve(spec.n);
  for (std::size_t i = 0; i < spec.n; ++i) {
    Observation o;
    o.covariates.resize(p);
    for (auto& x : o.covariates) x = spec.covariates == CovariateDist::uniform ? unif(rng) : normal(rng);
    const double e = -std::log(open_unit(rng));
    double t = 0.0;
    if (spec.kind == HazardKind::weibull) {
      t = spec.scale * std::pow(e, 1.0 / spec.shape);
    } else {
      t = e / (spec.rate * spec.risk(o.covariates));
    }
    double c = INFINITY;
    if (spec.censoring == CensoringKind::uniform) c = c_max * unif(rng);
    if (spec.censoring == CensoringKind::administrative) c = spec.tau;
    o.event = t <= c;
    o.time = std::min(t, c);
    rows.push_back(std::move(o));
  }
  return {std::move(rows), std::move(names)};
}

void CohortSpec::validate() const {
  if (registration_days < 1 || window_days < registration_days) {
    throw Error("registration days must be >= 1 and fit inside the window");
  }
  for (const auto* s : {&non_payer, &payer, &whale}) {
    const bool probs_ok = s->first_day_churn >= 0.0 && s->first_day_churn <= 1.0 && s->daily_hazard > 0.0 &&
                          s->daily_hazard <= 1.0 && s->active_prob >= 0.0 && s->active_prob <= 1.0 &&
                          s->purchase_prob >= 0.0 && s->purchase_prob <= 1.0 && s->level_prob >= 0.0 &&
                          s->level_prob <= 1.0;
    const bool rates_ok = s->sessions_per_day >= 1.0 && s->session_minutes > 0.0 && s->actions_per_session >= 0.0 &&
                          s->purchase_mean >= 0.0;
    if (!probs_ok || !rates_ok) throw Error("invalid segment model");
  }
}

namespace {

SegmentModel segment_from_json(const nlohmann::json& doc, SegmentModel s) {
  s.n = doc.value("n", s.n);
  s.first_day_churn = doc.value("first_day_churn", s.first_day_churn);
  s.daily_hazard = doc.value("daily_hazard", s.daily_hazard);
  s.active_prob = doc.value("active_prob", s.active_prob);
  s.sessions_per_day = doc.value("sessions_per_day", s.sessions_per_day);
  s.session_minutes = doc.value("session_minutes", s.session_minutes);
  s.actions_per_session = doc.value("actions_per_session", s.actions_per_session);
  s.purchase_prob = doc.value("purchase_prob", s.purchase_prob);
  s.purchase_mean = doc.value("purchase_mean", s.purchase_mean);
  s.level_prob = doc.value("level_prob", s.level_prob);
  return s;
}

nlohmann::json segment_json(const SegmentModel& s) {
  return {{"n", s.n},
          {"first_day_churn", s.first_day_churn},
          {"daily_hazard", s.daily_hazard},
          {"active_prob", s.active_prob},
          {"sessions_per_day", s.sessions_per_day},
          {"session_minutes", s.session_minutes},
          {"actions_per_session", s.actions_per_session},
          {"purchase_prob", s.purchase_prob},
          {"purchase_mean", s.purchase_mean},
          {"level_prob", s.level_prob}};
}

std::string player_id(const char* prefix, std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s%06zu", prefix, i);
  return buf;
}

void sample_player(const CohortSpec& spec, const SegmentModel& m, bool pays, std::string id, std::uint64_t seed,
                   std::vector<PlayerEvent>& out) {
  constexpr std::int64_t day_s = 86400;
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> reg_offset(0, spec.registration_days - 1);
  const std::int64_t reg = spec.start_day + reg_offset(rng);
  std::bernoulli_distribution first_day(m.first_day_churn);
  std::geometric_distribution<std::int64_t> extra(m.daily_hazard);
  const std::int64_t lifetime = first_day(rng) ? 1 : 2 + extra(rng);
  const std::int64_t last = std::min(reg + lifetime - 1, spec.observation_end_day());

  std::bernoulli_distribution active(m.active_prob), buys(m.purchase_prob), levels(m.level_prob);
  // Poisson needs a positive mean; a zero mean means no draws at all.
  std::poisson_distribution<int> more_sessions_dist(std::max(m.sessions_per_day - 1.0, 1e-12));
  std::poisson_distribution<int> actions_dist(std::max(m.actions_per_session, 1e-12));
  auto more_sessions = [&](auto& g) { return m.sessions_per_day > 1.0 ? more_sessions_dist(g) : 0; };
  auto n_actions = [&](auto& g) { return m.actions_per_session > 0.0 ? actions_dist(g) : 0; };
  std::exponential_distribution<double> minutes(1.0 / m.session_minutes);
  std::exponential_distribution<double> spend(m.purchase_mean > 0.0 ? 1.0 / m.purchase_mean : 1.0);
  std::uniform_int_distribution<int> first_start(8 * 3600, 14 * 3600), pause(600, 7200);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  auto purchase = [&](std::int64_t ts) {
    const double amount = std::max(0.99, std::round(spend(rng) * 100.0) / 100.0);
    out.push_back({id, ts, EventKind::purchase, amount, std::nullopt});
  };

  int level = 1;
  const std::size_t begin = out.size();
  for (std::int64_t day = reg; day <= last; ++day) {
    if (day != reg && day != last && !active(rng)) continue;
    const std::int64_t day_end = (day + 1) * day_s - 1;
    std::int64_t t = day * day_s + first_start(rng);
    const std::int64_t opened = t;  // purchases and level-ups happen inside the first session
    const int sessions = 1 + more_sessions(rng);
    for (int s = 0; s < sessions && t < day_end - 60; ++s) {
      const auto dur = std::min<std::int64_t>(std::max<std::int64_t>(60, std::llround(minutes(rng) * 60.0)),
                                              day_end - t);
      out.push_back({id, t, EventKind::session_start, std::nullopt, std::nullopt});
      const int k = n_actions(rng);
      for (int a = 0; a < k; ++a) {
        out.push_back({id, t + std::llround(unit(rng) * static_cast<double>(dur)), EventKind::action, std::nullopt,
                       std::nullopt});
      }
      out.push_back({id, t + dur, EventKind::session_end, std::nullopt, std::nullopt});
      t += dur + pause(rng);
    }
    if (pays && (day == reg || buys(rng))) purchase(opened + 30);
    if (levels(rng)) out.push_back({id, opened + 31, EventKind::level_up, std::nullopt, ++level});
  }
  std::stable_sort(out.begin() + static_cast<std::ptrdiff_t>(begin), out.end(),
                   [](const PlayerEvent& a, const PlayerEvent& b) { return a.timestamp < b.timestamp; });
}

}  // namespace

CohortSpec cohort_spec_from_json(const nlohmann::json& doc) {
  CohortSpec s;
  if (doc.contains("segments")) {
    const auto& seg = doc["segments"];
    if (seg.contains("non_payer")) s.non_payer = segment_from_json(seg["non_payer"], s.non_payer);
    if (seg.contains("payer")) s.payer = segment_from_json(seg["payer"], s.payer);
    if (seg.contains("whale")) s.whale = segment_from_json(seg["whale"], s.whale);
  }
  if (doc.contains("start_date")) s.start_day = parse_day(doc["start_date"].get<std::string>());
  s.registration_days = doc.value("registration_days", s.registration_days);
  s.window_days = doc.value("window_days", s.window_days);
  s.seed = doc.value("seed", s.seed);
  s.validate();
  return s;
}

nlohmann::json to_json(const CohortSpec& s) {
  return {{"type", "event_log"},
          {"start_date", format_timestamp(s.start_day * 86400).substr(0, 10)},
          {"registration_days", s.registration_days},
          {"window_days", s.window_days},
          {"seed", s.seed},
          {"segments",
           {{"non_payer", segment_json(s.non_payer)},
            {"payer", segment_json(s.payer)},
            {"whale", segment_json(s.whale)}}}};
}

void for_each_player(const CohortSpec& spec, const std::function<void(std::span<const PlayerEvent>)>& fn) {
  spec.validate();
  struct Part {
    const SegmentModel* model;
    const char* prefix;
    bool pays;
  };
  const Part parts[] = {{&spec.non_payer, "np", false}, {&spec.payer, "py", true}, {&spec.whale, "wh", true}};
  std::vector<PlayerEvent> events;
  for (std::size_t s = 0; s < 3; ++s) {
    const auto& part = parts[s];
    for (std::size_t i = 0; i < part.model->n; ++i) {
      events.clear();
      sample_player(spec, *part.model, part.pays, player_id(part.prefix, i),
                    derive_seed(derive_seed(spec.seed, s), i), events);
      fn(events);
    }
  }
}

std::vector<PlayerEvent> sample_event_log(const CohortSpec& spec) {
  std::vector<PlayerEvent> all;
  for_each_player(spec, [&](std::span<const PlayerEvent> events) { all.insert(all.end(), events.begin(), events.end()); });
  return all;
}

}  // namespace survivalkit
