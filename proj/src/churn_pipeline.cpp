#include "survivalkit/churn_pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <ostream>
#include <tuple>

#include "survivalkit/csv.hpp"
#include "survivalkit/parallel.hpp"

namespace survivalkit {

namespace {

constexpr std::int64_t kDay = 86400;
constexpr std::int64_t kUnpairedSession = 30 * 60;

int digits(std::string_view s, std::size_t pos, std::size_t len, std::string_view whole) {
  if (pos + len > s.size()) throw Error("bad timestamp '" + std::string(whole) + "'");
  int v = 0;
  for (std::size_t k = pos; k < pos + len; ++k) {
    if (s[k] < '0' || s[k] > '9') throw Error("bad timestamp '" + std::string(whole) + "'");
    v = v * 10 + (s[k] - '0');
  }
  return v;
}

std::int64_t days_from_civil(int y, int m, int d, std::string_view whole) {
  const std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{static_cast<unsigned>(m)},
                                        std::chrono::day{static_cast<unsigned>(d)}};
  if (!ymd.ok()) throw Error("bad timestamp '" + std::string(whole) + "'");
  return std::chrono::sys_days{ymd}.time_since_epoch().count();
}

}  // namespace

std::string_view to_string(EventKind kind) {
  switch (kind) {
    case EventKind::session_start: return "session_start";
    case EventKind::session_end: return "session_end";
    case EventKind::action: return "action";
    case EventKind::purchase: return "purchase";
    case EventKind::level_up: return "level_up";
  }
  return "action";
}

EventKind parse_event_kind(std::string_view s) {
  for (auto k : {EventKind::session_start, EventKind::session_end, EventKind::action, EventKind::purchase,
                 EventKind::level_up}) {
    if (s == to_string(k)) return k;
  }
  throw Error("unknown event kind '" + std::string(s) + "'");
}

std::int64_t parse_day(std::string_view s) {
  if (s.size() != 10 || s[4] != '-' || s[7] != '-') throw Error("bad date '" + std::string(s) + "'");
  return days_from_civil(digits(s, 0, 4, s), digits(s, 5, 2, s), digits(s, 8, 2, s), s);
}

std::int64_t parse_timestamp(std::string_view s) {
  std::string_view body = s;
  if (!body.empty() && body.back() == 'Z') body.remove_suffix(1);
  const std::int64_t day = parse_day(body.substr(0, std::min<std::size_t>(10, body.size())));
  if (body.size() == 10) return day * kDay;
  if (body[10] != 'T' && body[10] != ' ') throw Error("bad timestamp '" + std::string(s) + "'");
  const int hh = digits(body, 11, 2, s);
  if (body.size() < 16 || body[13] != ':') throw Error("bad timestamp '" + std::string(s) + "'");
  const int mm = digits(body, 14, 2, s);
  int ss = 0;
  std::size_t pos = 16;
  if (body.size() > 16) {
    if (body[16] != ':') throw Error("bad timestamp '" + std::string(s) + "'");
    ss = digits(body, 17, 2, s);
    pos = 19;
    if (body.size() > 19) {
      // Fractional seconds are accepted and truncated.
      if (body[19] != '.') throw Error("bad timestamp '" + std::string(s) + "'");
      digits(body, 20, body.size() - 20, s);
      pos = body.size();
    }
  }
  if (pos != body.size() || hh > 23 || mm > 59 || ss > 60) throw Error("bad timestamp '" + std::string(s) + "'");
  return day * kDay + hh * 3600 + mm * 60 + ss;
}

std::int64_t day_of(std::int64_t seconds) {
  return seconds >= 0 ? seconds / kDay : -((-seconds + kDay - 1) / kDay);
}

std::string format_timestamp(std::int64_t seconds) {
  const std::int64_t day = day_of(seconds);
  const std::int64_t rem = seconds - day * kDay;
  const std::chrono::year_month_day ymd{std::chrono::sys_days{std::chrono::days{day}}};
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02d:%02d:%02dZ", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()), static_cast<int>(rem / 3600),
                static_cast<int>(rem / 60 % 60), static_cast<int>(rem % 60));
  return buf;
}

std::vector<PlayerEvent> read_event_log(std::istream& in) {
  std::string line;
  if (!csv::read_line(in, line) || csv::split(line) != std::vector<std::string>{"player_id", "timestamp", "kind",
                                                                                  "amount", "level"}) {
    throw Error("schema mismatch: expected player_id,timestamp,kind,amount,level");
  }
  std::vector<PlayerEvent> events;
  std::size_t line_no = 1;
  while (csv::read_line(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto f = csv::split(line);
    if (f.size() != 5) throw Error("schema mismatch: line " + std::to_string(line_no) + " needs 5 fields");
    PlayerEvent e;
    e.player_id = f[0];
    if (e.player_id.empty()) throw Error("empty player_id on line " + std::to_string(line_no));
    e.timestamp = parse_timestamp(f[1]);
    e.kind = parse_event_kind(f[2]);
    if (!f[3].empty()) e.amount = csv::parse_double(f[3]);
    if (!f[4].empty()) e.level = static_cast<int>(csv::parse_int(f[4]));
    if (e.kind == EventKind::purchase && (!e.amount || *e.amount < 0.0)) {
      throw Error("purchase without a non-negative amount on line " + std::to_string(line_no));
    }
    if (e.kind == EventKind::level_up && !e.level) {
      throw Error("level_up without a level on line " + std::to_string(line_no));
    }
    events.push_back(std::move(e));
  }
  return events;
}

std::vector<PlayerEvent> read_event_log(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path);
  return read_event_log(in);
}

void write_event_log(std::ostream& out, std::span<const PlayerEvent> events) {
  out << "player_id,timestamp,kind,amount,level\n";
  for (const auto& e : events) {
    out << e.player_id << ',' << format_timestamp(e.timestamp) << ',' << to_string(e.kind) << ',';
    if (e.amount) out << format_double(*e.amount);
    out << ',';
    if (e.level) out << *e.level;
    out << '\n';
  }
}

ChurnLabel label_churn(std::span<const PlayerEvent> events, std::int64_t observation_end_day,
                       std::int64_t inactivity_days) {
  if (events.empty()) throw Error("player without events");
  std::int64_t first = day_of(events.front().timestamp), last = first;
  for (const auto& e : events) {
    const auto d = day_of(e.timestamp);
    first = std::min(first, d);
    last = std::max(last, d);
  }
  if (last > observation_end_day) throw Error("future events");
  ChurnLabel label;
  label.event = observation_end_day - last >= inactivity_days;
  label.time = static_cast<double>((label.event ? last : observation_end_day) - first + 1);
  return label;
}

std::string_view to_string(Segment s) {
  switch (s) {
    case Segment::whale: return "whale";
    case Segment::payer: return "payer";
    case Segment::non_payer: return "non_payer";
  }
  return "non_payer";
}

Segment parse_segment(std::string_view s) {
  for (auto seg : {Segment::whale, Segment::payer, Segment::non_payer}) {
    if (s == to_string(seg)) return seg;
  }
  throw Error("unknown segment '" + std::string(s) + "'");
}

PlayerFeatureRow extract_features(std::span<const PlayerEvent> events, const ChurnLabel& label,
                                  const FeatureConfig& config) {
  if (events.empty()) throw Error("player without events");
  std::vector<PlayerEvent> sorted(events.begin(), events.end());
  std::sort(sorted.begin(), sorted.end(), [](const PlayerEvent& a, const PlayerEvent& b) {
    return std::tuple(a.timestamp, a.kind, a.amount, a.level) < std::tuple(b.timestamp, b.kind, b.amount, b.level);
  });

  PlayerFeatureRow row;
  row.player_id = sorted.front().player_id;
  row.time = label.time;
  row.event = label.event;
  const auto lifetime = static_cast<std::size_t>(label.time);
  if (lifetime < 1) throw Error("lifetime must be at least one day");
  row.lifetime_days = label.time;

  const std::int64_t registration = day_of(sorted.front().timestamp);
  std::vector<double> minutes(lifetime, 0.0), actions(lifetime, 0.0);
  std::vector<char> active(lifetime, 0);
  auto day_index = [&](std::int64_t ts) {
    const auto d = day_of(ts) - registration;
    return std::min<std::size_t>(static_cast<std::size_t>(d), lifetime - 1);
  };

  std::optional<std::int64_t> open;
  auto close_session = [&](std::int64_t end) {
    minutes[day_index(*open)] += static_cast<double>(end - *open) / 60.0;
    open.reset();
  };
  std::optional<std::size_t> first_purchase, last_purchase;
  for (const auto& e : sorted) {
    const auto d = day_index(e.timestamp);
    active[d] = 1;
    switch (e.kind) {
      case EventKind::session_start:
        if (open) close_session(*open + kUnpairedSession);
        open = e.timestamp;
        row.n_sessions += 1;
        break;
      case EventKind::session_end:
        if (open) close_session(e.timestamp);
        break;
      case EventKind::action:
        actions[d] += 1;
        row.n_actions += 1;
        break;
      case EventKind::purchase:
        row.n_purchases += 1;
        row.purchase_amount += e.amount.value_or(0.0);
        if (!first_purchase) first_purchase = d;
        last_purchase = d;
        break;
      case EventKind::level_up:
        row.level = std::max(row.level, e.level.value_or(1));
        break;
    }
  }
  if (open) close_session(*open + kUnpairedSession);

  const double life = static_cast<double>(lifetime);
  auto window_mean = [&](const std::vector<double>& v, std::size_t begin, std::size_t end) {
    return std::accumulate(v.begin() + begin, v.begin() + end, 0.0) / static_cast<double>(end - begin);
  };
  auto trailing = [&](int days) {
    return lifetime - std::min<std::size_t>(lifetime, static_cast<std::size_t>(std::max(days, 1)));
  };

  const double total_minutes = std::accumulate(minutes.begin(), minutes.end(), 0.0);
  row.playtime_daily_avg = total_minutes / life;
  const auto first_end = std::min<std::size_t>(lifetime, static_cast<std::size_t>(std::max(config.first_weeks, 1)) * 7);
  row.playtime_first_weeks_avg = window_mean(minutes, 0, first_end);
  row.playtime_moving_avg = window_mean(minutes, trailing(config.moving_window_days), lifetime);
  row.days_played = static_cast<double>(std::count(active.begin(), active.end(), 1));
  row.loyalty_index = row.days_played / life;
  row.action_activity_distance =
      std::abs(row.n_actions / life - window_mean(actions, trailing(config.last_days), lifetime));
  if (first_purchase) {
    row.days_to_first_purchase = static_cast<double>(*first_purchase);
    row.days_since_last_purchase = static_cast<double>(lifetime - 1 - *last_purchase);
  }
  return row;
}

void segment_players(std::vector<PlayerFeatureRow>& rows, double whale_quantile) {
  if (!(whale_quantile >= 0.0 && whale_quantile <= 1.0)) throw Error("whale quantile must lie in [0, 1]");
  std::vector<double> spend;
  for (const auto& r : rows) {
    if (r.purchase_amount > 0.0) spend.push_back(r.purchase_amount);
  }
  std::sort(spend.begin(), spend.end());
  double threshold = 0.0;
  if (!spend.empty()) {
    const auto n = spend.size();
    const auto idx = static_cast<std::size_t>(std::floor(whale_quantile * static_cast<double>(n) + 1e-9));
    threshold = spend[std::min(idx, n - 1)];
  }
  for (auto& r : rows) {
    if (r.purchase_amount <= 0.0) r.segment = Segment::non_payer;
    else r.segment = r.purchase_amount >= threshold ? Segment::whale : Segment::payer;
  }
}

const std::vector<std::string>& feature_columns() {
  static const std::vector<std::string> names{
      "playtime_daily_avg", "playtime_first_weeks_avg", "playtime_moving_avg", "lifetime_days",
      "days_played",        "loyalty_index",            "days_to_first_purchase", "days_since_last_purchase",
      "n_actions",          "n_sessions",               "n_purchases",         "purchase_amount",
      "action_activity_distance", "level"};
  return names;
}

namespace {

std::vector<double> feature_values(const PlayerFeatureRow& r) {
  const double never = r.lifetime_days + 1.0;
  return {r.playtime_daily_avg,
          r.playtime_first_weeks_avg,
          r.playtime_moving_avg,
          r.lifetime_days,
          r.days_played,
          r.loyalty_index,
          r.days_to_first_purchase.value_or(never),
          r.days_since_last_purchase.value_or(never),
          r.n_actions,
          r.n_sessions,
          r.n_purchases,
          r.purchase_amount,
          r.action_activity_distance,
          static_cast<double>(r.level)};
}

std::vector<std::size_t> resolve_features(const std::vector<std::string>& available,
                                          std::span<const std::string> requested) {
  std::vector<std::size_t> idx;
  if (requested.empty()) {
    idx.resize(available.size());
    std::iota(idx.begin(), idx.end(), 0);
    return idx;
  }
  for (const auto& name : requested) {
    const auto it = std::find(available.begin(), available.end(), name);
    if (it == available.end()) throw Error("schema mismatch: unknown feature '" + name + "'");
    idx.push_back(static_cast<std::size_t>(it - available.begin()));
  }
  return idx;
}

}  // namespace

std::vector<PlayerFeatureRow> featurize(std::vector<PlayerEvent> events, const ChurnConfig& config) {
  if (events.empty()) throw Error("empty event log");
  std::int64_t end_day = day_of(events.front().timestamp);
  for (const auto& e : events) end_day = std::max(end_day, day_of(e.timestamp));
  if (config.observation_end_day) {
    if (end_day > *config.observation_end_day) throw Error("future events");
    end_day = *config.observation_end_day;
  }

  std::map<std::string, std::vector<PlayerEvent>> by_player;
  for (auto& e : events) by_player[e.player_id].push_back(std::move(e));
  std::vector<const std::vector<PlayerEvent>*> players;
  for (const auto& [id, evs] : by_player) players.push_back(&evs);

  std::vector<PlayerFeatureRow> rows(players.size());
  parallel_for(
      players.size(),
      [&](std::size_t i) {
        const auto label = label_churn(*players[i], end_day, config.inactivity_days);
        rows[i] = extract_features(*players[i], label, config.features);
      },
      config.threads);
  segment_players(rows, config.whale_quantile);
  return rows;
}

void write_feature_csv(std::ostream& out, std::span<const PlayerFeatureRow> rows) {
  out << "player_id,segment,time,event";
  for (const auto& name : feature_columns()) out << ',' << name;
  out << '\n';
  for (const auto& r : rows) {
    out << r.player_id << ',' << to_string(r.segment) << ',' << format_double(r.time) << ',' << (r.event ? 1 : 0);
    for (double v : feature_values(r)) out << ',' << format_double(v);
    out << '\n';
  }
}

SurvivalDataset build_dataset(std::span<const PlayerFeatureRow> rows, std::span<const std::string> features,
                              std::optional<Segment> segment) {
  const auto idx = resolve_features(feature_columns(), features);
  std::vector<std::string> names;
  for (auto j : idx) names.push_back(feature_columns()[j]);
  std::vector<Observation> obs;
  for (const auto& r : rows) {
    if (segment && r.segment != *segment) continue;
    const auto all = feature_values(r);
    Observation o{r.time, r.event, {}, 1.0};
    for (auto j : idx) o.covariates.push_back(all[j]);
    obs.push_back(std::move(o));
  }
  if (obs.empty()) throw Error("no rows left after the segment filter");
  return {std::move(obs), std::move(names)};
}

SurvivalDataset select_dataset(const DatasetCsv& csv, std::span<const std::string> features,
                               std::optional<Segment> segment) {
  const auto& data = csv.data;
  if (segment && csv.segments.size() != data.size()) throw Error("schema mismatch: no segment column");
  const auto idx = resolve_features(data.feature_names(), features);
  std::vector<std::string> names;
  for (auto j : idx) names.push_back(data.feature_names()[j]);
  std::vector<Observation> obs;
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (segment && parse_segment(csv.segments[i]) != *segment) continue;
    Observation o{data.time(i), data.event(i), {}, data[i].weight};
    for (auto j : idx) o.covariates.push_back(data.covariate(i, j));
    obs.push_back(std::move(o));
  }
  if (obs.empty()) throw Error("no rows left after the segment filter");
  return {std::move(obs), std::move(names)};
}

}  // namespace survivalkit
