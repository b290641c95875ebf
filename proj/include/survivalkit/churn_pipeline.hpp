#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "survivalkit/survival_core.hpp"

namespace survivalkit {

enum class EventKind { session_start, session_end, action, purchase, level_up };

std::string_view to_string(EventKind kind);
EventKind parse_event_kind(std::string_view s);

/// One telemetry record. Timestamps are UTC seconds since the Unix epoch.
struct PlayerEvent {
  std::string player_id;
  std::int64_t timestamp = 0;
  EventKind kind = EventKind::action;
  std::optional<double> amount;  // purchases
  std::optional<int> level;      // level_up
};

/// ISO-8601 `YYYY-MM-DD[THH:MM[:SS[.fff]]][Z]` (a space may replace the T).
std::int64_t parse_timestamp(std::string_view s);
std::string format_timestamp(std::int64_t seconds);
/// Calendar day (days since the epoch) of a timestamp.
std::int64_t day_of(std::int64_t seconds);
/// Day number of a `YYYY-MM-DD` date.
std::int64_t parse_day(std::string_view s);

/// `player_id,timestamp,kind,amount,level`, with empty inapplicable fields.
std::vector<PlayerEvent> read_event_log(std::istream& in);
std::vector<PlayerEvent> read_event_log(const std::string& path);
void write_event_log(std::ostream& out, std::span<const PlayerEvent> events);

struct ChurnLabel {
  double time = 0.0;  // days, registration day counts as 1
  bool event = false;
};

/// Churned when the last activity is at least `inactivity_days` before the end
/// of the window.
ChurnLabel label_churn(std::span<const PlayerEvent> events, std::int64_t observation_end_day,
                       std::int64_t inactivity_days = 10);

enum class Segment { whale, payer, non_payer };

std::string_view to_string(Segment s);
Segment parse_segment(std::string_view s);

struct FeatureConfig {
  int first_weeks = 2;
  int moving_window_days = 7;
  int last_days = 7;
};

struct PlayerFeatureRow {
  std::string player_id;
  double time = 0.0;
  bool event = false;
  double playtime_daily_avg = 0.0;        // session minutes per lifetime day
  double playtime_first_weeks_avg = 0.0;
  double playtime_moving_avg = 0.0;
  double lifetime_days = 0.0;
  double days_played = 0.0;
  double loyalty_index = 0.0;
  std::optional<double> days_to_first_purchase;
  std::optional<double> days_since_last_purchase;
  double n_actions = 0.0;
  double n_sessions = 0.0;
  double n_purchases = 0.0;
  double purchase_amount = 0.0;
  double action_activity_distance = 0.0;
  int level = 1;
  Segment segment = Segment::non_payer;
};

/// Features of one labeled player. Events may come in any order.
PlayerFeatureRow extract_features(std::span<const PlayerEvent> events, const ChurnLabel& label,
                                  const FeatureConfig& config = {});

/// Payers spending at least the `whale_quantile` quantile of payer spend are
/// whales; ties at the threshold included.
void segment_players(std::vector<PlayerFeatureRow>& rows, double whale_quantile = 0.90);

/// Numeric feature columns, in file order.
const std::vector<std::string>& feature_columns();

struct ChurnConfig {
  std::optional<std::int64_t> observation_end_day;  // default: last event day in the log
  std::int64_t inactivity_days = 10;
  double whale_quantile = 0.90;
  FeatureConfig features;
  std::size_t threads = 0;
};

/// Labels, featurizes and segments every player; rows sorted by player_id.
std::vector<PlayerFeatureRow> featurize(std::vector<PlayerEvent> events, const ChurnConfig& config = {});

/// `player_id,segment,time,event,<feature_columns>`; absent purchase fields
/// are written imputed as lifetime_days + 1.
void write_feature_csv(std::ostream& out, std::span<const PlayerFeatureRow> rows);

/// Dataset with the requested feature order (all columns when empty) and an
/// optional segment filter.
SurvivalDataset build_dataset(std::span<const PlayerFeatureRow> rows, std::span<const std::string> features = {},
                              std::optional<Segment> segment = std::nullopt);

/// Same selection applied to a feature CSV that has been read back.
SurvivalDataset select_dataset(const DatasetCsv& csv, std::span<const std::string> features = {},
                               std::optional<Segment> segment = std::nullopt);

}  // namespace survivalkit
