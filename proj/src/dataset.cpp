#include "fplcast/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>

#include "fplcast/error.hpp"
#include "fplcast/rng.hpp"
#include "fplcast/text_io.hpp"

namespace fplcast {

// ---------------------------------------------------------------------------
// Feature tiers

namespace {

struct Column {
  std::string_view name;
  double (*get)(const RawGameweekRow&);
};

// Ordered so that every tier is a prefix of the next.
constexpr Column kColumns[] = {
    {"total_points", [](const RawGameweekRow& r) { return double(r.total_points); }},
    {"minutes", [](const RawGameweekRow& r) { return double(r.minutes); }},
    {"influence", [](const RawGameweekRow& r) { return r.influence; }},
    {"creativity", [](const RawGameweekRow& r) { return r.creativity; }},
    {"threat", [](const RawGameweekRow& r) { return r.threat; }},
    {"ict_index", [](const RawGameweekRow& r) { return r.ict_index; }},
    {"goals_scored", [](const RawGameweekRow& r) { return double(r.goals_scored); }},
    {"assists", [](const RawGameweekRow& r) { return double(r.assists); }},
    {"clean_sheets", [](const RawGameweekRow& r) { return double(r.clean_sheets); }},
    {"goals_conceded", [](const RawGameweekRow& r) { return double(r.goals_conceded); }},
    {"saves", [](const RawGameweekRow& r) { return double(r.saves); }},
    {"bps", [](const RawGameweekRow& r) { return double(r.bps); }},
    {"bonus", [](const RawGameweekRow& r) { return double(r.bonus); }},
    {"yellow_cards", [](const RawGameweekRow& r) { return double(r.yellow_cards); }},
    {"red_cards", [](const RawGameweekRow& r) { return double(r.red_cards); }},
    {"own_goals", [](const RawGameweekRow& r) { return double(r.own_goals); }},
    {"penalties_saved", [](const RawGameweekRow& r) { return double(r.penalties_saved); }},
    {"penalties_missed", [](const RawGameweekRow& r) { return double(r.penalties_missed); }},
};

std::size_t tier_width(FeatureTier tier) {
  switch (tier) {
    case FeatureTier::kPtsOnly: return 1;
    case FeatureTier::kPtsMinutes: return 2;
    case FeatureTier::kPtsIct: return 6;
    case FeatureTier::kFull: return std::size(kColumns);
  }
  return 1;
}

}  // namespace

std::string_view to_string(FeatureTier tier) {
  switch (tier) {
    case FeatureTier::kPtsOnly: return "ptsonly";
    case FeatureTier::kPtsMinutes: return "pts_minutes";
    case FeatureTier::kPtsIct: return "pts_ict";
    case FeatureTier::kFull: return "full";
  }
  return "?";
}

std::optional<FeatureTier> parse_feature_tier(std::string_view text) {
  for (FeatureTier tier : kAllTiers) {
    if (to_string(tier) == text) return tier;
  }
  return std::nullopt;
}

std::vector<std::string> tier_columns(FeatureTier tier) {
  std::vector<std::string> names;
  for (std::size_t i = 0; i < tier_width(tier); ++i) {
    names.emplace_back(kColumns[i].name);
  }
  return names;
}

double feature_value(const RawGameweekRow& row, std::string_view column) {
  for (const auto& c : kColumns) {
    if (c.name == column) return c.get(row);
  }
  throw LookupError("unknown feature column '" + std::string(column) + "'");
}

// ---------------------------------------------------------------------------
// Series and windows

namespace {

bool chronological(const RawGameweekRow& a, const RawGameweekRow& b) {
  if (a.gameweek != b.gameweek) return a.gameweek < b.gameweek;
  if (a.kickoff_time != b.kickoff_time) return a.kickoff_time < b.kickoff_time;
  return a.kickoff_order < b.kickoff_order;
}

}  // namespace

PlayerSeries::PlayerSeries(CanonicalPlayerKey key,
                           std::vector<RawGameweekRow> rows)
    : key_(std::move(key)), rows_(std::move(rows)) {
  std::stable_sort(rows_.begin(), rows_.end(), chronological);
}

const std::string& PlayerSeries::season() const {
  static const std::string kEmpty;
  return rows_.empty() ? kEmpty : rows_.front().season;
}

double PlayerSeries::avg_score() const {
  if (rows_.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& row : rows_) sum += row.total_points;
  return sum / static_cast<double>(rows_.size());
}

double PlayerSeries::stdev_score() const {
  if (rows_.empty()) return 0.0;
  const double mean = avg_score();
  double ss = 0.0;
  for (const auto& row : rows_) {
    const double delta = row.total_points - mean;
    ss += delta * delta;
  }
  return std::sqrt(ss / static_cast<double>(rows_.size()));
}

std::vector<PlayerSeries> group_series(
    std::span<const RawGameweekRow> rows,
    std::span<const CanonicalPlayerKey> keys) {
  if (rows.size() != keys.size()) {
    throw ArgumentError("group_series: rows and keys differ in length");
  }
  std::map<std::pair<CanonicalPlayerKey, std::string>,
           std::vector<RawGameweekRow>>
      groups;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    groups[{keys[i], rows[i].season}].push_back(rows[i]);
  }
  std::vector<PlayerSeries> series;
  series.reserve(groups.size());
  for (auto& [group_key, group_rows] : groups) {
    series.emplace_back(group_key.first, std::move(group_rows));
  }
  return series;
}

std::vector<WindowedExample> build_windows(const PlayerSeries& series, int w,
                                           FeatureTier tier,
                                           const TeamStrengths& strengths,
                                           DifficultySign sign) {
  if (w < 1) throw ArgumentError("build_windows: window must be >= 1");
  const auto& rows = series.rows();
  const std::size_t width = tier_width(tier);
  const auto window = static_cast<std::size_t>(w);
  std::vector<WindowedExample> examples;
  if (rows.size() <= window) return examples;
  examples.reserve(rows.size() - window);
  for (std::size_t i = window; i < rows.size(); ++i) {
    WindowedExample example;
    example.X.resize(w, static_cast<Eigen::Index>(width));
    for (std::size_t r = 0; r < window; ++r) {
      const auto& source = rows[i - window + r];
      for (std::size_t c = 0; c < width; ++c) {
        example.X(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
            kColumns[c].get(source);
      }
    }
    example.d = compute_difficulty(rows[i], strengths, sign);
    example.y = rows[i].total_points;
    example.player = series.key();
    example.season = rows[i].season;
    example.target_gameweek = rows[i].gameweek;
    examples.push_back(std::move(example));
  }
  return examples;
}

std::vector<WindowedExample> build_windows(
    std::span<const PlayerSeries> series_list, int w, FeatureTier tier,
    const TeamStrengths& strengths, DifficultySign sign) {
  std::vector<WindowedExample> all;
  for (const auto& series : series_list) {
    auto examples = build_windows(series, w, tier, strengths, sign);
    std::move(examples.begin(), examples.end(), std::back_inserter(all));
  }
  return all;
}

SlidingAverageExample sliding_average(const WindowedExample& example) {
  SlidingAverageExample out;
  const auto rows = example.X.rows();
  out.x.resize(example.X.cols());
  for (Eigen::Index c = 0; c < example.X.cols(); ++c) {
    double sum = 0.0;
    for (Eigen::Index r = 0; r < rows; ++r) sum += example.X(r, c);
    out.x[c] = sum / static_cast<double>(rows);
  }
  out.d = example.d;
  out.y = example.y;
  out.player = example.player;
  out.season = example.season;
  out.target_gameweek = example.target_gameweek;
  return out;
}

std::vector<SlidingAverageExample> sliding_average(
    std::span<const WindowedExample> examples) {
  std::vector<SlidingAverageExample> out;
  out.reserve(examples.size());
  for (const auto& e : examples) out.push_back(sliding_average(e));
  return out;
}

// ---------------------------------------------------------------------------
// Splits

std::string_view to_string(SplitLabel label) {
  switch (label) {
    case SplitLabel::kTrain: return "train";
    case SplitLabel::kValidation: return "validation";
    case SplitLabel::kTest: return "test";
  }
  return "?";
}

std::optional<SplitLabel> parse_split_label(std::string_view text) {
  if (text == "train") return SplitLabel::kTrain;
  if (text == "validation" || text == "val") return SplitLabel::kValidation;
  if (text == "test") return SplitLabel::kTest;
  return std::nullopt;
}

std::string_view to_string(StratifyOn strat) {
  switch (strat) {
    case StratifyOn::kAvgScore: return "avg_score";
    case StratifyOn::kStdevScore: return "stdev_score";
    case StratifyOn::kNone: return "none";
  }
  return "?";
}

std::optional<StratifyOn> parse_stratify_on(std::string_view text) {
  if (text == "avg_score") return StratifyOn::kAvgScore;
  if (text == "stdev_score") return StratifyOn::kStdevScore;
  if (text == "none") return StratifyOn::kNone;
  return std::nullopt;
}

SplitLabel SplitAssignment::at(const CanonicalPlayerKey& key) const {
  auto it = players.find(key);
  if (it == players.end()) {
    throw LookupError("player '" + key.canonical_name + "' (" +
                      std::string(to_string(key.position)) +
                      ") has no split assignment");
  }
  return it->second;
}

std::array<std::size_t, 3> allocate_counts(std::size_t n,
                                           const SplitFractions& fractions) {
  const std::array<double, 3> f = {fractions.train, fractions.validation,
                                   fractions.test};
  std::array<std::size_t, 3> counts{};
  std::array<double, 3> remainder{};
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < 3; ++i) {
    const double exact = f[i] * static_cast<double>(n);
    counts[i] = static_cast<std::size_t>(std::floor(exact + 1e-9));
    remainder[i] = exact - static_cast<double>(counts[i]);
    assigned += counts[i];
  }
  std::array<std::size_t, 3> order = {0, 1, 2};
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return remainder[a] > remainder[b] + 1e-12;
  });
  for (std::size_t k = 0; assigned < n; ++k, ++assigned) {
    ++counts[order[k % 3]];
  }
  return counts;
}

namespace {

void validate_fractions(const SplitFractions& fr) {
  if (!(fr.train > 0 && fr.validation > 0 && fr.test > 0)) {
    throw ArgumentError("split fractions must all be positive");
  }
  if (std::abs(fr.train + fr.validation + fr.test - 1.0) > 1e-9) {
    throw ArgumentError("split fractions must sum to 1");
  }
}

struct PlayerStat {
  CanonicalPlayerKey key;
  double stat = 0.0;
};

// One entry per player, statistic pooled over all of the player's series.
std::vector<PlayerStat> player_stats(std::span<const PlayerSeries> series_list,
                                     StratifyOn strat_on) {
  std::map<CanonicalPlayerKey, std::vector<int>> points;
  for (const auto& series : series_list) {
    auto& p = points[series.key()];
    for (const auto& row : series.rows()) p.push_back(row.total_points);
  }
  std::vector<PlayerStat> stats;
  stats.reserve(points.size());
  for (const auto& [key, values] : points) {
    double stat = 0.0;
    if (!values.empty() && strat_on != StratifyOn::kNone) {
      double mean = 0.0;
      for (int v : values) mean += v;
      mean /= static_cast<double>(values.size());
      if (strat_on == StratifyOn::kAvgScore) {
        stat = mean;
      } else {
        double ss = 0.0;
        for (int v : values) ss += (v - mean) * (v - mean);
        stat = std::sqrt(ss / static_cast<double>(values.size()));
      }
    }
    stats.push_back({key, stat});
  }
  return stats;
}

}  // namespace

std::map<CanonicalPlayerKey, int> stratification_bins(
    std::span<const PlayerSeries> series_list, int n_bins, StratifyOn strat_on) {
  if (n_bins < 1) throw ArgumentError("n_bins must be >= 1");
  std::map<Position, std::vector<PlayerStat>> by_position;
  for (auto& stat : player_stats(series_list, strat_on)) {
    by_position[stat.key.position].push_back(std::move(stat));
  }
  std::map<CanonicalPlayerKey, int> bins;
  for (auto& [position, stats] : by_position) {
    std::size_t bins_here =
        strat_on == StratifyOn::kNone ? 1 : static_cast<std::size_t>(n_bins);
    if (bins_here > stats.size()) {
      warn("position " + std::string(to_string(position)) + ": n_bins " +
           std::to_string(bins_here) + " exceeds player count " +
           std::to_string(stats.size()) + "; clamping");
      bins_here = stats.size();
    }
    std::stable_sort(stats.begin(), stats.end(),
                     [](const PlayerStat& a, const PlayerStat& b) {
                       if (a.stat != b.stat) return a.stat < b.stat;
                       return a.key < b.key;
                     });
    for (std::size_t rank = 0; rank < stats.size(); ++rank) {
      bins[stats[rank].key] =
          static_cast<int>(rank * bins_here / stats.size());
    }
  }
  return bins;
}

SplitAssignment assign_splits(std::span<const PlayerSeries> series_list,
                              const SplitFractions& fractions, int n_bins,
                              StratifyOn strat_on, std::uint64_t seed) {
  validate_fractions(fractions);
  const auto bins = stratification_bins(series_list, n_bins, strat_on);
  std::map<std::pair<Position, int>, std::vector<CanonicalPlayerKey>> groups;
  for (const auto& [key, bin] : bins) groups[{key.position, bin}].push_back(key);

  SplitAssignment result;
  result.fractions = fractions;
  result.n_bins = n_bins;
  result.strat_on = strat_on;
  result.seed = seed;
  for (auto& [group, members] : groups) {
    // Keyed shuffle: each player's position in the order depends only on
    // (seed, name), so adding a player moves nobody else.
    std::vector<std::pair<std::uint64_t, CanonicalPlayerKey>> keyed;
    for (auto& key : members) {
      keyed.emplace_back(mix_seed(seed, key.canonical_name), key);
    }
    std::sort(keyed.begin(), keyed.end());
    const auto counts = allocate_counts(keyed.size(), fractions);
    std::size_t i = 0;
    for (std::size_t s = 0; s < 3; ++s) {
      for (std::size_t c = 0; c < counts[s]; ++c, ++i) {
        result.players[keyed[i].second] = static_cast<SplitLabel>(s);
      }
    }
  }
  return result;
}

void write_splits(std::ostream& out, const SplitAssignment& splits) {
  out << "# fplcast-splits v1\n";
  out << "# fractions " << text::format_double(splits.fractions.train) << ' '
      << text::format_double(splits.fractions.validation) << ' '
      << text::format_double(splits.fractions.test) << '\n';
  out << "# n_bins " << splits.n_bins << '\n';
  out << "# strat_on " << to_string(splits.strat_on) << '\n';
  out << "# seed " << splits.seed << '\n';
  out << "\"player\",\"position\",\"split\"\n";
  for (const auto& [key, label] : splits.players) {
    text::CsvWriter(out)
        .text(key.canonical_name)
        .text(to_string(key.position))
        .text(to_string(label))
        .end_row();
  }
}

SplitAssignment read_splits(std::istream& in) {
  SplitAssignment splits;
  std::string line;
  bool header_seen = false;
  std::size_t line_number = 0;
  while (text::read_line(in, line)) {
    ++line_number;
    if (line.rfind("# ", 0) == 0) {
      std::istringstream meta(line.substr(2));
      std::string key;
      meta >> key;
      if (key == "fractions") {
        meta >> splits.fractions.train >> splits.fractions.validation >>
            splits.fractions.test;
      } else if (key == "n_bins") {
        meta >> splits.n_bins;
      } else if (key == "strat_on") {
        std::string value;
        meta >> value;
        splits.strat_on = parse_stratify_on(value).value_or(StratifyOn::kNone);
      } else if (key == "seed") {
        meta >> splits.seed;
      }
      continue;
    }
    if (!header_seen) {
      header_seen = true;
      continue;
    }
    if (text::trim(line).empty()) continue;
    const auto fields = text::split_csv_line(line);
    if (fields.size() < 3) throw ParseError("expected 3 fields", line_number);
    auto position = parse_position(fields[1]);
    auto label = parse_split_label(fields[2]);
    if (!position || !label) {
      throw ParseError("bad position or split label", line_number);
    }
    splits.players[{fields[0], *position}] = *label;
  }
  return splits;
}

// ---------------------------------------------------------------------------
// Scaling

namespace {

ScalerParams finish_scaler(const std::vector<double>& sum,
                           const std::vector<double>& sum_sq_dev,
                           double count) {
  ScalerParams params;
  params.mean.resize(sum.size());
  params.stddev.resize(sum.size());
  for (std::size_t j = 0; j < sum.size(); ++j) {
    params.mean[j] = sum[j] / count;
    params.stddev[j] = std::sqrt(sum_sq_dev[j] / count);
  }
  return params;
}

void check_width(const ScalerParams& params, Eigen::Index width) {
  if (static_cast<std::size_t>(width) != params.mean.size()) {
    throw ShapeError("scaler fitted on " + std::to_string(params.mean.size()) +
                     " features, example has " + std::to_string(width));
  }
}

double z_score(const ScalerParams& p, std::size_t j, double x) {
  return p.stddev[j] > 0.0 ? (x - p.mean[j]) / p.stddev[j] : 0.0;
}

}  // namespace

ScalerParams fit_scaler(std::span<const WindowedExample> examples) {
  if (examples.empty()) throw ArgumentError("fit_scaler: no examples");
  const auto width = static_cast<std::size_t>(examples.front().X.cols());
  std::vector<double> sum(width, 0.0);
  double count = 0.0;
  for (const auto& e : examples) {
    if (static_cast<std::size_t>(e.X.cols()) != width) {
      throw ShapeError("fit_scaler: inconsistent feature width");
    }
    for (Eigen::Index r = 0; r < e.X.rows(); ++r) {
      for (std::size_t j = 0; j < width; ++j) sum[j] += e.X(r, j);
      count += 1.0;
    }
  }
  std::vector<double> ss(width, 0.0);
  for (const auto& e : examples) {
    for (Eigen::Index r = 0; r < e.X.rows(); ++r) {
      for (std::size_t j = 0; j < width; ++j) {
        const double delta = e.X(r, j) - sum[j] / count;
        ss[j] += delta * delta;
      }
    }
  }
  return finish_scaler(sum, ss, count);
}

ScalerParams fit_scaler(std::span<const SlidingAverageExample> examples) {
  if (examples.empty()) throw ArgumentError("fit_scaler: no examples");
  const auto width = static_cast<std::size_t>(examples.front().x.size());
  std::vector<double> sum(width, 0.0);
  for (const auto& e : examples) {
    if (static_cast<std::size_t>(e.x.size()) != width) {
      throw ShapeError("fit_scaler: inconsistent feature width");
    }
    for (std::size_t j = 0; j < width; ++j) sum[j] += e.x[j];
  }
  const auto count = static_cast<double>(examples.size());
  std::vector<double> ss(width, 0.0);
  for (const auto& e : examples) {
    for (std::size_t j = 0; j < width; ++j) {
      const double delta = e.x[j] - sum[j] / count;
      ss[j] += delta * delta;
    }
  }
  return finish_scaler(sum, ss, count);
}

WindowedExample apply_scaler(const ScalerParams& params,
                             const WindowedExample& example) {
  check_width(params, example.X.cols());
  WindowedExample out = example;
  for (Eigen::Index r = 0; r < out.X.rows(); ++r) {
    for (Eigen::Index c = 0; c < out.X.cols(); ++c) {
      out.X(r, c) = z_score(params, static_cast<std::size_t>(c), out.X(r, c));
    }
  }
  return out;
}

SlidingAverageExample apply_scaler(const ScalerParams& params,
                                   const SlidingAverageExample& example) {
  check_width(params, example.x.size());
  SlidingAverageExample out = example;
  for (Eigen::Index c = 0; c < out.x.size(); ++c) {
    out.x[c] = z_score(params, static_cast<std::size_t>(c), out.x[c]);
  }
  return out;
}

std::vector<WindowedExample> apply_scaler(
    const ScalerParams& params, std::span<const WindowedExample> examples) {
  std::vector<WindowedExample> out;
  out.reserve(examples.size());
  for (const auto& e : examples) out.push_back(apply_scaler(params, e));
  return out;
}

std::vector<SlidingAverageExample> apply_scaler(
    const ScalerParams& params, std::span<const SlidingAverageExample> examples) {
  std::vector<SlidingAverageExample> out;
  out.reserve(examples.size());
  for (const auto& e : examples) out.push_back(apply_scaler(params, e));
  return out;
}

Eigen::VectorXd invert_scaler(const ScalerParams& params,
                              const Eigen::VectorXd& z) {
  check_width(params, z.size());
  Eigen::VectorXd x(z.size());
  for (Eigen::Index j = 0; j < z.size(); ++j) {
    const auto k = static_cast<std::size_t>(j);
    x[j] = params.stddev[k] > 0.0 ? z[j] * params.stddev[k] + params.mean[k]
                                  : params.mean[k];
  }
  return x;
}

// ---------------------------------------------------------------------------
// Synthetic season
//
// Each player has a persistent talent (scoring and creative rates), a
// substitution propensity and an AR(1) form process; weekly events are drawn
// from those and scored with the fantasy scoring table. Team strength drives
// clean sheets and shifts scoring rates through the fixture difficulty.

namespace {

double round_to(double value, double step) {
  return std::round(value / step) * step;
}

struct PositionRates {
  double goal;
  double assist;
  int goal_points;
  int clean_sheet_points;
};

PositionRates rates_for(Position position) {
  switch (position) {
    case Position::kGK: return {0.002, 0.01, 6, 4};
    case Position::kDEF: return {0.05, 0.07, 6, 4};
    case Position::kMID: return {0.16, 0.15, 5, 1};
    case Position::kFWD: return {0.36, 0.12, 4, 0};
  }
  return {0.1, 0.1, 4, 0};
}

}  // namespace

SyntheticSeason generate_synthetic_season(std::uint64_t seed, int n_players,
                                          int n_weeks, const PositionMix& mix,
                                          const std::string& season) {
  if (n_players < 1) throw ArgumentError("n_players must be >= 1");
  if (n_weeks < 2) throw ArgumentError("n_weeks must be >= 2");
  const double mix_total = mix.gk + mix.def + mix.mid + mix.fwd;
  if (!(mix.gk >= 0 && mix.def >= 0 && mix.mid >= 0 && mix.fwd >= 0) ||
      mix_total <= 0.0) {
    throw ArgumentError("position mix must be non-negative and non-zero");
  }
  Rng rng(mix_seed(seed, "synthetic-season"));

  constexpr int kTeams = 20;
  SyntheticSeason out;
  auto& table = out.strengths[season];
  table.season = season;
  std::vector<std::string> teams;
  std::vector<int> strength;
  for (int t = 0; t < kTeams; ++t) {
    char name[16];
    std::snprintf(name, sizeof(name), "team %02d", t + 1);
    teams.emplace_back(name);
    // Spread of ratings similar to a real league table: few 5s and 1s.
    const int s = std::clamp(
        static_cast<int>(std::lround(3.0 + 1.1 * rng.normal())), 1, 5);
    strength.push_back(s);
    table.entries[teams.back()] = s;
  }

  // Weekly fixtures: a random perfect matching of the 20 teams.
  std::vector<std::vector<int>> opponent(n_weeks, std::vector<int>(kTeams));
  std::vector<std::vector<bool>> home(n_weeks, std::vector<bool>(kTeams));
  for (int wk = 0; wk < n_weeks; ++wk) {
    const auto order = rng.permutation(kTeams);
    for (int p = 0; p < kTeams; p += 2) {
      const int a = static_cast<int>(order[p]);
      const int b = static_cast<int>(order[p + 1]);
      opponent[wk][a] = b;
      opponent[wk][b] = a;
      const bool a_home = rng.uniform() < 0.5;
      home[wk][a] = a_home;
      home[wk][b] = !a_home;
    }
  }

  // Position counts by largest remainder over the four mix weights.
  const std::array<double, 4> weights = {mix.gk / mix_total,
                                         mix.def / mix_total,
                                         mix.mid / mix_total,
                                         mix.fwd / mix_total};
  std::array<int, 4> counts{};
  std::array<double, 4> remainder{};
  int assigned = 0;
  for (int p = 0; p < 4; ++p) {
    const double exact = weights[p] * n_players;
    counts[p] = static_cast<int>(std::floor(exact));
    remainder[p] = exact - counts[p];
    assigned += counts[p];
  }
  while (assigned < n_players) {
    const auto best = static_cast<int>(
        std::max_element(remainder.begin(), remainder.end()) -
        remainder.begin());
    ++counts[best];
    remainder[best] = -1.0;
    ++assigned;
  }

  int player_id = 0;
  for (int p = 0; p < 4; ++p) {
    const auto position = static_cast<Position>(p);
    const PositionRates rates = rates_for(position);
    for (int c = 0; c < counts[p]; ++c, ++player_id) {
      char name[32];
      std::snprintf(name, sizeof(name), "player %04d", player_id + 1);
      const int team = static_cast<int>(rng.below(kTeams));
      const double talent = std::clamp(rng.normal(), -2.5, 2.5);
      const double goal_rate =
          std::min(0.9, rates.goal * std::exp(0.9 * talent));
      const double assist_rate = std::min(
          0.6, rates.assist * std::exp(0.8 * talent + 0.3 * rng.normal()));
      // Squad role: regular starter, rotation option or fringe player.
      const double role = rng.uniform();
      const double sub_propensity =
          position == Position::kGK ? (role < 0.8 ? rng.uniform(0.0, 0.03)
                                                  : rng.uniform(0.5, 0.9))
          : role < 0.6  ? rng.uniform(0.02, 0.12)
          : role < 0.85 ? rng.uniform(0.3, 0.6)
                        : rng.uniform(0.7, 0.95);
      const double card_rate = 0.05 + 0.1 * rng.uniform();
      const double bench_propensity = 0.1 * rng.uniform();
      double form = 0.0;

      for (int wk = 0; wk < n_weeks; ++wk) {
        form = 0.9 * form + 0.35 * rng.normal();
        const int opp = opponent[wk][team];
        const int d = strength[opp] - strength[team];
        RawGameweekRow row;
        row.player_name = name;
        row.position = position;
        row.season = season;
        row.gameweek = wk + 1;
        row.team = teams[team];
        row.opponent = teams[opp];
        row.was_home = home[wk][team];
        row.kickoff_order = static_cast<std::int64_t>(wk) * 1000 + player_id;
        char kickoff[32];
        std::snprintf(kickoff, sizeof(kickoff), "2021-%02d-%02dT15:00:00Z",
                      1 + wk / 28, 1 + wk % 28);
        row.kickoff_time = kickoff;

        if (rng.uniform() < bench_propensity) {
          // Named in the squad but unused: every statistic stays zero.
          out.rows.push_back(std::move(row));
          continue;
        }
        // Players in form are picked to start more often.
        const bool substitute =
            rng.uniform() < std::min(0.98, sub_propensity * std::exp(-0.8 * form));
        row.minutes = substitute ? 1 + static_cast<int>(rng.below(45))
                                 : (rng.uniform() < 0.8
                                        ? 90
                                        : 60 + static_cast<int>(rng.below(30)));
        const double share = row.minutes / 90.0;
        const double attack = std::exp(-0.25 * d + 0.5 * form);
        row.goals_scored = rng.poisson(goal_rate * share * attack);
        row.assists = rng.poisson(assist_rate * share * attack);

        const bool full_game = row.minutes >= 60;
        // Goalkeepers and defenders with more talent concede less.
        const double defence =
            (position == Position::kGK || position == Position::kDEF)
                ? std::exp((position == Position::kGK ? -0.8 : -0.4) * talent)
                : 1.0;
        const double concede_rate = std::max(0.2, 1.3 + 0.35 * d) * defence;
        const int conceded = rng.poisson(concede_rate * share);
        row.goals_conceded = conceded;
        row.clean_sheets = (full_game && conceded == 0) ? 1 : 0;
        if (position == Position::kGK) {
          row.saves = rng.poisson((2.2 + 0.4 * std::max(d, -2)) * share);
          row.penalties_saved = rng.uniform() < 0.01 ? 1 : 0;
        }
        row.yellow_cards = rng.uniform() < card_rate ? 1 : 0;
        row.red_cards = rng.uniform() < 0.004 ? 1 : 0;
        row.own_goals = rng.uniform() < 0.004 ? 1 : 0;
        row.penalties_missed =
            (position == Position::kFWD || position == Position::kMID) &&
                    rng.uniform() < 0.005
                ? 1
                : 0;

        int points = full_game ? 2 : 1;
        points += row.goals_scored * rates.goal_points;
        points += row.assists * 3;
        points += row.clean_sheets * rates.clean_sheet_points;
        if (position == Position::kGK || position == Position::kDEF) {
          points -= row.goals_conceded / 2;
        }
        points += row.saves / 3;
        points += row.penalties_saved * 5;
        points -= row.yellow_cards + 3 * row.red_cards + 2 * row.own_goals +
                  2 * row.penalties_missed;
        row.bonus = points >= 11 ? 3 : points >= 8 ? 2 : points >= 6 ? 1 : 0;
        points += row.bonus;
        row.total_points = std::clamp(points, -5, 24);
        row.bps = std::max(0, 3 * points + static_cast<int>(rng.below(8)));

        row.influence = round_to(
            std::max(0.0, 8.0 * points + 4.0 * row.saves + 3.0 * rng.normal() +
                              6.0 * share),
            0.2);
        row.creativity = round_to(
            std::max(0.0, 60.0 * assist_rate * share + 12.0 * row.assists +
                              4.0 * std::abs(rng.normal())),
            0.1);
        row.threat = round_to(
            std::max(0.0, 70.0 * goal_rate * share + 15.0 * row.goals_scored +
                              4.0 * std::abs(rng.normal())),
            1.0);
        row.ict_index =
            round_to((row.influence + row.creativity + row.threat) / 10.0, 0.1);
        out.rows.push_back(std::move(row));
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Row files

namespace {

const std::vector<std::string>& gameweek_header() {
  static const std::vector<std::string> kHeader = {
      "name",          "position",       "GW",          "team",
      "opponent_team", "minutes",        "total_points", "goals_scored",
      "assists",       "clean_sheets",   "goals_conceded", "saves",
      "bps",           "bonus",          "yellow_cards", "red_cards",
      "own_goals",     "penalties_saved", "penalties_missed", "influence",
      "creativity",    "threat",         "ict_index",   "was_home",
      "kickoff_time"};
  return kHeader;
}

void write_row_fields(text::CsvWriter& w, const RawGameweekRow& r) {
  w.text(r.player_name)
      .text(to_string(r.position))
      .integer(r.gameweek)
      .text(r.team)
      .text(r.opponent)
      .integer(r.minutes)
      .integer(r.total_points)
      .integer(r.goals_scored)
      .integer(r.assists)
      .integer(r.clean_sheets)
      .integer(r.goals_conceded)
      .integer(r.saves)
      .integer(r.bps)
      .integer(r.bonus)
      .integer(r.yellow_cards)
      .integer(r.red_cards)
      .integer(r.own_goals)
      .integer(r.penalties_saved)
      .integer(r.penalties_missed)
      .number(r.influence)
      .number(r.creativity)
      .number(r.threat)
      .number(r.ict_index)
      .text(r.was_home ? "True" : "False")
      .text(r.kickoff_time);
}

}  // namespace

void write_gameweek_csv(std::ostream& out,
                        std::span<const RawGameweekRow> rows) {
  text::write_header(out, gameweek_header());
  for (const auto& row : rows) {
    text::CsvWriter w(out);
    write_row_fields(w, row);
    w.end_row();
  }
}

void write_clean_rows(std::ostream& out, std::span<const RawGameweekRow> rows,
                      std::span<const CanonicalPlayerKey> keys) {
  if (rows.size() != keys.size()) {
    throw ArgumentError("write_clean_rows: rows and keys differ in length");
  }
  auto header = gameweek_header();
  header.insert(header.end(), {"season", "canonical_name", "kickoff_order"});
  text::write_header(out, header);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    text::CsvWriter w(out);
    write_row_fields(w, rows[i]);
    w.text(rows[i].season)
        .text(keys[i].canonical_name)
        .integer(rows[i].kickoff_order)
        .end_row();
  }
}

CleanRows read_clean_rows(std::istream& in) {
  // Re-parse through the ingest parser, then recover the extra columns.
  std::stringstream body;
  body << in.rdbuf();
  const std::string contents = body.str();
  std::istringstream header_stream(contents);
  std::string header_line;
  text::read_line(header_stream, header_line);
  const auto header = text::split_csv_line(header_line);
  const auto find = [&](std::string_view name) -> std::size_t {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (text::trim(header[i]) == name) return i;
    }
    throw SchemaError("clean rows: missing column '" + std::string(name) + "'");
  };
  const std::size_t season_col = find("season");
  const std::size_t name_col = find("canonical_name");
  const std::size_t order_col = find("kickoff_order");

  std::istringstream rows_stream(contents);
  CleanRows out;
  out.rows = parse_gameweek_csv(rows_stream, "");
  std::istringstream extra(contents);
  std::string line;
  text::read_line(extra, line);
  std::size_t i = 0;
  std::size_t line_number = 1;
  while (text::read_line(extra, line)) {
    ++line_number;
    if (text::trim(line).empty()) continue;
    const auto fields = text::split_csv_line(line);
    if (fields.size() <= std::max({season_col, name_col, order_col})) {
      throw ParseError("clean rows: short record", line_number);
    }
    auto& row = out.rows.at(i);
    row.season = fields[season_col];
    auto order = text::parse_int(fields[order_col]);
    if (!order) throw ParseError("clean rows: bad kickoff_order", line_number);
    row.kickoff_order = *order;
    out.keys.push_back({fields[name_col], row.position});
    ++i;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Dataset files

std::string_view to_string(Representation representation) {
  return representation == Representation::kWindowed ? "windowed"
                                                     : "sliding_average";
}

namespace {

std::string join_numbers(const std::vector<double>& values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += ' ';
    out += text::format_double(values[i]);
  }
  return out;
}

std::vector<double> parse_numbers(std::istream& in) {
  std::vector<double> values;
  std::string token;
  while (in >> token) {
    auto v = text::parse_double(token);
    if (!v) throw SchemaError("dataset header: bad number '" + token + "'");
    values.push_back(*v);
  }
  return values;
}

}  // namespace

void write_dataset(std::ostream& out, const DatasetFile& dataset) {
  const auto& m = dataset.metadata;
  const auto features = tier_columns(m.tier);
  out << "# fplcast-dataset v1\n";
  out << "# position " << to_string(m.position) << '\n';
  out << "# representation " << to_string(m.representation) << '\n';
  out << "# window " << m.window << '\n';
  out << "# tier " << to_string(m.tier) << '\n';
  out << "# features " << text::join(features, ";") << '\n';
  out << "# seed " << m.seed << '\n';
  out << "# fractions " << text::format_double(m.fractions.train) << ' '
      << text::format_double(m.fractions.validation) << ' '
      << text::format_double(m.fractions.test) << '\n';
  out << "# scaler_fitted_on " << m.scaler.fitted_on << '\n';
  out << "# scaler_mean " << join_numbers(m.scaler.mean) << '\n';
  out << "# scaler_std " << join_numbers(m.scaler.stddev) << '\n';
  const std::size_t width =
      m.representation == Representation::kWindowed
          ? features.size() * static_cast<std::size_t>(m.window)
          : features.size();
  out << "\"split\",\"player\",\"season\",\"target_gameweek\",\"d\",\"y\"";
  for (std::size_t i = 0; i < width; ++i) out << ",\"x" << i << '"';
  out << '\n';
  for (const auto& r : dataset.records) {
    if (r.features.size() != width) {
      throw ShapeError("dataset record has " + std::to_string(r.features.size()) +
                       " features, expected " + std::to_string(width));
    }
    text::CsvWriter w(out);
    w.text(to_string(r.split))
        .text(r.player.canonical_name)
        .text(r.season)
        .integer(r.target_gameweek)
        .integer(r.d)
        .integer(r.y);
    for (double v : r.features) w.number(v);
    w.end_row();
  }
}

DatasetFile read_dataset(std::istream& in) {
  DatasetFile dataset;
  auto& m = dataset.metadata;
  std::string line;
  std::size_t line_number = 0;
  bool header_seen = false;
  while (text::read_line(in, line)) {
    ++line_number;
    if (line.rfind("# ", 0) == 0) {
      std::istringstream meta(line.substr(2));
      std::string key;
      meta >> key;
      std::string value;
      if (key == "position") {
        meta >> value;
        m.position = parse_position(value).value_or(Position::kMID);
      } else if (key == "representation") {
        meta >> value;
        m.representation = value == "windowed" ? Representation::kWindowed
                                               : Representation::kSlidingAverage;
      } else if (key == "window") {
        meta >> m.window;
      } else if (key == "tier") {
        meta >> value;
        auto tier = parse_feature_tier(value);
        if (!tier) throw SchemaError("dataset header: unknown tier " + value);
        m.tier = *tier;
      } else if (key == "seed") {
        meta >> m.seed;
      } else if (key == "fractions") {
        meta >> m.fractions.train >> m.fractions.validation >> m.fractions.test;
      } else if (key == "scaler_fitted_on") {
        meta >> m.scaler.fitted_on;
      } else if (key == "scaler_mean") {
        m.scaler.mean = parse_numbers(meta);
      } else if (key == "scaler_std") {
        m.scaler.stddev = parse_numbers(meta);
      }
      continue;
    }
    if (!header_seen) {
      header_seen = true;
      continue;
    }
    if (text::trim(line).empty()) continue;
    const auto fields = text::split_csv_line(line);
    if (fields.size() < 6) throw ParseError("dataset: short record", line_number);
    DatasetRecord r;
    auto split = parse_split_label(fields[0]);
    auto gw = text::parse_int(fields[3]);
    auto d = text::parse_int(fields[4]);
    auto y = text::parse_int(fields[5]);
    if (!split || !gw || !d || !y) {
      throw ParseError("dataset: malformed record", line_number);
    }
    r.split = *split;
    r.player = {fields[1], m.position};
    r.season = fields[2];
    r.target_gameweek = static_cast<int>(*gw);
    r.d = static_cast<int>(*d);
    r.y = static_cast<int>(*y);
    for (std::size_t i = 6; i < fields.size(); ++i) {
      auto v = text::parse_double(fields[i]);
      if (!v) throw ParseError("dataset: bad feature value", line_number);
      r.features.push_back(*v);
    }
    dataset.records.push_back(std::move(r));
  }
  return dataset;
}

}  // namespace fplcast
