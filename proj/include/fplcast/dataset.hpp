#pragma once

#include <array>
#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fplcast/ingest.hpp"

namespace fplcast {

using WindowMatrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Feature tiers are nested: each one extends the previous tier's columns.
enum class FeatureTier { kPtsOnly, kPtsMinutes, kPtsIct, kFull };

inline constexpr std::array<FeatureTier, 4> kAllTiers = {
    FeatureTier::kPtsOnly, FeatureTier::kPtsMinutes, FeatureTier::kPtsIct,
    FeatureTier::kFull};

std::string_view to_string(FeatureTier tier);
std::optional<FeatureTier> parse_feature_tier(std::string_view text);
std::vector<std::string> tier_columns(FeatureTier tier);

// Value of a numeric statistic by column name; throws LookupError.
double feature_value(const RawGameweekRow& row, std::string_view column);

// One player's retained rows for one season, chronologically ordered.
class PlayerSeries {
 public:
  PlayerSeries(CanonicalPlayerKey key, std::vector<RawGameweekRow> rows);

  const CanonicalPlayerKey& key() const { return key_; }
  const std::vector<RawGameweekRow>& rows() const { return rows_; }
  const std::string& season() const;

  double avg_score() const;
  double stdev_score() const;  // population

 private:
  CanonicalPlayerKey key_;
  std::vector<RawGameweekRow> rows_;
};

// Groups rows by (resolved key, season) and orders each series by
// (gameweek, kickoff_time, kickoff_order). Output is sorted by key, then
// season.
std::vector<PlayerSeries> group_series(std::span<const RawGameweekRow> rows,
                                       std::span<const CanonicalPlayerKey> keys);

struct WindowedExample {
  WindowMatrix X;  // w x f, oldest week first
  int d = 0;
  int y = 0;
  CanonicalPlayerKey player;
  std::string season;
  int target_gameweek = 0;

  Position position() const { return player.position; }
};

struct SlidingAverageExample {
  Eigen::VectorXd x;
  int d = 0;
  int y = 0;
  CanonicalPlayerKey player;
  std::string season;
  int target_gameweek = 0;

  Position position() const { return player.position; }
};

std::vector<WindowedExample> build_windows(
    const PlayerSeries& series, int w, FeatureTier tier,
    const TeamStrengths& strengths,
    DifficultySign sign = DifficultySign::kOpponentMinusOwn);

std::vector<WindowedExample> build_windows(
    std::span<const PlayerSeries> series_list, int w, FeatureTier tier,
    const TeamStrengths& strengths,
    DifficultySign sign = DifficultySign::kOpponentMinusOwn);

SlidingAverageExample sliding_average(const WindowedExample& example);
std::vector<SlidingAverageExample> sliding_average(
    std::span<const WindowedExample> examples);

// ---------------------------------------------------------------------------
// Splits

enum class SplitLabel { kTrain, kValidation, kTest };
std::string_view to_string(SplitLabel label);
std::optional<SplitLabel> parse_split_label(std::string_view text);

enum class StratifyOn { kAvgScore, kStdevScore, kNone };
std::string_view to_string(StratifyOn strat);
std::optional<StratifyOn> parse_stratify_on(std::string_view text);

struct SplitFractions {
  double train = 0.60;
  double validation = 0.25;
  double test = 0.15;
};

inline constexpr int kDefaultStratBins = 4;

struct SplitAssignment {
  std::map<CanonicalPlayerKey, SplitLabel> players;
  SplitFractions fractions;
  int n_bins = kDefaultStratBins;
  StratifyOn strat_on = StratifyOn::kAvgScore;
  std::uint64_t seed = 0;

  SplitLabel at(const CanonicalPlayerKey& key) const;  // throws LookupError
};

// Largest-remainder allocation of n items over the three fractions; ties in
// the remainder go to the earlier split (train, validation, test).
std::array<std::size_t, 3> allocate_counts(std::size_t n,
                                           const SplitFractions& fractions);

// Player-disjoint stratified split. Players are grouped by position, then
// binned into quantiles of the stratification statistic (pooled over all of
// a player's series); each bin is shuffled by a hash of (seed, name) and cut
// by allocate_counts.
SplitAssignment assign_splits(std::span<const PlayerSeries> series_list,
                              const SplitFractions& fractions, int n_bins,
                              StratifyOn strat_on, std::uint64_t seed);

// Quantile bin of every player, per position. Shared with k-fold CV.
std::map<CanonicalPlayerKey, int> stratification_bins(
    std::span<const PlayerSeries> series_list, int n_bins, StratifyOn strat_on);

void write_splits(std::ostream& out, const SplitAssignment& splits);
SplitAssignment read_splits(std::istream& in);

// ---------------------------------------------------------------------------
// Scaling

struct ScalerParams {
  std::vector<double> mean;
  std::vector<double> stddev;  // population; 0 for constant features
  std::string fitted_on = "train";
};

// Windowed statistics pool every row of every window.
ScalerParams fit_scaler(std::span<const WindowedExample> examples);
ScalerParams fit_scaler(std::span<const SlidingAverageExample> examples);

WindowedExample apply_scaler(const ScalerParams& params,
                             const WindowedExample& example);
SlidingAverageExample apply_scaler(const ScalerParams& params,
                                   const SlidingAverageExample& example);
std::vector<WindowedExample> apply_scaler(
    const ScalerParams& params, std::span<const WindowedExample> examples);
std::vector<SlidingAverageExample> apply_scaler(
    const ScalerParams& params, std::span<const SlidingAverageExample> examples);

// z * sigma + mu; features with sigma = 0 return mu.
Eigen::VectorXd invert_scaler(const ScalerParams& params,
                              const Eigen::VectorXd& z);

// ---------------------------------------------------------------------------
// Synthetic data

struct PositionMix {
  double gk = 0.10;
  double def = 0.35;
  double mid = 0.40;
  double fwd = 0.15;
};

struct SyntheticSeason {
  std::vector<RawGameweekRow> rows;
  TeamStrengths strengths;
};

SyntheticSeason generate_synthetic_season(std::uint64_t seed, int n_players,
                                          int n_weeks,
                                          const PositionMix& mix = {},
                                          const std::string& season =
                                              "synthetic");

// Gameweek CSV in the ingest schema (round-trips through parse_gameweek_csv).
void write_gameweek_csv(std::ostream& out, std::span<const RawGameweekRow> rows);

// Cleaned rows: gameweek schema plus season, canonical_name, kickoff_order.
void write_clean_rows(std::ostream& out, std::span<const RawGameweekRow> rows,
                      std::span<const CanonicalPlayerKey> keys);
struct CleanRows {
  std::vector<RawGameweekRow> rows;
  std::vector<CanonicalPlayerKey> keys;
};
CleanRows read_clean_rows(std::istream& in);

// ---------------------------------------------------------------------------
// Serialized dataset: '#'-prefixed metadata lines followed by a CSV table.
//
//   # fplcast-dataset v1
//   # position <GK|DEF|MID|FWD>
//   # representation <windowed|sliding_average>
//   # window <w>
//   # tier <tier>
//   # features <name;name;...>
//   # seed <n>
//   # fractions <train> <validation> <test>
//   # scaler_fitted_on <label>
//   # scaler_mean <v> <v> ...
//   # scaler_std <v> <v> ...
//   split,player,season,target_gameweek,d,y,x0,x1,...
//
// Windowed records flatten X row-major (oldest week first). Feature values
// are written unscaled.

enum class Representation { kWindowed, kSlidingAverage };
std::string_view to_string(Representation representation);

struct DatasetMetadata {
  Position position = Position::kMID;
  Representation representation = Representation::kWindowed;
  int window = 1;
  FeatureTier tier = FeatureTier::kPtsOnly;
  std::uint64_t seed = 0;
  SplitFractions fractions;
  ScalerParams scaler;
};

struct DatasetRecord {
  SplitLabel split = SplitLabel::kTrain;
  CanonicalPlayerKey player;
  std::string season;
  int target_gameweek = 0;
  int d = 0;
  int y = 0;
  std::vector<double> features;
};

struct DatasetFile {
  DatasetMetadata metadata;
  std::vector<DatasetRecord> records;
};

void write_dataset(std::ostream& out, const DatasetFile& dataset);
DatasetFile read_dataset(std::istream& in);

}  // namespace fplcast
