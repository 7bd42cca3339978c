#pragma once

#include <array>
#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace fplcast {

enum class Position { kGK = 0, kDEF = 1, kMID = 2, kFWD = 3 };

inline constexpr std::array<Position, 4> kAllPositions = {
    Position::kGK, Position::kDEF, Position::kMID, Position::kFWD};

std::string_view to_string(Position position);
// Accepts GK/GKP, DEF, MID, FWD.
std::optional<Position> parse_position(std::string_view text);

// One player's statistics for one real gameweek, as ingested.
struct RawGameweekRow {
  std::string player_name;
  Position position = Position::kMID;
  std::string season;
  int gameweek = 1;
  std::string team;
  std::string opponent;
  int minutes = 0;
  int total_points = 0;
  int goals_scored = 0;
  int assists = 0;
  int clean_sheets = 0;
  int goals_conceded = 0;
  int saves = 0;
  int bps = 0;
  int bonus = 0;
  int yellow_cards = 0;
  int red_cards = 0;
  int own_goals = 0;
  int penalties_saved = 0;
  int penalties_missed = 0;
  double influence = 0.0;
  double creativity = 0.0;
  double threat = 0.0;
  double ict_index = 0.0;
  bool was_home = false;
  std::string kickoff_time;  // RFC 3339, may be empty
  // Rank of (gameweek, kickoff_time, file order) within the parsed file.
  std::int64_t kickoff_order = 0;

  bool operator==(const RawGameweekRow&) const = default;
};

struct CanonicalPlayerKey {
  std::string canonical_name;
  Position position = Position::kMID;

  auto operator<=>(const CanonicalPlayerKey&) const = default;
};

// Strength ratings (1..5) for one season, keyed by canonicalized team name.
// Numeric ids are accepted as aliases because some exports record the
// opponent by id only.
struct TeamStrengthTable {
  std::string season;
  std::map<std::string, int> entries;
  std::map<std::string, std::string> id_aliases;  // id -> canonical name

  int strength(std::string_view team) const;  // throws LookupError
  bool contains(std::string_view team) const;
};

using TeamStrengths = std::map<std::string, TeamStrengthTable>;  // by season

enum class DifficultySign {
  kOpponentMinusOwn,  // positive = harder upcoming match (default)
  kOwnMinusOpponent,
};
std::string_view to_string(DifficultySign sign);
std::optional<DifficultySign> parse_difficulty_sign(std::string_view text);

// Columns that must be present in a gameweek CSV. "GW" may be spelled
// "round".
std::span<const std::string_view> required_gameweek_columns();

std::vector<RawGameweekRow> parse_gameweek_csv(std::istream& source,
                                               std::string_view season);

// CSV with columns season, team, strength and optional team_id.
TeamStrengths parse_team_strengths(std::istream& source);
void write_team_strengths(std::ostream& out, const TeamStrengths& strengths);

// Folds diacritics to ASCII, lowercases, collapses interior whitespace and
// trims.
std::string canonicalize_name(std::string_view name);

std::size_t levenshtein(std::string_view a, std::string_view b);

// 1 - edit_distance / max_length over alphabetically sorted tokens.
double token_sort_similarity(std::string_view a, std::string_view b);

struct FuzzyMatch {
  std::string candidate;
  double score = 0.0;
  std::size_t index = 0;
};

inline constexpr double kDefaultFuzzyThreshold = 0.85;

std::optional<FuzzyMatch> fuzzy_match(std::string_view query,
                                      std::span<const std::string> candidates,
                                      double threshold);

std::vector<RawGameweekRow> drop_benched(std::span<const RawGameweekRow> rows);

int compute_difficulty(const RawGameweekRow& row,
                       const TeamStrengthTable& strengths,
                       DifficultySign sign = DifficultySign::kOpponentMinusOwn);

int compute_difficulty(const RawGameweekRow& row, const TeamStrengths& strengths,
                       DifficultySign sign = DifficultySign::kOpponentMinusOwn);

struct NameResolution {
  std::string raw_canonical;  // spelling that was merged away
  std::string resolved_to;
  Position position = Position::kMID;
  double score = 0.0;
};

struct KeyResolution {
  // keys[i] is the resolved identity of rows[i].
  std::vector<CanonicalPlayerKey> keys;
  std::vector<NameResolution> merges;
};

// Assigns a canonical identity to every row. Spellings that do not match
// exactly are merged into an existing key of the same position when the
// fuzzy score reaches the threshold and the two spellings never appear in
// the same (season, gameweek); co-occurring names are distinct players.
KeyResolution resolve_player_keys(std::span<const RawGameweekRow> rows,
                                  double threshold = kDefaultFuzzyThreshold);

}  // namespace fplcast
