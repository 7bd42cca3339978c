#include "fplcast/ingest.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <unordered_map>

#include "fplcast/error.hpp"
#include "fplcast/text_io.hpp"

namespace fplcast {

std::string_view to_string(DifficultySign sign) {
  return sign == DifficultySign::kOpponentMinusOwn ? "opponent_minus_own"
                                                   : "own_minus_opponent";
}

std::optional<DifficultySign> parse_difficulty_sign(std::string_view text) {
  if (text == "opponent_minus_own") return DifficultySign::kOpponentMinusOwn;
  if (text == "own_minus_opponent") return DifficultySign::kOwnMinusOpponent;
  return std::nullopt;
}

std::string_view to_string(Position position) {
  switch (position) {
    case Position::kGK: return "GK";
    case Position::kDEF: return "DEF";
    case Position::kMID: return "MID";
    case Position::kFWD: return "FWD";
  }
  return "?";
}

std::optional<Position> parse_position(std::string_view text) {
  const std::string t = text::trim(text);
  if (t == "GK" || t == "GKP") return Position::kGK;
  if (t == "DEF") return Position::kDEF;
  if (t == "MID") return Position::kMID;
  if (t == "FWD") return Position::kFWD;
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Name canonicalization

namespace {

void append_utf8(std::string& out, char32_t cp) {
  if (cp < 0x80) {
    out.push_back(static_cast<char>(cp));
  } else if (cp < 0x800) {
    out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else if (cp < 0x10000) {
    out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else {
    out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  }
}

// Lenient decoder: bytes that do not form valid UTF-8 are read as Latin-1,
// which is what mis-encoded exports usually contain.
std::u32string decode_utf8(std::string_view s) {
  std::u32string out;
  out.reserve(s.size());
  std::size_t i = 0;
  while (i < s.size()) {
    const auto b0 = static_cast<unsigned char>(s[i]);
    int len = 0;
    char32_t cp = 0;
    if (b0 < 0x80) {
      len = 1;
      cp = b0;
    } else if ((b0 & 0xE0) == 0xC0) {
      len = 2;
      cp = b0 & 0x1F;
    } else if ((b0 & 0xF0) == 0xE0) {
      len = 3;
      cp = b0 & 0x0F;
    } else if ((b0 & 0xF8) == 0xF0) {
      len = 4;
      cp = b0 & 0x07;
    }
    bool valid = len > 0 && i + len <= s.size();
    for (int k = 1; valid && k < len; ++k) {
      const auto b = static_cast<unsigned char>(s[i + k]);
      if ((b & 0xC0) != 0x80) {
        valid = false;
      } else {
        cp = (cp << 6) | (b & 0x3F);
      }
    }
    if (!valid) {
      out.push_back(b0);
      ++i;
    } else {
      out.push_back(cp);
      i += len;
    }
  }
  return out;
}

bool is_combining_mark(char32_t cp) {
  return (cp >= 0x0300 && cp <= 0x036F) || (cp >= 0x1AB0 && cp <= 0x1AFF) ||
         (cp >= 0x1DC0 && cp <= 0x1DFF) || (cp >= 0x20D0 && cp <= 0x20FF) ||
         (cp >= 0xFE20 && cp <= 0xFE2F);
}

bool is_space(char32_t cp) {
  return cp == ' ' || cp == '\t' || cp == '\n' || cp == '\r' || cp == '\v' ||
         cp == '\f' || cp == 0x00A0 || cp == 0x2009 || cp == 0x202F;
}

// Lowercase ASCII folding for U+00C0..U+00FF.
constexpr const char* kLatin1Fold[64] = {
    "a",  "a", "a", "a", "a", "a", "ae", "c", "e", "e", "e", "e", "i", "i",
    "i",  "i", "d", "n", "o", "o", "o",  "o", "o", nullptr, "o", "u", "u",
    "u",  "u", "y", "th", "ss",
    "a",  "a", "a", "a", "a", "a", "ae", "c", "e", "e", "e", "e", "i", "i",
    "i",  "i", "d", "n", "o", "o", "o",  "o", "o", nullptr, "o", "u", "u",
    "u",  "u", "y", "th", "y"};

struct FoldRange {
  char32_t first;
  char32_t last;
  const char* ascii;
};

// Latin Extended-A plus the comma-below letters used in Romanian names.
constexpr FoldRange kExtendedFold[] = {
    {0x0100, 0x0105, "a"},  {0x0106, 0x010D, "c"}, {0x010E, 0x0111, "d"},
    {0x0112, 0x011B, "e"},  {0x011C, 0x0123, "g"}, {0x0124, 0x0127, "h"},
    {0x0128, 0x0131, "i"},  {0x0132, 0x0133, "ij"}, {0x0134, 0x0135, "j"},
    {0x0136, 0x0138, "k"},  {0x0139, 0x0142, "l"}, {0x0143, 0x014B, "n"},
    {0x014C, 0x0151, "o"},  {0x0152, 0x0153, "oe"}, {0x0154, 0x0159, "r"},
    {0x015A, 0x0161, "s"},  {0x0162, 0x0167, "t"}, {0x0168, 0x0173, "u"},
    {0x0174, 0x0175, "w"},  {0x0176, 0x0178, "y"}, {0x0179, 0x017E, "z"},
    {0x017F, 0x017F, "s"},  {0x0218, 0x0219, "s"}, {0x021A, 0x021B, "t"},
};

const char* fold(char32_t cp) {
  if (cp >= 0x00C0 && cp <= 0x00FF) return kLatin1Fold[cp - 0x00C0];
  for (const auto& range : kExtendedFold) {
    if (cp >= range.first && cp <= range.last) return range.ascii;
  }
  return nullptr;
}

}  // namespace

std::string canonicalize_name(std::string_view name) {
  std::string out;
  out.reserve(name.size());
  bool pending_space = false;
  for (char32_t cp : decode_utf8(name)) {
    if (is_combining_mark(cp)) continue;
    if (is_space(cp)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) {
      out.push_back(' ');
      pending_space = false;
    }
    if (cp < 0x80) {
      out.push_back(static_cast<char>(
          (cp >= 'A' && cp <= 'Z') ? cp - 'A' + 'a' : cp));
    } else if (const char* ascii = fold(cp)) {
      out += ascii;
    } else {
      append_utf8(out, cp);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Fuzzy matching

std::size_t levenshtein(std::string_view a, std::string_view b) {
  const std::u32string s = decode_utf8(a);
  const std::u32string t = decode_utf8(b);
  std::vector<std::size_t> prev(t.size() + 1);
  std::vector<std::size_t> curr(t.size() + 1);
  std::iota(prev.begin(), prev.end(), std::size_t{0});
  for (std::size_t i = 1; i <= s.size(); ++i) {
    curr[0] = i;
    for (std::size_t j = 1; j <= t.size(); ++j) {
      const std::size_t substitution = prev[j - 1] + (s[i - 1] != t[j - 1]);
      curr[j] = std::min({prev[j] + 1, curr[j - 1] + 1, substitution});
    }
    std::swap(prev, curr);
  }
  return prev[t.size()];
}

namespace {

std::string token_sorted(std::string_view s) {
  std::vector<std::string> tokens;
  for (auto& token : text::split(s, ' ')) {
    if (!token.empty()) tokens.push_back(std::move(token));
  }
  std::sort(tokens.begin(), tokens.end());
  return text::join(tokens, " ");
}

}  // namespace

double token_sort_similarity(std::string_view a, std::string_view b) {
  const std::string sa = token_sorted(a);
  const std::string sb = token_sorted(b);
  const std::size_t max_len =
      std::max(decode_utf8(sa).size(), decode_utf8(sb).size());
  if (max_len == 0) return 1.0;
  return 1.0 - static_cast<double>(levenshtein(sa, sb)) /
                   static_cast<double>(max_len);
}

std::optional<FuzzyMatch> fuzzy_match(std::string_view query,
                                      std::span<const std::string> candidates,
                                      double threshold) {
  if (candidates.empty()) {
    throw ArgumentError("fuzzy_match: candidate list is empty");
  }
  std::optional<FuzzyMatch> best;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const double score = token_sort_similarity(query, candidates[i]);
    if (!best || score > best->score) best = FuzzyMatch{candidates[i], score, i};
  }
  if (best->score < threshold) return std::nullopt;
  return best;
}

// ---------------------------------------------------------------------------
// Cleaning

std::vector<RawGameweekRow> drop_benched(std::span<const RawGameweekRow> rows) {
  std::vector<RawGameweekRow> kept;
  kept.reserve(rows.size());
  std::copy_if(rows.begin(), rows.end(), std::back_inserter(kept),
               [](const RawGameweekRow& row) { return row.minutes > 0; });
  return kept;
}

bool TeamStrengthTable::contains(std::string_view team) const {
  const std::string key = canonicalize_name(team);
  return entries.count(key) > 0 || id_aliases.count(key) > 0;
}

int TeamStrengthTable::strength(std::string_view team) const {
  const std::string key = canonicalize_name(team);
  if (auto it = entries.find(key); it != entries.end()) return it->second;
  if (auto alias = id_aliases.find(key); alias != id_aliases.end()) {
    if (auto it = entries.find(alias->second); it != entries.end()) {
      return it->second;
    }
  }
  throw LookupError("no strength rating for team '" + std::string(team) +
                    "' in season '" + season + "'");
}

int compute_difficulty(const RawGameweekRow& row,
                       const TeamStrengthTable& strengths,
                       DifficultySign sign) {
  const int own = strengths.strength(row.team);
  const int opponent = strengths.strength(row.opponent);
  return sign == DifficultySign::kOpponentMinusOwn ? opponent - own
                                                   : own - opponent;
}

int compute_difficulty(const RawGameweekRow& row, const TeamStrengths& strengths,
                       DifficultySign sign) {
  auto it = strengths.find(row.season);
  if (it == strengths.end()) {
    throw LookupError("no team strength table for season '" + row.season +
                      "' (team '" + row.team + "')");
  }
  return compute_difficulty(row, it->second, sign);
}

// ---------------------------------------------------------------------------
// CSV parsing

namespace {

constexpr std::string_view kRequired[] = {
    "name",          "position",       "GW",      "team",
    "opponent_team", "minutes",        "total_points", "goals_scored",
    "assists",       "clean_sheets",   "goals_conceded", "saves",
    "bps",           "bonus",          "influence", "creativity",
    "threat",        "ict_index",      "was_home"};

class ColumnIndex {
 public:
  explicit ColumnIndex(const std::vector<std::string>& header) {
    for (std::size_t i = 0; i < header.size(); ++i) {
      index_.emplace(text::trim(header[i]), i);
    }
  }

  std::optional<std::size_t> find(std::string_view name) const {
    auto it = index_.find(std::string(name));
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  std::size_t require(std::string_view name) const {
    auto found = find(name);
    if (!found) {
      throw SchemaError("missing required column '" + std::string(name) + "'");
    }
    return *found;
  }

 private:
  std::unordered_map<std::string, std::size_t> index_;
};

const std::string& field(const std::vector<std::string>& fields,
                         std::size_t column, std::size_t line) {
  if (column >= fields.size()) {
    throw ParseError("row has " + std::to_string(fields.size()) +
                         " fields, expected at least " +
                         std::to_string(column + 1),
                     line);
  }
  return fields[column];
}

int int_field(const std::vector<std::string>& fields, std::size_t column,
              std::string_view name, std::size_t line, bool non_negative) {
  const std::string& raw = field(fields, column, line);
  auto value = text::parse_int(raw);
  if (!value) {
    throw ParseError("column '" + std::string(name) +
                         "': non-numeric value '" + raw + "'",
                     line);
  }
  if (non_negative && *value < 0) {
    throw ParseError("column '" + std::string(name) + "': negative value " +
                         std::to_string(*value),
                     line);
  }
  return static_cast<int>(*value);
}

double real_field(const std::vector<std::string>& fields, std::size_t column,
                  std::string_view name, std::size_t line) {
  const std::string& raw = field(fields, column, line);
  auto value = text::parse_double(raw);
  if (!value || !std::isfinite(*value)) {
    throw ParseError("column '" + std::string(name) +
                         "': non-numeric value '" + raw + "'",
                     line);
  }
  if (*value < 0.0) {
    throw ParseError("column '" + std::string(name) + "': negative value",
                     line);
  }
  return *value;
}

bool bool_field(const std::vector<std::string>& fields, std::size_t column,
                std::size_t line) {
  const std::string raw = text::trim(field(fields, column, line));
  if (raw == "True" || raw == "true" || raw == "TRUE" || raw == "1") {
    return true;
  }
  if (raw == "False" || raw == "false" || raw == "FALSE" || raw == "0") {
    return false;
  }
  throw ParseError("column 'was_home': expected boolean, got '" + raw + "'",
                   line);
}

}  // namespace

std::span<const std::string_view> required_gameweek_columns() {
  return kRequired;
}

std::vector<RawGameweekRow> parse_gameweek_csv(std::istream& source,
                                               std::string_view season) {
  std::string line;
  if (!text::read_line(source, line)) {
    throw SchemaError("empty input: header row missing");
  }
  // Tolerate a UTF-8 byte order mark.
  if (line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);
  const ColumnIndex columns(text::split_csv_line(line));

  std::size_t gw_column = 0;
  if (auto gw = columns.find("GW")) {
    gw_column = *gw;
  } else if (auto round = columns.find("round")) {
    gw_column = *round;
  } else {
    throw SchemaError("missing required column 'GW' (or 'round')");
  }
  std::unordered_map<std::string_view, std::size_t> col;
  for (std::string_view name : kRequired) {
    if (name != "GW") col[name] = columns.require(name);
  }
  const auto kickoff_column = columns.find("kickoff_time");
  constexpr std::string_view kOptionalCounts[] = {
      "yellow_cards", "red_cards", "own_goals", "penalties_saved",
      "penalties_missed"};
  std::unordered_map<std::string_view, std::optional<std::size_t>> optional;
  for (std::string_view name : kOptionalCounts) optional[name] = columns.find(name);

  std::vector<RawGameweekRow> rows;
  std::size_t line_number = 1;
  while (text::read_line(source, line)) {
    ++line_number;
    if (text::trim(line).empty()) continue;
    const auto fields = text::split_csv_line(line);
    RawGameweekRow row;
    row.season = std::string(season);
    row.player_name = text::trim(field(fields, col["name"], line_number));
    const std::string& position_text =
        field(fields, col["position"], line_number);
    auto position = parse_position(position_text);
    if (!position) {
      throw ParseError("column 'position': unknown value '" + position_text +
                           "'",
                       line_number);
    }
    row.position = *position;
    row.gameweek = int_field(fields, gw_column, "GW", line_number, true);
    if (row.gameweek < 1) throw ParseError("GW must be >= 1", line_number);
    row.team = text::trim(field(fields, col["team"], line_number));
    row.opponent = text::trim(field(fields, col["opponent_team"], line_number));
    row.minutes = int_field(fields, col["minutes"], "minutes", line_number, true);
    if (row.minutes > 120) {
      throw ParseError("column 'minutes': value " +
                           std::to_string(row.minutes) + " exceeds 120",
                       line_number);
    }
    row.total_points = int_field(fields, col["total_points"], "total_points",
                                 line_number, false);
    const auto count = [&](std::string_view name) {
      return int_field(fields, col[name], name, line_number, true);
    };
    row.goals_scored = count("goals_scored");
    row.assists = count("assists");
    row.clean_sheets = count("clean_sheets");
    row.goals_conceded = count("goals_conceded");
    row.saves = count("saves");
    row.bps = int_field(fields, col["bps"], "bps", line_number, false);
    row.bonus = count("bonus");
    const auto optional_count = [&](std::string_view name) {
      const auto& column = optional[name];
      return column ? int_field(fields, *column, name, line_number, true) : 0;
    };
    row.yellow_cards = optional_count("yellow_cards");
    row.red_cards = optional_count("red_cards");
    row.own_goals = optional_count("own_goals");
    row.penalties_saved = optional_count("penalties_saved");
    row.penalties_missed = optional_count("penalties_missed");
    row.influence = real_field(fields, col["influence"], "influence", line_number);
    row.creativity =
        real_field(fields, col["creativity"], "creativity", line_number);
    row.threat = real_field(fields, col["threat"], "threat", line_number);
    row.ict_index = real_field(fields, col["ict_index"], "ict_index", line_number);
    row.was_home = bool_field(fields, col["was_home"], line_number);
    if (kickoff_column) {
      row.kickoff_time = text::trim(field(fields, *kickoff_column, line_number));
    }
    const double expected_ict =
        (row.influence + row.creativity + row.threat) / 10.0;
    if (std::abs(row.ict_index - expected_ict) > 0.5) {
      warn("line " + std::to_string(line_number) + ": ict_index " +
           text::format_double(row.ict_index) +
           " inconsistent with influence/creativity/threat");
    }
    rows.push_back(std::move(row));
  }

  std::vector<std::size_t> order(rows.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (rows[a].gameweek != rows[b].gameweek) {
      return rows[a].gameweek < rows[b].gameweek;
    }
    return rows[a].kickoff_time < rows[b].kickoff_time;
  });
  for (std::size_t rank = 0; rank < order.size(); ++rank) {
    rows[order[rank]].kickoff_order = static_cast<std::int64_t>(rank);
  }
  return rows;
}

TeamStrengths parse_team_strengths(std::istream& source) {
  std::string line;
  if (!text::read_line(source, line)) {
    throw SchemaError("team strengths: header row missing");
  }
  if (line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);
  const ColumnIndex columns(text::split_csv_line(line));
  const std::size_t season_col = columns.require("season");
  const std::size_t team_col = columns.require("team");
  const std::size_t strength_col = columns.require("strength");
  const auto id_col = columns.find("team_id");

  TeamStrengths tables;
  std::size_t line_number = 1;
  while (text::read_line(source, line)) {
    ++line_number;
    if (text::trim(line).empty()) continue;
    const auto fields = text::split_csv_line(line);
    const std::string season = text::trim(field(fields, season_col, line_number));
    const std::string team =
        canonicalize_name(field(fields, team_col, line_number));
    const int strength =
        int_field(fields, strength_col, "strength", line_number, true);
    if (strength < 1 || strength > 5) {
      throw ParseError("strength must be in [1, 5], got " +
                           std::to_string(strength),
                       line_number);
    }
    auto& table = tables[season];
    table.season = season;
    table.entries[team] = strength;
    if (id_col) {
      const std::string id = text::trim(field(fields, *id_col, line_number));
      if (!id.empty()) table.id_aliases[id] = team;
    }
  }
  return tables;
}

void write_team_strengths(std::ostream& out, const TeamStrengths& strengths) {
  out << "\"season\",\"team\",\"strength\"\n";
  for (const auto& [season, table] : strengths) {
    for (const auto& [team, strength] : table.entries) {
      text::CsvWriter(out).text(season).text(team).integer(strength).end_row();
    }
  }
}

// ---------------------------------------------------------------------------
// Identity resolution

KeyResolution resolve_player_keys(std::span<const RawGameweekRow> rows,
                                  double threshold) {
  struct Spelling {
    std::string name;
    Position position;
    std::set<std::pair<std::string, int>> appearances;  // (season, gameweek)
  };
  std::vector<Spelling> spellings;
  std::map<std::pair<std::string, Position>, std::size_t> spelling_index;
  std::vector<std::size_t> row_spelling(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::string name = canonicalize_name(rows[i].player_name);
    auto key = std::make_pair(name, rows[i].position);
    auto [it, inserted] = spelling_index.emplace(key, spellings.size());
    if (inserted) spellings.push_back({std::move(name), rows[i].position, {}});
    spellings[it->second].appearances.emplace(rows[i].season, rows[i].gameweek);
    row_spelling[i] = it->second;
  }

  KeyResolution result;
  // Established keys per position, in order of establishment.
  struct Established {
    std::vector<std::string> names;
    std::vector<std::set<std::pair<std::string, int>>> appearances;
  };
  std::map<Position, Established> established;
  std::vector<std::string> resolved(spellings.size());
  for (std::size_t s = 0; s < spellings.size(); ++s) {
    const Spelling& spelling = spellings[s];
    auto& pool = established[spelling.position];
    std::vector<std::string> candidates;
    std::vector<std::size_t> candidate_slot;
    for (std::size_t k = 0; k < pool.names.size(); ++k) {
      const auto& seen = pool.appearances[k];
      const bool overlaps = std::any_of(
          spelling.appearances.begin(), spelling.appearances.end(),
          [&](const auto& a) { return seen.count(a) > 0; });
      if (!overlaps) {
        candidates.push_back(pool.names[k]);
        candidate_slot.push_back(k);
      }
    }
    std::optional<FuzzyMatch> match;
    if (!candidates.empty()) {
      match = fuzzy_match(spelling.name, candidates, threshold);
    }
    if (match) {
      const std::size_t slot = candidate_slot[match->index];
      pool.appearances[slot].insert(spelling.appearances.begin(),
                                    spelling.appearances.end());
      resolved[s] = pool.names[slot];
      result.merges.push_back(
          {spelling.name, pool.names[slot], spelling.position, match->score});
    } else {
      pool.names.push_back(spelling.name);
      pool.appearances.push_back(spelling.appearances);
      resolved[s] = spelling.name;
    }
  }

  result.keys.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    result.keys.push_back({resolved[row_spelling[i]], rows[i].position});
  }
  return result;
}

}  // namespace fplcast
