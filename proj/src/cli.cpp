#include "fplcast/cli.hpp"

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "fplcast/cnn.hpp"
#include "fplcast/error.hpp"
#include "fplcast/evaluation.hpp"
#include "fplcast/gbm.hpp"
#include "fplcast/ridge.hpp"
#include "fplcast/rng.hpp"
#include "fplcast/text_io.hpp"

namespace fplcast {

namespace fs = std::filesystem;
using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Options

namespace {

const std::vector<std::string>& run_keys() {
  static const std::vector<std::string> keys = {
      "gameweek_files", "strengths",       "clean_rows",     "splits",
      "model",          "out_dir",         "position",       "family",
      "families",       "seed",            "fuzzy_threshold", "difficulty_sign",
      "split_train",    "split_validation", "split_test",    "strat_bins",
      "cv_folds",       "workers",         "top_k",          "final_evaluation",
      "eval_split",     "spearman_mode",   "extreme_k",      "rank_gameweek",
      "rank_season",    "explain",         "explain_example", "background_size",
      "synth_players",  "synth_weeks",     "synth_season",    "grid_cv",
  };
  return keys;
}

[[noreturn]] void bad_option(const std::string& key, const std::string& value) {
  throw ConfigError("option '" + key + "': invalid value '" + value + "'");
}

int option_int(const std::string& key, const std::string& value) {
  auto v = text::parse_int(text::trim(value));
  if (!v || *v < std::numeric_limits<int>::min() ||
      *v > std::numeric_limits<int>::max()) {
    bad_option(key, value);
  }
  return static_cast<int>(*v);
}

double option_real(const std::string& key, const std::string& value) {
  auto v = text::parse_double(text::trim(value));
  if (!v || !std::isfinite(*v)) bad_option(key, value);
  return *v;
}

bool option_bool(const std::string& key, const std::string& value) {
  const std::string v = text::trim(value);
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  bad_option(key, value);
}

std::vector<std::string> option_list(const std::string& value) {
  std::vector<std::string> items;
  for (const auto& part : text::split(value, ',')) {
    auto item = text::trim(part);
    if (!item.empty()) items.push_back(item);
  }
  return items;
}

}  // namespace

std::vector<std::string> run_option_keys() {
  std::vector<std::string> keys = run_keys();
  for (auto key : model_option_keys()) keys.emplace_back(key);
  return keys;
}

void set_run_option(RunConfig& c, const std::string& key,
                    const std::string& value) {
  const std::string v = text::trim(value);
  if (is_model_option(key)) {
    set_model_option(c.model_config, key, v);
  } else if (key == "gameweek_files") {
    c.gameweek_files = option_list(v);
  } else if (key == "strengths") {
    c.strengths = v;
  } else if (key == "clean_rows") {
    c.clean_rows = v;
  } else if (key == "splits") {
    c.splits = v;
  } else if (key == "model") {
    c.model = v;
  } else if (key == "out_dir") {
    if (v.empty()) bad_option(key, value);
    c.out_dir = v;
  } else if (key == "position") {
    if (v != "all" && !parse_position(v)) bad_option(key, value);
    c.position = v == "all" ? v : std::string(to_string(*parse_position(v)));
  } else if (key == "family") {
    auto f = parse_model_family(v);
    if (!f) bad_option(key, value);
    c.model_config.family = *f;
  } else if (key == "families") {
    c.families.clear();
    for (const auto& item : option_list(v)) {
      auto f = parse_model_family(item);
      if (!f) bad_option(key, value);
      c.families.push_back(*f);
    }
  } else if (key == "seed") {
    auto s = text::parse_int(v);
    if (!s || *s < 0) bad_option(key, value);
    c.seed = static_cast<std::uint64_t>(*s);
  } else if (key == "fuzzy_threshold") {
    c.fuzzy_threshold = option_real(key, v);
  } else if (key == "difficulty_sign") {
    auto s = parse_difficulty_sign(v);
    if (!s) bad_option(key, value);
    c.difficulty_sign = *s;
  } else if (key == "split_train") {
    c.fractions.train = option_real(key, v);
  } else if (key == "split_validation") {
    c.fractions.validation = option_real(key, v);
  } else if (key == "split_test") {
    c.fractions.test = option_real(key, v);
  } else if (key == "strat_bins") {
    c.strat_bins = option_int(key, v);
  } else if (key == "cv_folds") {
    c.cv_folds = option_int(key, v);
  } else if (key == "workers") {
    c.workers = option_int(key, v);
  } else if (key == "top_k") {
    c.top_k = option_int(key, v);
  } else if (key == "final_evaluation") {
    c.final_evaluation = option_bool(key, v);
  } else if (key == "grid_cv") {
    c.grid_cv = option_bool(key, v);
  } else if (key == "eval_split") {
    auto s = parse_split_label(v);
    if (!s) bad_option(key, value);
    c.eval_split = *s;
  } else if (key == "spearman_mode") {
    if (v == "pooled") {
      c.spearman_per_gameweek = false;
    } else if (v == "per_gameweek") {
      c.spearman_per_gameweek = true;
    } else {
      bad_option(key, value);
    }
  } else if (key == "extreme_k") {
    c.extreme_k = option_int(key, v);
  } else if (key == "rank_gameweek") {
    c.rank_gameweek = option_int(key, v);
  } else if (key == "rank_season") {
    c.rank_season = v;
  } else if (key == "explain") {
    static const std::set<std::string> kinds = {"auto", "coefficients",
                                                "importance", "shapley", "filter"};
    if (!kinds.count(v)) bad_option(key, value);
    c.explain = v;
  } else if (key == "explain_example") {
    c.explain_example = option_int(key, v);
  } else if (key == "background_size") {
    c.background_size = option_int(key, v);
  } else if (key == "synth_players") {
    c.synth_players = option_int(key, v);
  } else if (key == "synth_weeks") {
    c.synth_weeks = option_int(key, v);
  } else if (key == "synth_season") {
    if (v.empty()) bad_option(key, value);
    c.synth_season = v;
  } else {
    throw ConfigError("unknown option '" + key + "'");
  }
}

namespace {

std::string json_scalar(const std::string& key, const json& value) {
  if (value.is_string()) return value.get<std::string>();
  if (value.is_boolean()) return value.get<bool>() ? "true" : "false";
  if (value.is_number_integer()) return std::to_string(value.get<std::int64_t>());
  if (value.is_number_unsigned()) return std::to_string(value.get<std::uint64_t>());
  if (value.is_number_float()) return text::format_double(value.get<double>());
  throw ConfigError("option '" + key + "': expected a scalar value");
}

}  // namespace

void load_run_config(RunConfig& config, const std::string& json_text) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config: invalid JSON: ") + e.what());
  }
  if (!root.is_object()) throw ConfigError("config: top level must be an object");
  for (const auto& [key, value] : root.items()) {
    if (key == "grid") {
      if (!value.is_object()) throw ConfigError("option 'grid': expected an object");
      config.grid.clear();
      for (const auto& [axis, values] : value.items()) {
        if (!is_model_option(axis)) {
          throw ConfigError("grid: unknown axis '" + axis + "'");
        }
        if (!values.is_array()) {
          throw ConfigError("grid axis '" + axis + "': expected an array");
        }
        auto& list = config.grid[axis];
        for (const auto& v : values) list.push_back(json_scalar(axis, v));
      }
    } else if (value.is_array()) {
      std::vector<std::string> items;
      for (const auto& v : value) items.push_back(json_scalar(key, v));
      set_run_option(config, key, text::join(items, ","));
    } else {
      set_run_option(config, key, json_scalar(key, value));
    }
  }
}

std::vector<std::string> validate_run_config(const RunConfig& c) {
  std::vector<std::string> problems;
  const auto check = [&](const std::function<void()>& fn) {
    try {
      fn();
    } catch (const std::exception& e) {
      problems.emplace_back(e.what());
    }
  };
  const ModelConfig& m = c.model_config;
  if (m.window < 1) problems.emplace_back("window must be >= 1");
  if (!(m.ridge_lambda >= 0.0)) problems.emplace_back("ridge_lambda must be >= 0");
  check([&] { m.gbm.validate(); });
  check([&] { m.train.validate(); });
  if (m.family == ModelFamily::kCnn) {
    check([&] {
      CnnShape{m.window, m.kernel, 1, m.filters, m.hidden}.validate();
    });
  }
  const double total = c.fractions.train + c.fractions.validation + c.fractions.test;
  if (c.fractions.train <= 0 || c.fractions.validation < 0 ||
      c.fractions.test < 0 || std::abs(total - 1.0) > 1e-9) {
    problems.emplace_back("split fractions must be non-negative and sum to 1");
  }
  if (c.strat_bins < 1) problems.emplace_back("strat_bins must be >= 1");
  if (c.cv_folds < 2) problems.emplace_back("cv_folds must be >= 2");
  if (c.workers < 1) problems.emplace_back("workers must be >= 1");
  if (c.top_k < 1) problems.emplace_back("top_k must be >= 1");
  if (c.extreme_k < 0) problems.emplace_back("extreme_k must be >= 0");
  if (c.background_size < 1) problems.emplace_back("background_size must be >= 1");
  if (c.explain_example < 0) problems.emplace_back("explain_example must be >= 0");
  if (!(c.fuzzy_threshold >= 0.0 && c.fuzzy_threshold <= 1.0)) {
    problems.emplace_back("fuzzy_threshold must be in [0, 1]");
  }
  if (!c.grid.empty()) {
    GridSpec grid;
    grid.family = m.family;
    grid.axes = c.grid;
    check([&] { grid.validate(); });
  }
  return problems;
}

int exit_code(ErrorCategory category) {
  switch (category) {
    case ErrorCategory::kArgument: return 2;
    case ErrorCategory::kConfig: return 3;
    case ErrorCategory::kSchema: return 4;
    case ErrorCategory::kParse: return 5;
    case ErrorCategory::kLookup: return 6;
    case ErrorCategory::kShape: return 7;
    case ErrorCategory::kBudget: return 8;
    case ErrorCategory::kNumeric: return 9;
    case ErrorCategory::kIo: return 10;
  }
  return 1;
}

// ---------------------------------------------------------------------------
// Command helpers

namespace {

struct Context {
  RunConfig config;
  std::ostream& out;
  fs::path out_dir;
  std::vector<std::string> log;  // sidecar lines (not a data output)
};

std::string in_out_dir(const Context& ctx, const std::string& explicit_path,
                       const std::string& file_name) {
  return explicit_path.empty() ? (ctx.out_dir / file_name).string()
                               : explicit_path;
}

std::ifstream open_input(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  return in;
}

// Writes through a string so a failed command never leaves a partial file.
void write_output(Context& ctx, const std::string& file_name,
                  const std::function<void(std::ostream&)>& body) {
  std::ostringstream buffer;
  body(buffer);
  const fs::path path = ctx.out_dir / file_name;
  text::write_file(path.string(), buffer.str());
  ctx.out << "wrote " << path.string() << '\n';
}

std::vector<Position> selected_positions(const RunConfig& c) {
  if (c.position == "all") return {kAllPositions.begin(), kAllPositions.end()};
  return {*parse_position(c.position)};
}

template <typename Fn>
auto with_file_context(const std::string& path, Fn&& fn) {
  try {
    return fn();
  } catch (const Error& e) {
    throw Error(e.category(), path + ": " + e.what());
  }
}

TeamStrengths load_strengths(const Context& ctx) {
  const std::string path = in_out_dir(ctx, ctx.config.strengths, "strengths.csv");
  auto in = open_input(path);
  return with_file_context(path, [&] { return parse_team_strengths(in); });
}

struct LoadedData {
  std::vector<PlayerSeries> series;
  TeamStrengths strengths;
};

LoadedData load_clean(const Context& ctx) {
  const std::string path = in_out_dir(ctx, ctx.config.clean_rows, "clean_rows.csv");
  auto in = open_input(path);
  CleanRows clean = with_file_context(path, [&] { return read_clean_rows(in); });
  LoadedData data;
  data.series = group_series(clean.rows, clean.keys);
  data.strengths = load_strengths(ctx);
  return data;
}

SplitAssignment load_splits(const Context& ctx) {
  const std::string path = in_out_dir(ctx, ctx.config.splits, "splits.csv");
  auto in = open_input(path);
  return with_file_context(path, [&] { return read_splits(in); });
}

std::string model_file_name(ModelFamily family, Position position) {
  return "model_" + std::string(to_string(family)) + "_" +
         std::string(to_string(position)) + ".txt";
}

TrainedModel load_bundle(const std::string& path) {
  auto in = open_input(path);
  return with_file_context(path, [&] { return read_model_bundle(in); });
}

// Models for the selected positions, or the single explicit model file.
std::vector<TrainedModel> load_models(const Context& ctx, ModelFamily family) {
  std::vector<TrainedModel> models;
  const RunConfig& c = ctx.config;
  if (!c.model.empty()) {
    TrainedModel m = load_bundle(c.model);
    if (c.position != "all" && std::string(to_string(m.position)) != c.position) {
      throw ArgumentError("model '" + c.model + "' is for position " +
                          std::string(to_string(m.position)) +
                          " but --position is " + c.position);
    }
    models.push_back(std::move(m));
    return models;
  }
  for (Position p : selected_positions(c)) {
    TrainedModel m = load_bundle((ctx.out_dir / model_file_name(family, p)).string());
    if (m.position != p || m.family != family) {
      throw ArgumentError("model file for " + std::string(to_string(p)) +
                          " holds a " + std::string(to_string(m.family)) + " " +
                          std::string(to_string(m.position)) + " model");
    }
    models.push_back(std::move(m));
  }
  return models;
}

std::vector<double> targets_of(std::span<const WindowedExample> examples) {
  std::vector<double> y;
  y.reserve(examples.size());
  for (const auto& e : examples) y.push_back(e.y);
  return y;
}

std::span<const double> as_span(const Eigen::VectorXd& v) {
  return {v.data(), static_cast<std::size_t>(v.size())};
}

void require_valid(const RunConfig& config) {
  const auto problems = validate_run_config(config);
  if (problems.empty()) return;
  std::string message = "invalid configuration:";
  for (const auto& p : problems) message += "\n  - " + p;
  throw ConfigError(message);
}

// ---------------------------------------------------------------------------
// Commands

void cmd_synth(Context& ctx) {
  const RunConfig& c = ctx.config;
  const SyntheticSeason season = generate_synthetic_season(
      c.seed, c.synth_players, c.synth_weeks, {}, c.synth_season);
  write_output(ctx, "gameweeks.csv",
               [&](std::ostream& o) { write_gameweek_csv(o, season.rows); });
  write_output(ctx, "strengths.csv",
               [&](std::ostream& o) { write_team_strengths(o, season.strengths); });
  ctx.out << "synth: " << season.rows.size() << " rows\n";
}

void cmd_ingest(Context& ctx) {
  const RunConfig& c = ctx.config;
  std::vector<std::string> files = c.gameweek_files;
  if (files.empty()) {
    files.push_back(c.synth_season + "=" + (ctx.out_dir / "gameweeks.csv").string());
  }
  const TeamStrengths strengths = load_strengths(ctx);

  std::vector<RawGameweekRow> rows;
  for (const auto& spec : files) {
    std::string season;
    std::string path = spec;
    if (const auto eq = spec.find('='); eq != std::string::npos) {
      season = spec.substr(0, eq);
      path = spec.substr(eq + 1);
    } else {
      season = fs::path(path).stem().string();
    }
    auto in = open_input(path);
    auto parsed =
        with_file_context(path, [&] { return parse_gameweek_csv(in, season); });
    rows.insert(rows.end(), std::make_move_iterator(parsed.begin()),
                std::make_move_iterator(parsed.end()));
  }
  const std::size_t rows_read = rows.size();
  std::vector<RawGameweekRow> kept = drop_benched(rows);
  for (const auto& row : kept) compute_difficulty(row, strengths, c.difficulty_sign);
  const KeyResolution resolution = resolve_player_keys(kept, c.fuzzy_threshold);

  std::set<CanonicalPlayerKey> players(resolution.keys.begin(),
                                       resolution.keys.end());
  write_output(ctx, "clean_rows.csv", [&](std::ostream& o) {
    write_clean_rows(o, kept, resolution.keys);
  });
  write_output(ctx, "strengths.csv",
               [&](std::ostream& o) { write_team_strengths(o, strengths); });
  write_output(ctx, "fuzzy_resolutions.csv", [&](std::ostream& o) {
    o << "\"raw_name\",\"resolved_to\",\"position\",\"score\"\n";
    for (const auto& m : resolution.merges) {
      text::CsvWriter(o)
          .text(m.raw_canonical)
          .text(m.resolved_to)
          .text(to_string(m.position))
          .number(m.score)
          .end_row();
    }
  });
  json report;
  report["rows_read"] = rows_read;
  report["benched_dropped"] = rows_read - kept.size();
  report["rows_kept"] = kept.size();
  report["players"] = players.size();
  report["fuzzy_resolutions"] = json::array();
  for (const auto& m : resolution.merges) {
    report["fuzzy_resolutions"].push_back({{"raw_name", m.raw_canonical},
                                           {"resolved_to", m.resolved_to},
                                           {"position", to_string(m.position)},
                                           {"score", m.score}});
  }
  write_output(ctx, "ingest_report.json",
               [&](std::ostream& o) { o << report.dump(2) << '\n'; });
  ctx.out << "ingest: read " << rows_read << ", dropped: "
          << rows_read - kept.size() << ", kept " << kept.size() << ", "
          << resolution.merges.size() << " fuzzy resolutions\n";
}

void cmd_split(Context& ctx) {
  const RunConfig& c = ctx.config;
  const LoadedData data = load_clean(ctx);
  const SplitAssignment splits =
      assign_splits(data.series, c.fractions, c.strat_bins,
                    c.model_config.strat_on, c.seed);
  write_output(ctx, "splits.csv",
               [&](std::ostream& o) { write_splits(o, splits); });

  const ModelConfig& m = c.model_config;
  for (Position p : selected_positions(c)) {
    const PositionData pd =
        position_data(data.series, p, data.strengths, c.difficulty_sign);
    const auto examples =
        build_windows(pd.series, m.window, m.tier, pd.strengths, pd.sign);
    std::vector<WindowedExample> train_set;
    for (const auto& e : examples) {
      if (splits.at(e.player) == SplitLabel::kTrain) train_set.push_back(e);
    }
    DatasetFile file;
    file.metadata.position = p;
    file.metadata.representation = Representation::kWindowed;
    file.metadata.window = m.window;
    file.metadata.tier = m.tier;
    file.metadata.seed = c.seed;
    file.metadata.fractions = c.fractions;
    if (!train_set.empty()) file.metadata.scaler = fit_scaler(train_set);
    for (const auto& e : examples) {
      DatasetRecord r;
      r.split = splits.at(e.player);
      r.player = e.player;
      r.season = e.season;
      r.target_gameweek = e.target_gameweek;
      r.d = e.d;
      r.y = e.y;
      r.features.assign(e.X.data(), e.X.data() + e.X.size());
      file.records.push_back(std::move(r));
    }
    write_output(ctx, "dataset_" + std::string(to_string(p)) + ".csv",
                 [&](std::ostream& o) { write_dataset(o, file); });
  }
  std::array<std::size_t, 3> counts{};
  for (const auto& [key, label] : splits.players) {
    ++counts[static_cast<std::size_t>(label)];
  }
  ctx.out << "split: " << counts[0] << " train, " << counts[1]
          << " validation, " << counts[2] << " test players\n";
}

std::uint64_t position_seed(std::uint64_t seed, Position p) {
  return mix_seed(seed, "position:" + std::string(to_string(p)));
}

void cmd_train(Context& ctx) {
  const RunConfig& c = ctx.config;
  require_valid(c);
  const LoadedData data = load_clean(ctx);
  const SplitAssignment splits = load_splits(ctx);
  const ModelConfig& m = c.model_config;
  const std::string family(to_string(m.family));
  std::vector<EvalReport> reports;
  for (Position p : selected_positions(c)) {
    const PositionData pd =
        position_data(data.series, p, data.strengths, c.difficulty_sign);
    const auto train_set =
        split_examples(pd, splits, SplitLabel::kTrain, m.window, m.tier);
    const auto val_set =
        split_examples(pd, splits, SplitLabel::kValidation, m.window, m.tier);
    const auto start = std::chrono::steady_clock::now();
    const FitOutcome fit =
        fit_model(m, p, c.difficulty_sign, train_set, val_set, position_seed(c.seed, p));
    ctx.log.push_back("train " + family + " " + std::string(to_string(p)) +
                      " wall_seconds " +
                      text::format_double(std::chrono::duration<double>(
                                              std::chrono::steady_clock::now() - start)
                                              .count()));
    write_output(ctx, model_file_name(m.family, p),
                 [&](std::ostream& o) { write_model_bundle(o, fit.model); });
    if (fit.curve) {
      write_output(ctx, "curve_" + family + "_" + std::string(to_string(p)) + ".csv",
                   [&](std::ostream& o) { write_learning_curve(o, *fit.curve); });
    }
    const auto train_y = targets_of(train_set);
    const auto val_y = targets_of(val_set);
    const Eigen::VectorXd train_pred = predict(fit.model, train_set);
    const Eigen::VectorXd val_pred = predict(fit.model, val_set);
    reports.push_back(make_report(p, SplitLabel::kTrain, family, train_y, as_span(train_pred)));
    reports.push_back(make_report(p, SplitLabel::kValidation, family, val_y, as_span(val_pred)));
    ctx.out << "train " << family << " " << to_string(p) << ": train mse "
            << text::format_double(fit.train_mse) << ", val mse "
            << text::format_double(fit.val_mse) << '\n';
  }
  write_output(ctx, "report_" + family + ".csv",
               [&](std::ostream& o) { write_eval_reports(o, reports); });
}

json settings_json(const TrialResult& t) {
  json j = json::object();
  for (const auto& [key, value] : t.settings) j[key] = value;
  return j;
}

void cmd_gridsearch(Context& ctx) {
  const RunConfig& c = ctx.config;
  require_valid(c);
  const LoadedData data = load_clean(ctx);
  const SplitAssignment splits = load_splits(ctx);
  const ModelConfig& m = c.model_config;
  const std::string family(to_string(m.family));

  GridSpec grid = default_grid(m.family);
  if (!c.grid.empty()) grid.axes = c.grid;
  for (auto key : model_option_keys()) {
    if (!grid.axes.count(std::string(key))) {
      grid.fixed[std::string(key)] = get_model_option(m, key);
    }
  }
  grid.validate();

  std::vector<TrialResult> ledger;
  json summary;
  summary["family"] = family;
  summary["grid_size"] = grid.size();
  summary["scoring"] = c.grid_cv ? "cv" + std::to_string(c.cv_folds) : "split";
  summary["positions"] = json::object();
  for (Position p : selected_positions(c)) {
    const PositionData pd =
        position_data(data.series, p, data.strengths, c.difficulty_sign);
    std::vector<TrialResult> results =
        run_grid(grid, pd, splits, position_seed(c.seed, p), c.workers,
                 c.grid_cv ? c.cv_folds : 0);
    for (std::size_t i = 0; i < results.size(); ++i) {
      ctx.log.push_back("trial " + family + " " + std::string(to_string(p)) +
                        " " + std::to_string(results[i].seed) + " wall_seconds " +
                        text::format_double(results[i].wall_seconds));
    }
    std::size_t successes = 0;
    for (const auto& r : results) successes += r.ok ? 1 : 0;
    json entry;
    entry["trials"] = results.size();
    entry["failed"] = results.size() - successes;
    if (successes > 0) {
      const std::size_t k = std::min<std::size_t>(successes, static_cast<std::size_t>(c.top_k));
      const TopKSummary top = top_k_summary(results, k);
      entry["top_k"] = k;
      entry["top_k_mean_val_mse"] = top.mean_val_mse;
      entry["top_k_max_val_mse"] = top.max_val_mse;
      entry["best"] = {{"settings", settings_json(results.front())},
                       {"seed", std::to_string(results.front().seed)},
                       {"train_mse", results.front().train_mse},
                       {"val_mse", results.front().val_mse}};
      if (c.final_evaluation) {
        const FinalSelection final_sel = select_final(results, pd, splits);
        results.front().test_mse = final_sel.trial.test_mse;
        entry["best"]["test_mse"] = *final_sel.trial.test_mse;
        write_output(ctx, model_file_name(m.family, p), [&](std::ostream& o) {
          write_model_bundle(o, final_sel.fit.model);
        });
        ctx.out << "gridsearch " << family << " " << to_string(p)
                << ": best val mse " << text::format_double(results.front().val_mse)
                << ", test mse " << text::format_double(*final_sel.trial.test_mse)
                << '\n';
      }
    } else {
      ctx.out << "gridsearch " << family << " " << to_string(p)
              << ": no successful trials\n";
    }
    summary["positions"][std::string(to_string(p))] = entry;
    ledger.insert(ledger.end(), results.begin(), results.end());
  }
  write_output(ctx, "grid_" + family + ".csv",
               [&](std::ostream& o) { write_trial_ledger(o, ledger); });
  write_output(ctx, "grid_summary_" + family + ".json",
               [&](std::ostream& o) { o << summary.dump(2) << '\n'; });
}

void cmd_cv(Context& ctx) {
  const RunConfig& c = ctx.config;
  require_valid(c);
  const LoadedData data = load_clean(ctx);
  const std::string splits_path = in_out_dir(ctx, c.splits, "splits.csv");
  std::optional<SplitAssignment> splits;
  if (fs::exists(splits_path)) splits = load_splits(ctx);
  const ModelConfig& m = c.model_config;
  const std::string family(to_string(m.family));

  std::ostringstream table;
  table << "\"family\",\"position\",\"fold\",\"train_mse\",\"val_mse\"\n";
  for (Position p : selected_positions(c)) {
    PositionData pd =
        position_data(data.series, p, data.strengths, c.difficulty_sign);
    if (splits) {
      // Cross-validation never sees the holdout players.
      std::erase_if(pd.series, [&](const PlayerSeries& s) {
        return splits->at(s.key()) == SplitLabel::kTest;
      });
    }
    const CvConfig cv{c.cv_folds, m.strat_on, c.strat_bins, position_seed(c.seed, p)};
    const CvResult result = cross_validate(m, pd, cv);
    for (std::size_t f = 0; f < result.fold_val_mse.size(); ++f) {
      text::CsvWriter(table)
          .text(family)
          .text(to_string(p))
          .text(std::to_string(f))
          .number(result.fold_train_mse[f])
          .number(result.fold_val_mse[f])
          .end_row();
    }
    text::CsvWriter(table)
        .text(family)
        .text(to_string(p))
        .text("mean")
        .number(result.mean_train_mse)
        .number(result.mean_val_mse)
        .end_row();
    ctx.out << "cv " << family << " " << to_string(p) << ": mean train mse "
            << text::format_double(result.mean_train_mse) << ", mean val mse "
            << text::format_double(result.mean_val_mse) << '\n';
  }
  write_output(ctx, "cv_" + family + ".csv",
               [&](std::ostream& o) { o << table.str(); });
}

void cmd_evaluate(Context& ctx) {
  const RunConfig& c = ctx.config;
  const LoadedData data = load_clean(ctx);
  const SplitAssignment splits = load_splits(ctx);
  std::vector<ModelFamily> families = c.families;
  if (families.empty()) families.push_back(c.model_config.family);
  const std::string split(to_string(c.eval_split));

  std::vector<EvalReport> reports;
  for (ModelFamily family : families) {
    for (const TrainedModel& model : load_models(ctx, family)) {
      const PositionData pd =
          position_data(data.series, model.position, data.strengths, model.sign);
      const auto examples =
          split_examples(pd, splits, c.eval_split, model.window, model.tier);
      if (examples.empty()) {
        throw ArgumentError("evaluate: no " + split + " examples for " +
                            std::string(to_string(model.position)));
      }
      const Eigen::VectorXd pred = predict(model, examples);
      const auto y = targets_of(examples);
      EvalReport report = make_report(model.position, c.eval_split,
                                      model_label(model), y, as_span(pred));
      if (c.spearman_per_gameweek) {
        std::vector<int> gws;
        for (const auto& e : examples) gws.push_back(e.target_gameweek);
        report.spearman = spearman_per_gameweek(y, as_span(pred), gws);
      }
      reports.push_back(report);
      const std::string stem = std::string(to_string(family)) + "_" +
                               std::string(to_string(model.position)) + "_" + split;
      const auto records = prediction_records(examples, as_span(pred));
      write_output(ctx, "predictions_" + stem + ".csv",
                   [&](std::ostream& o) { export_predictions(o, records); });
      const auto k = std::min<std::size_t>(static_cast<std::size_t>(c.extreme_k),
                                           examples.size());
      const ExtremeExamples extremes = extreme_examples(examples, as_span(pred), k);
      write_output(ctx, "extremes_" + stem + ".csv",
                   [&](std::ostream& o) { write_extreme_examples(o, extremes); });
      ctx.out << "evaluate " << to_string(family) << " "
              << to_string(model.position) << " " << split << ": mse "
              << text::format_double(report.mse) << ", spearman "
              << (report.spearman ? text::format_double(*report.spearman) : "null")
              << '\n';
    }
  }
  write_output(ctx, "eval_" + split + ".csv",
               [&](std::ostream& o) { write_eval_reports(o, reports); });
  write_output(ctx, "table_mse_" + split + ".csv",
               [&](std::ostream& o) { write_mse_table(o, reports); });
  write_output(ctx, "table_spearman_" + split + ".csv",
               [&](std::ostream& o) { write_spearman_table(o, reports); });
}

void cmd_rank(Context& ctx) {
  const RunConfig& c = ctx.config;
  const LoadedData data = load_clean(ctx);
  for (const TrainedModel& model : load_models(ctx, c.model_config.family)) {
    const PositionData pd =
        position_data(data.series, model.position, data.strengths, model.sign);
    auto examples =
        build_windows(pd.series, model.window, model.tier, pd.strengths, pd.sign);
    std::erase_if(examples, [&](const WindowedExample& e) {
      return e.target_gameweek != c.rank_gameweek;
    });
    std::string season = c.rank_season;
    if (season.empty()) {
      for (const auto& e : examples) season = std::max(season, e.season);
    }
    std::erase_if(examples,
                  [&](const WindowedExample& e) { return e.season != season; });
    if (examples.empty()) {
      throw LookupError("rank: no " + std::string(to_string(model.position)) +
                        " examples target gameweek " +
                        std::to_string(c.rank_gameweek));
    }
    const Eigen::VectorXd pred = predict(model, examples);
    std::vector<std::size_t> order(examples.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      const auto ia = static_cast<Eigen::Index>(a);
      const auto ib = static_cast<Eigen::Index>(b);
      if (pred[ia] != pred[ib]) return pred[ia] > pred[ib];
      return examples[a].player.canonical_name < examples[b].player.canonical_name;
    });
    std::vector<double> negated;
    for (std::size_t i : order) negated.push_back(-pred[static_cast<Eigen::Index>(i)]);
    const std::vector<double> tied = average_ranks(negated);
    const std::string name = "rank_" + std::string(to_string(model.family)) + "_" +
                             std::string(to_string(model.position)) + "_gw" +
                             std::to_string(c.rank_gameweek) + ".csv";
    write_output(ctx, name, [&](std::ostream& o) {
      o << "\"rank\",\"tied_rank\",\"player\",\"season\",\"gameweek\","
           "\"predicted\"\n";
      for (std::size_t r = 0; r < order.size(); ++r) {
        const auto& e = examples[order[r]];
        text::CsvWriter(o)
            .integer(static_cast<std::int64_t>(r + 1))
            .number(tied[r])
            .text(e.player.canonical_name)
            .text(e.season)
            .integer(e.target_gameweek)
            .number(pred[static_cast<Eigen::Index>(order[r])])
            .end_row();
      }
    });
  }
}

void write_filter(Context& ctx, const TrainedModel& model) {
  const auto& cnn = std::get<CnnModel>(model.model);
  const RowMatrix filter = mean_normalized_filter(cnn);
  const auto names = tier_columns(model.tier);
  write_output(ctx, "filter_cnn_" + std::string(to_string(model.position)) + ".csv",
               [&](std::ostream& o) {
                 text::CsvWriter header(o);
                 header.text("offset");
                 for (const auto& n : names) header.text(n);
                 header.end_row();
                 for (Eigen::Index r = 0; r < filter.rows(); ++r) {
                   text::CsvWriter row(o);
                   row.integer(r);
                   for (Eigen::Index j = 0; j < filter.cols(); ++j) {
                     row.number(filter(r, j));
                   }
                   row.end_row();
                 }
               });
}

void cmd_filters(Context& ctx) {
  for (const TrainedModel& model : load_models(ctx, ModelFamily::kCnn)) {
    if (model.family != ModelFamily::kCnn) {
      throw ArgumentError("filters: model is not a cnn");
    }
    write_filter(ctx, model);
  }
}

void cmd_explain(Context& ctx) {
  const RunConfig& c = ctx.config;
  const ModelFamily family = c.model_config.family;
  std::string what = c.explain;
  if (what == "auto") {
    what = family == ModelFamily::kRidge ? "coefficients"
           : family == ModelFamily::kGbm ? "shapley"
                                         : "filter";
  }
  const bool supported =
      (what == "coefficients" && family == ModelFamily::kRidge) ||
      ((what == "importance" || what == "shapley") && family == ModelFamily::kGbm) ||
      (what == "filter" && family == ModelFamily::kCnn);
  if (!supported) {
    throw ArgumentError("explain: '" + what + "' is not available for " +
                        std::string(to_string(family)) + " models");
  }
  const auto models = load_models(ctx, family);
  for (const auto& model : models) {
    if (model.family != family) {
      throw ArgumentError("explain: model file is a " +
                          std::string(to_string(model.family)) + " model");
    }
  }

  if (what == "coefficients") {
    std::vector<std::pair<Position, RidgeModel>> ridge;
    for (const auto& m : models) ridge.emplace_back(m.position, std::get<RidgeModel>(m.model));
    const CoefficientTable table = export_coefficients(ridge);
    write_output(ctx, "coefficients_ridge.csv",
                 [&](std::ostream& o) { write_coefficient_table(o, table); });
    return;
  }
  if (what == "filter") {
    for (const auto& m : models) write_filter(ctx, m);
    return;
  }
  if (what == "importance") {
    for (const auto& m : models) {
      const SplitImportance imp = split_importance(std::get<GbmModel>(m.model));
      write_output(ctx, "importance_gbm_" + std::string(to_string(m.position)) + ".csv",
                   [&](std::ostream& o) {
                     o << "\"feature\",\"splits\",\"percent\"\n";
                     for (std::size_t j = 0; j < imp.feature_names.size(); ++j) {
                       text::CsvWriter(o)
                           .text(imp.feature_names[j])
                           .integer(imp.counts[j])
                           .number(imp.percentages[j])
                           .end_row();
                     }
                   });
    }
    return;
  }

  // Shapley: one evaluation-split example against a seeded training sample.
  const LoadedData data = load_clean(ctx);
  const SplitAssignment splits = load_splits(ctx);
  for (const auto& m : models) {
    const auto& gbm = std::get<GbmModel>(m.model);
    if (gbm.n_features > kMaxShapleyFeatures) {
      throw BudgetError("shapley: model has " + std::to_string(gbm.n_features) +
                        " features; exact enumeration is limited to " +
                        std::to_string(kMaxShapleyFeatures) +
                        " (choose a smaller feature tier)");
    }
    const PositionData pd =
        position_data(data.series, m.position, data.strengths, m.sign);
    const auto targets =
        split_examples(pd, splits, c.eval_split, m.window, m.tier);
    const auto index = static_cast<std::size_t>(c.explain_example);
    if (index >= targets.size()) {
      throw ArgumentError("explain: example " + std::to_string(index) +
                          " out of range (" + std::to_string(targets.size()) +
                          " examples)");
    }
    const auto train_set =
        split_examples(pd, splits, SplitLabel::kTrain, m.window, m.tier);
    if (train_set.empty()) throw ArgumentError("explain: empty training split");
    Rng rng(mix_seed(c.seed, "shapley-background"));
    auto order = rng.permutation(train_set.size());
    order.resize(std::min<std::size_t>(order.size(),
                                       static_cast<std::size_t>(c.background_size)));
    std::sort(order.begin(), order.end());
    std::vector<WindowedExample> background;
    for (std::size_t i : order) background.push_back(train_set[i]);
    const Eigen::MatrixXd bg = baseline_design(m, background);
    const Eigen::MatrixXd xrow = baseline_design(m, std::span(&targets[index], 1));
    const Eigen::VectorXd x = xrow.row(0).transpose();
    const ShapleyResult result =
        shapley_values(gbm, std::span<const double>(x.data(), x.size()), bg);
    write_output(ctx, "shapley_gbm_" + std::string(to_string(m.position)) + ".csv",
                 [&](std::ostream& o) {
                   o << "\"feature\",\"value\",\"phi\"\n";
                   for (std::size_t j = 0; j < result.phi.size(); ++j) {
                     text::CsvWriter(o)
                         .text(gbm.feature_names[j])
                         .number(x[static_cast<Eigen::Index>(j)])
                         .number(result.phi[j])
                         .end_row();
                   }
                   text::CsvWriter(o).text("base_value").null().number(result.base_value).end_row();
                   text::CsvWriter(o).text("prediction").null().number(result.prediction).end_row();
                 });
  }
}

struct Setting {
  std::string key;
  std::string value;
  std::vector<std::string> values;
  CLI::Option* option = nullptr;
  bool is_flag = false;
  bool flag_value = false;
  std::string flag_sets = "false";  // value assigned to key when the flag is given
};

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out,
            std::ostream& err) {
  CLI::App app{"Fantasy football points forecasting: data pipeline, models and evaluation",
               "fplcast"};
  app.require_subcommand(1, 1);
  app.fallthrough();

  std::string config_path;
  std::vector<std::string> set_values;
  bool quiet = false;
  std::vector<std::unique_ptr<Setting>> settings;
  const auto bind = [&](CLI::App* target, const std::string& flag,
                        const std::string& key, const std::string& help) {
    auto s = std::make_unique<Setting>();
    s->key = key;
    s->option = target->add_option(flag, s->value, help);
    settings.push_back(std::move(s));
  };
  const auto bind_list = [&](CLI::App* target, const std::string& flag,
                             const std::string& key, const std::string& help) {
    auto s = std::make_unique<Setting>();
    s->key = key;
    s->option = target->add_option(flag, s->values, help);
    settings.push_back(std::move(s));
  };

  app.add_option("--config", config_path, "JSON configuration file");
  bind(&app, "--seed", "seed", "Base random seed");
  bind(&app, "--position", "position", "GK, DEF, MID, FWD or all");
  bind(&app, "--out", "out_dir", "Output directory (also the default input location)");
  app.add_option("--set", set_values, "Override any configuration key: key=value");
  app.add_flag("--quiet", quiet, "Suppress warnings");

  auto* synth = app.add_subcommand("synth", "Generate a synthetic season");
  bind(synth, "--players", "synth_players", "Number of players");
  bind(synth, "--weeks", "synth_weeks", "Number of gameweeks");
  bind(synth, "--season", "synth_season", "Season label");

  auto* ingest = app.add_subcommand("ingest", "Parse, clean and merge gameweek CSVs");
  bind_list(ingest, "--gw", "gameweek_files", "Gameweek CSV as season=path (repeatable)");
  bind(ingest, "--strengths", "strengths", "Team strength CSV");
  bind(ingest, "--threshold", "fuzzy_threshold", "Fuzzy name match threshold");

  auto* split = app.add_subcommand("split", "Stratified player-disjoint splits and dataset export");
  bind(split, "--strat-on", "strat_on", "avg_score, stdev_score or none");
  bind(split, "--bins", "strat_bins", "Number of stratification bins");
  bind(split, "--window", "window", "Window length for the exported datasets");
  bind(split, "--tier", "tier", "Feature tier for the exported datasets");

  auto* train_cmd = app.add_subcommand("train", "Train one model family per position");
  bind(train_cmd, "--family", "family", "ridge, gbm or cnn");
  bind(train_cmd, "--window", "window", "Window length");
  bind(train_cmd, "--tier", "tier", "Feature tier");

  auto* grid = app.add_subcommand("gridsearch", "Grid search with final holdout evaluation");
  bind(grid, "--family", "family", "ridge, gbm or cnn");
  bind(grid, "--workers", "workers", "Concurrent trials");
  bind(grid, "--top-k", "top_k", "Trials in the top-k summary");
  auto final_flag = std::make_unique<Setting>();
  final_flag->key = "final_evaluation";
  final_flag->is_flag = true;
  final_flag->option =
      grid->add_flag("--no-final", final_flag->flag_value, "Skip the holdout evaluation");
  settings.push_back(std::move(final_flag));
  auto cv_flag = std::make_unique<Setting>();
  cv_flag->key = "grid_cv";
  cv_flag->is_flag = true;
  cv_flag->flag_sets = "true";
  cv_flag->option =
      grid->add_flag("--cv", cv_flag->flag_value, "Score trials by k-fold CV (see --folds)");
  settings.push_back(std::move(cv_flag));
  bind(grid, "--folds", "cv_folds", "Folds for --cv");

  auto* cv = app.add_subcommand("cv", "Stratified k-fold cross-validation");
  bind(cv, "--family", "family", "ridge, gbm or cnn");
  bind(cv, "--folds", "cv_folds", "Number of folds");

  auto* evaluate = app.add_subcommand("evaluate", "Score trained models on a split");
  bind(evaluate, "--families", "families", "Comma-separated model families");
  bind(evaluate, "--split", "eval_split", "train, validation or test");
  bind(evaluate, "--model", "model", "Explicit model file");

  auto* rank = app.add_subcommand("rank", "Rank players by predicted points");
  bind(rank, "--family", "family", "ridge, gbm or cnn");
  bind(rank, "--gameweek", "rank_gameweek", "Target gameweek");
  bind(rank, "--season", "rank_season", "Season label");
  bind(rank, "--model", "model", "Explicit model file");

  auto* explain = app.add_subcommand("explain", "Coefficients, importance, Shapley or filters");
  bind(explain, "--family", "family", "ridge, gbm or cnn");
  bind(explain, "--what", "explain", "auto, coefficients, importance, shapley or filter");
  bind(explain, "--example", "explain_example", "Example index in the evaluation split");
  bind(explain, "--background", "background_size", "Background sample size");
  bind(explain, "--model", "model", "Explicit model file");

  auto* filters = app.add_subcommand("filters", "Mean z-scored CNN filter per position");
  bind(filters, "--model", "model", "Explicit model file");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e, out, err);
    err << "error[argument]: " << e.what() << '\n';
    return exit_code(ErrorCategory::kArgument);
  }

  const auto start = std::chrono::steady_clock::now();
  set_warnings_enabled(!quiet);
  std::string command;
  try {
    RunConfig config;
    if (!config_path.empty()) {
      load_run_config(config, text::read_file(config_path));
    }
    for (const auto& s : settings) {
      if (!s->option || s->option->count() == 0) continue;
      if (s->is_flag) {
        set_run_option(config, s->key, s->flag_sets);
      } else if (!s->values.empty()) {
        set_run_option(config, s->key, text::join(s->values, ","));
      } else {
        set_run_option(config, s->key, s->value);
      }
    }
    for (const auto& kv : set_values) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) {
        throw ConfigError("--set expects key=value, got '" + kv + "'");
      }
      set_run_option(config, text::trim(kv.substr(0, eq)), kv.substr(eq + 1));
    }

    fs::create_directories(config.out_dir);
    Context ctx{config, out, fs::path(config.out_dir), {}};
    const CLI::App* sub = app.get_subcommands().front();
    command = sub->get_name();
    if (sub == synth) cmd_synth(ctx);
    else if (sub == ingest) cmd_ingest(ctx);
    else if (sub == split) cmd_split(ctx);
    else if (sub == train_cmd) cmd_train(ctx);
    else if (sub == grid) cmd_gridsearch(ctx);
    else if (sub == cv) cmd_cv(ctx);
    else if (sub == evaluate) cmd_evaluate(ctx);
    else if (sub == rank) cmd_rank(ctx);
    else if (sub == explain) cmd_explain(ctx);
    else if (sub == filters) cmd_filters(ctx);

    // Wall-clock data lives only in the sidecar log.
    std::ostringstream log;
    log << "command " << command << '\n';
    for (const auto& line : ctx.log) log << line << '\n';
    log << "wall_seconds "
        << text::format_double(std::chrono::duration<double>(
                                   std::chrono::steady_clock::now() - start)
                                   .count())
        << '\n';
    text::write_file((ctx.out_dir / (command + ".log")).string(), log.str());
  } catch (const Error& e) {
    err << "error[" << category_name(e.category()) << "]: " << e.what() << '\n';
    set_warnings_enabled(true);
    return exit_code(e.category());
  } catch (const fs::filesystem_error& e) {
    err << "error[io]: " << e.what() << '\n';
    set_warnings_enabled(true);
    return exit_code(ErrorCategory::kIo);
  } catch (const std::exception& e) {
    err << "error[internal]: " << e.what() << '\n';
    set_warnings_enabled(true);
    return 1;
  }
  set_warnings_enabled(true);
  return 0;
}

}  // namespace fplcast
