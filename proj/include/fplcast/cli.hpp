#pragma once

#include <cstdint>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "fplcast/dataset.hpp"
#include "fplcast/error.hpp"
#include "fplcast/harness.hpp"
#include "fplcast/ingest.hpp"

namespace fplcast {

// Everything a command can be told. Each field has one key in the JSON
// config file and in `--set key=value`; run_option_keys() lists them.
struct RunConfig {
  // Paths. Empty input paths default to the matching file inside out_dir.
  std::vector<std::string> gameweek_files;  // "season=path" or "path"
  std::string strengths;
  std::string clean_rows;
  std::string splits;
  std::string model;
  std::string out_dir = ".";

  std::string position = "all";
  std::vector<ModelFamily> families;  // evaluate; defaults to {model.family}
  std::uint64_t seed = 0;

  double fuzzy_threshold = kDefaultFuzzyThreshold;
  DifficultySign difficulty_sign = DifficultySign::kOpponentMinusOwn;
  SplitFractions fractions;
  int strat_bins = kDefaultStratBins;

  int cv_folds = 5;
  int workers = 1;
  int top_k = 10;
  bool final_evaluation = true;
  bool grid_cv = false;  // score grid trials by cv_folds-fold CV
  std::map<std::string, std::vector<std::string>> grid;  // empty: default grid

  SplitLabel eval_split = SplitLabel::kValidation;
  bool spearman_per_gameweek = false;
  int extreme_k = 2;

  int rank_gameweek = 1;
  std::string rank_season;  // empty: latest season with that gameweek

  std::string explain = "auto";  // auto|coefficients|importance|shapley|filter
  int explain_example = 0;
  int background_size = 100;

  int synth_players = 200;
  int synth_weeks = 38;
  std::string synth_season = "synthetic";

  ModelConfig model_config;
};

std::vector<std::string> run_option_keys();

// Scalar options as text; list options take comma-separated values.
// Throws ConfigError naming the key.
void set_run_option(RunConfig& config, const std::string& key,
                    const std::string& value);

// JSON object whose keys are run_option_keys() plus "grid" (object of
// axis -> array). Unknown keys are rejected.
void load_run_config(RunConfig& config, const std::string& json_text);

// All validation problems at once; empty when the configuration is usable.
std::vector<std::string> validate_run_config(const RunConfig& config);

// Process exit status for an error category (0 is success).
int exit_code(ErrorCategory category);

// Entry point shared by the executable and the Python module. args excludes
// the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out,
            std::ostream& err);

}  // namespace fplcast
