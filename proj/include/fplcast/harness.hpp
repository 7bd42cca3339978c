#pragma once

#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "fplcast/cnn.hpp"
#include "fplcast/dataset.hpp"
#include "fplcast/evaluation.hpp"
#include "fplcast/gbm.hpp"
#include "fplcast/ridge.hpp"

namespace fplcast {

enum class ModelFamily { kRidge, kGbm, kCnn };
std::string_view to_string(ModelFamily family);
std::optional<ModelFamily> parse_model_family(std::string_view text);

// Every tunable of every family. Keys accepted by set_model_option() are the
// names listed in model_option_keys().
struct ModelConfig {
  ModelFamily family = ModelFamily::kCnn;
  int window = 6;
  FeatureTier tier = FeatureTier::kPtsOnly;
  StratifyOn strat_on = StratifyOn::kAvgScore;
  double ridge_lambda = 1.0;
  GbmHyperparams gbm;
  int kernel = 1;
  int filters = 64;
  int hidden = 64;
  Activation activation = Activation::kRelu;
  TrainConfig train;  // seed is overwritten per trial
};

std::span<const std::string_view> model_option_keys();
bool is_model_option(std::string_view key);
// Throws ConfigError naming the key for unknown keys or malformed values.
void set_model_option(ModelConfig& config, std::string_view key,
                      std::string_view value);
std::string get_model_option(const ModelConfig& config, std::string_view key);

// One position's cleaned series plus what is needed to build examples.
struct PositionData {
  Position position = Position::kMID;
  std::vector<PlayerSeries> series;
  TeamStrengths strengths;
  DifficultySign sign = DifficultySign::kOpponentMinusOwn;
};

// Series of one position, in group_series order.
PositionData position_data(std::span<const PlayerSeries> all, Position position,
                           const TeamStrengths& strengths,
                           DifficultySign sign = DifficultySign::kOpponentMinusOwn);

// Unscaled examples of the requested split only.
std::vector<WindowedExample> split_examples(const PositionData& data,
                                            const SplitAssignment& splits,
                                            SplitLabel label, int window,
                                            FeatureTier tier);

// Number of times test-split examples have been materialized in this
// process. Only select_final and explicit holdout evaluation touch them.
std::size_t holdout_access_count();
void reset_holdout_access_count();

// A fitted model with everything needed to predict from unscaled windows.
struct TrainedModel {
  ModelFamily family = ModelFamily::kCnn;
  Position position = Position::kMID;
  int window = 6;
  FeatureTier tier = FeatureTier::kPtsOnly;
  DifficultySign sign = DifficultySign::kOpponentMinusOwn;
  ScalerParams scaler;  // empty for the tree family
  std::variant<RidgeModel, GbmModel, CnnModel> model;
};

std::string model_label(const TrainedModel& model);

// Design rows for the baselines: sliding average (scaled when the model has
// a scaler) followed by d.
Eigen::MatrixXd baseline_design(const TrainedModel& model,
                                std::span<const WindowedExample> examples);
std::vector<std::string> baseline_feature_names(FeatureTier tier);

Eigen::VectorXd predict(const TrainedModel& model,
                        std::span<const WindowedExample> examples);

struct FitOutcome {
  TrainedModel model;
  double train_mse = 0.0;
  double val_mse = 0.0;
  std::optional<LearningCurve> curve;
};

// Fits one configuration. Scalers are fitted on the training examples only.
FitOutcome fit_model(const ModelConfig& config, Position position,
                     DifficultySign sign,
                     std::span<const WindowedExample> train_set,
                     std::span<const WindowedExample> val_set,
                     std::uint64_t seed);

void write_model_bundle(std::ostream& out, const TrainedModel& model);
TrainedModel read_model_bundle(std::istream& in);

// ---------------------------------------------------------------------------
// Grid search

struct GridSpec {
  ModelFamily family = ModelFamily::kCnn;
  std::map<std::string, std::vector<std::string>> axes;
  std::map<std::string, std::string> fixed;

  void validate() const;  // throws ConfigError
  std::size_t size() const;
};

GridSpec default_grid(ModelFamily family);

struct TrialResult {
  std::vector<std::pair<std::string, std::string>> settings;  // axis values
  ModelConfig config;
  Position position = Position::kMID;
  bool ok = false;
  std::string reason;  // failure message when !ok
  double train_mse = 0.0;
  double val_mse = 0.0;
  std::optional<double> test_mse;
  std::uint64_t seed = 0;
  double wall_seconds = 0.0;
};

// Seed of a trial: depends only on the base seed and the trial's own axis
// values.
std::uint64_t trial_seed(std::uint64_t seed, ModelFamily family,
                         std::span<const std::pair<std::string, std::string>>
                             settings);

// Expands the cartesian product in axis-name order, trains each trial on
// the fixed splits and returns the trials sorted by validation MSE (failed
// trials last, in grid order). With cv_folds >= 2 a trial is scored by
// stratified k-fold CV over the train and validation players instead.
std::vector<TrialResult> run_grid(const GridSpec& grid, const PositionData& data,
                                  const SplitAssignment& splits,
                                  std::uint64_t seed, int workers = 1,
                                  int cv_folds = 0);

struct TopKSummary {
  double mean_val_mse = 0.0;
  double max_val_mse = 0.0;
};

TopKSummary top_k_summary(std::span<const TrialResult> results, std::size_t k);

struct FinalSelection {
  TrialResult trial;  // test_mse populated
  FitOutcome fit;
  std::vector<WindowedExample> test_examples;
  Eigen::VectorXd test_predictions;
};

// Retrains the lowest-validation trial and evaluates it once on the test
// split.
FinalSelection select_final(std::span<const TrialResult> results,
                            const PositionData& data,
                            const SplitAssignment& splits);

void write_trial_ledger(std::ostream& out, std::span<const TrialResult> results);

// ---------------------------------------------------------------------------
// Cross-validation

struct CvConfig {
  int k = 5;
  StratifyOn strat_on = StratifyOn::kAvgScore;
  int n_bins = kDefaultStratBins;
  std::uint64_t seed = 0;
};

// Player-disjoint folds stratified on skill bins; fold[i] in [0, k).
std::map<CanonicalPlayerKey, int> assign_folds(
    std::span<const PlayerSeries> series, const CvConfig& cv);

struct CvResult {
  std::vector<double> fold_train_mse;
  std::vector<double> fold_val_mse;
  double mean_train_mse = 0.0;
  double mean_val_mse = 0.0;
};

CvResult cross_validate(const ModelConfig& config, const PositionData& data,
                        const CvConfig& cv);

}  // namespace fplcast
