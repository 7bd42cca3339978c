#include "fplcast/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <functional>
#include <limits>
#include <mutex>
#include <sstream>
#include <thread>

#include "fplcast/error.hpp"
#include "fplcast/rng.hpp"
#include "fplcast/text_io.hpp"

namespace fplcast {

std::string_view to_string(ModelFamily family) {
  switch (family) {
    case ModelFamily::kRidge: return "ridge";
    case ModelFamily::kGbm: return "gbm";
    case ModelFamily::kCnn: return "cnn";
  }
  return "?";
}

std::optional<ModelFamily> parse_model_family(std::string_view text) {
  if (text == "ridge") return ModelFamily::kRidge;
  if (text == "gbm") return ModelFamily::kGbm;
  if (text == "cnn") return ModelFamily::kCnn;
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Options

namespace {

constexpr std::string_view kModelKeys[] = {
    "window",        "tier",
    "strat_on",      "ridge_lambda",
    "gbm_n_trees",   "gbm_max_depth",
    "gbm_lambda_l2", "gbm_num_leaves",
    "gbm_min_data_in_leaf", "gbm_eta",
    "kernel",        "filters",
    "hidden",        "activation",
    "epochs",        "learning_rate",
    "batch_size",    "early_stop_tolerance",
    "patience",      "lambda1",
    "lambda2",       "adam_beta1",
    "adam_beta2",    "adam_epsilon",
};

[[noreturn]] void bad_value(std::string_view key, std::string_view value) {
  throw ConfigError("option '" + std::string(key) + "': invalid value '" +
                    std::string(value) + "'");
}

int to_int(std::string_view key, std::string_view value) {
  auto v = text::parse_int(text::trim(value));
  if (!v || *v < std::numeric_limits<int>::min() ||
      *v > std::numeric_limits<int>::max()) {
    bad_value(key, value);
  }
  return static_cast<int>(*v);
}

double to_real(std::string_view key, std::string_view value) {
  auto v = text::parse_double(text::trim(value));
  if (!v || !std::isfinite(*v)) bad_value(key, value);
  return *v;
}

std::string fmt(double v) { return text::format_double(v); }

}  // namespace

std::span<const std::string_view> model_option_keys() { return kModelKeys; }

bool is_model_option(std::string_view key) {
  return std::find(std::begin(kModelKeys), std::end(kModelKeys), key) !=
         std::end(kModelKeys);
}

void set_model_option(ModelConfig& c, std::string_view key,
                      std::string_view value) {
  const std::string v = text::trim(value);
  if (key == "window") {
    c.window = to_int(key, v);
  } else if (key == "tier") {
    auto tier = parse_feature_tier(v);
    if (!tier) bad_value(key, v);
    c.tier = *tier;
  } else if (key == "strat_on") {
    auto s = parse_stratify_on(v);
    if (!s) bad_value(key, v);
    c.strat_on = *s;
  } else if (key == "ridge_lambda") {
    c.ridge_lambda = to_real(key, v);
  } else if (key == "gbm_n_trees") {
    c.gbm.n_trees = to_int(key, v);
  } else if (key == "gbm_max_depth") {
    c.gbm.max_depth = to_int(key, v);
  } else if (key == "gbm_lambda_l2") {
    c.gbm.lambda_l2 = to_real(key, v);
  } else if (key == "gbm_num_leaves") {
    c.gbm.num_leaves = to_int(key, v);
  } else if (key == "gbm_min_data_in_leaf") {
    c.gbm.min_data_in_leaf = to_int(key, v);
  } else if (key == "gbm_eta") {
    c.gbm.eta = to_real(key, v);
  } else if (key == "kernel") {
    c.kernel = to_int(key, v);
  } else if (key == "filters") {
    c.filters = to_int(key, v);
  } else if (key == "hidden") {
    c.hidden = to_int(key, v);
  } else if (key == "activation") {
    auto a = parse_activation(v);
    if (!a) bad_value(key, v);
    c.activation = *a;
  } else if (key == "epochs") {
    c.train.epochs = to_int(key, v);
  } else if (key == "learning_rate") {
    c.train.learning_rate = to_real(key, v);
  } else if (key == "batch_size") {
    c.train.batch_size = to_int(key, v);
  } else if (key == "early_stop_tolerance") {
    c.train.early_stop_tolerance = to_real(key, v);
  } else if (key == "patience") {
    c.train.patience = to_int(key, v);
  } else if (key == "lambda1") {
    c.train.lambda1 = to_real(key, v);
  } else if (key == "lambda2") {
    c.train.lambda2 = to_real(key, v);
  } else if (key == "adam_beta1") {
    c.train.beta1 = to_real(key, v);
  } else if (key == "adam_beta2") {
    c.train.beta2 = to_real(key, v);
  } else if (key == "adam_epsilon") {
    c.train.epsilon = to_real(key, v);
  } else {
    throw ConfigError("unknown option '" + std::string(key) + "'");
  }
}

std::string get_model_option(const ModelConfig& c, std::string_view key) {
  if (key == "window") return std::to_string(c.window);
  if (key == "tier") return std::string(to_string(c.tier));
  if (key == "strat_on") return std::string(to_string(c.strat_on));
  if (key == "ridge_lambda") return fmt(c.ridge_lambda);
  if (key == "gbm_n_trees") return std::to_string(c.gbm.n_trees);
  if (key == "gbm_max_depth") return std::to_string(c.gbm.max_depth);
  if (key == "gbm_lambda_l2") return fmt(c.gbm.lambda_l2);
  if (key == "gbm_num_leaves") return std::to_string(c.gbm.num_leaves);
  if (key == "gbm_min_data_in_leaf") return std::to_string(c.gbm.min_data_in_leaf);
  if (key == "gbm_eta") return fmt(c.gbm.eta);
  if (key == "kernel") return std::to_string(c.kernel);
  if (key == "filters") return std::to_string(c.filters);
  if (key == "hidden") return std::to_string(c.hidden);
  if (key == "activation") return std::string(to_string(c.activation));
  if (key == "epochs") return std::to_string(c.train.epochs);
  if (key == "learning_rate") return fmt(c.train.learning_rate);
  if (key == "batch_size") return std::to_string(c.train.batch_size);
  if (key == "early_stop_tolerance") return fmt(c.train.early_stop_tolerance);
  if (key == "patience") return std::to_string(c.train.patience);
  if (key == "lambda1") return fmt(c.train.lambda1);
  if (key == "lambda2") return fmt(c.train.lambda2);
  if (key == "adam_beta1") return fmt(c.train.beta1);
  if (key == "adam_beta2") return fmt(c.train.beta2);
  if (key == "adam_epsilon") return fmt(c.train.epsilon);
  throw ConfigError("unknown option '" + std::string(key) + "'");
}

// ---------------------------------------------------------------------------
// Data access

namespace {
std::atomic<std::size_t> g_holdout_access{0};
}  // namespace

std::size_t holdout_access_count() { return g_holdout_access.load(); }
void reset_holdout_access_count() { g_holdout_access.store(0); }

PositionData position_data(std::span<const PlayerSeries> all, Position position,
                           const TeamStrengths& strengths,
                           DifficultySign sign) {
  PositionData data;
  data.position = position;
  data.strengths = strengths;
  data.sign = sign;
  for (const auto& s : all) {
    if (s.key().position == position) data.series.push_back(s);
  }
  return data;
}

std::vector<WindowedExample> split_examples(const PositionData& data,
                                            const SplitAssignment& splits,
                                            SplitLabel label, int window,
                                            FeatureTier tier) {
  if (label == SplitLabel::kTest) ++g_holdout_access;
  std::vector<PlayerSeries> selected;
  for (const auto& s : data.series) {
    if (splits.at(s.key()) == label) selected.push_back(s);
  }
  return build_windows(selected, window, tier, data.strengths, data.sign);
}

// ---------------------------------------------------------------------------
// Trained models

std::string model_label(const TrainedModel& model) {
  return std::string(to_string(model.family));
}

std::vector<std::string> baseline_feature_names(FeatureTier tier) {
  auto names = tier_columns(tier);
  names.emplace_back("d");
  return names;
}

Eigen::MatrixXd baseline_design(const TrainedModel& model,
                                std::span<const WindowedExample> examples) {
  const auto width = static_cast<Eigen::Index>(tier_columns(model.tier).size());
  Eigen::MatrixXd design(static_cast<Eigen::Index>(examples.size()), width + 1);
  const bool scaled = !model.scaler.mean.empty();
  for (std::size_t i = 0; i < examples.size(); ++i) {
    if (examples[i].X.cols() != width || examples[i].X.rows() != model.window) {
      throw ShapeError("example window does not match the model's window/tier");
    }
    SlidingAverageExample avg = sliding_average(examples[i]);
    if (scaled) avg = apply_scaler(model.scaler, avg);
    const auto row = static_cast<Eigen::Index>(i);
    design.row(row).head(width) = avg.x.transpose();
    design(row, width) = examples[i].d;
  }
  return design;
}

Eigen::VectorXd predict(const TrainedModel& model,
                        std::span<const WindowedExample> examples) {
  if (const auto* ridge = std::get_if<RidgeModel>(&model.model)) {
    return predict_ridge(*ridge, baseline_design(model, examples));
  }
  if (const auto* gbm = std::get_if<GbmModel>(&model.model)) {
    return predict_gbm(*gbm, baseline_design(model, examples));
  }
  const auto& cnn = std::get<CnnModel>(model.model);
  const auto scaled = apply_scaler(model.scaler, examples);
  return predict_cnn(cnn, scaled);
}

namespace {

double examples_mse(const TrainedModel& model,
                    std::span<const WindowedExample> examples) {
  const Eigen::VectorXd pred = predict(model, examples);
  std::vector<double> y;
  y.reserve(examples.size());
  for (const auto& e : examples) y.push_back(e.y);
  return mse(y, std::span<const double>(pred.data(), pred.size()));
}

Eigen::VectorXd targets(std::span<const WindowedExample> examples) {
  Eigen::VectorXd y(static_cast<Eigen::Index>(examples.size()));
  for (std::size_t i = 0; i < examples.size(); ++i) {
    y[static_cast<Eigen::Index>(i)] = examples[i].y;
  }
  return y;
}

}  // namespace

FitOutcome fit_model(const ModelConfig& config, Position position,
                     DifficultySign sign,
                     std::span<const WindowedExample> train_set,
                     std::span<const WindowedExample> val_set,
                     std::uint64_t seed) {
  if (config.window < 1) throw ShapeError("window must be >= 1");
  if (train_set.empty()) throw ArgumentError("fit_model: empty training set");
  if (val_set.empty()) throw ArgumentError("fit_model: empty validation set");

  FitOutcome out;
  TrainedModel& m = out.model;
  m.family = config.family;
  m.position = position;
  m.window = config.window;
  m.tier = config.tier;
  m.sign = sign;

  switch (config.family) {
    case ModelFamily::kRidge: {
      m.scaler = fit_scaler(sliding_average(train_set));
      m.model = fit_ridge(baseline_design(m, train_set), targets(train_set),
                          config.ridge_lambda, baseline_feature_names(m.tier));
      break;
    }
    case ModelFamily::kGbm: {
      m.model = fit_gbm(baseline_design(m, train_set), targets(train_set),
                        config.gbm, baseline_feature_names(m.tier));
      break;
    }
    case ModelFamily::kCnn: {
      const auto features = static_cast<int>(tier_columns(m.tier).size());
      CnnModel init = init_model(config.window, config.kernel, features,
                                 config.filters, config.hidden,
                                 config.activation, seed);
      m.scaler = fit_scaler(train_set);
      const auto train_scaled = apply_scaler(m.scaler, train_set);
      const auto val_scaled = apply_scaler(m.scaler, val_set);
      TrainConfig tc = config.train;
      tc.seed = seed;
      TrainResult result = train(init, train_scaled, val_scaled, tc);
      m.model = std::move(result.model);
      out.curve = std::move(result.curve);
      break;
    }
  }
  out.train_mse = examples_mse(m, train_set);
  out.val_mse = examples_mse(m, val_set);
  return out;
}

namespace {

void write_vector(std::ostream& out, std::string_view name,
                  const std::vector<double>& values) {
  out << name << ' ' << values.size();
  for (double v : values) out << ' ' << text::format_double(v);
  out << '\n';
}

std::vector<double> read_vector(std::istream& in, std::string_view name) {
  std::string key;
  std::size_t n = 0;
  in >> key >> n;
  if (key != name || !in) {
    throw SchemaError("model bundle: expected '" + std::string(name) + "'");
  }
  std::vector<double> values(n);
  for (auto& v : values) {
    std::string token;
    in >> token;
    auto parsed = text::parse_double(token);
    if (!parsed) throw SchemaError("model bundle: bad number in " + std::string(name));
    v = *parsed;
  }
  return values;
}

std::string read_field(std::istream& in, std::string_view name) {
  std::string key;
  std::string value;
  in >> key >> value;
  if (key != name || !in) {
    throw SchemaError("model bundle: expected '" + std::string(name) + "'");
  }
  return value;
}

}  // namespace

void write_model_bundle(std::ostream& out, const TrainedModel& m) {
  out << "fplcast-model v1\n";
  out << "family " << to_string(m.family) << '\n';
  out << "position " << to_string(m.position) << '\n';
  out << "window " << m.window << '\n';
  out << "tier " << to_string(m.tier) << '\n';
  out << "sign " << to_string(m.sign) << '\n';
  out << "scaler_fitted_on " << (m.scaler.fitted_on.empty() ? "-" : m.scaler.fitted_on)
      << '\n';
  write_vector(out, "scaler_mean", m.scaler.mean);
  write_vector(out, "scaler_std", m.scaler.stddev);
  if (const auto* ridge = std::get_if<RidgeModel>(&m.model)) {
    write_ridge(out, *ridge);
  } else if (const auto* gbm = std::get_if<GbmModel>(&m.model)) {
    write_gbm(out, *gbm);
  } else {
    write_cnn(out, std::get<CnnModel>(m.model));
  }
}

TrainedModel read_model_bundle(std::istream& in) {
  std::string magic;
  std::string version;
  in >> magic >> version;
  if (magic != "fplcast-model" || version != "v1") {
    throw SchemaError("not an fplcast model bundle");
  }
  TrainedModel m;
  const auto family = parse_model_family(read_field(in, "family"));
  const auto position = parse_position(read_field(in, "position"));
  const auto window = text::parse_int(read_field(in, "window"));
  const auto tier = parse_feature_tier(read_field(in, "tier"));
  const auto sign = parse_difficulty_sign(read_field(in, "sign"));
  if (!family || !position || !window || !tier || !sign) {
    throw SchemaError("model bundle: malformed header");
  }
  m.family = *family;
  m.position = *position;
  m.window = static_cast<int>(*window);
  m.tier = *tier;
  m.sign = *sign;
  m.scaler.fitted_on = read_field(in, "scaler_fitted_on");
  if (m.scaler.fitted_on == "-") m.scaler.fitted_on.clear();
  m.scaler.mean = read_vector(in, "scaler_mean");
  m.scaler.stddev = read_vector(in, "scaler_std");
  in >> std::ws;
  switch (m.family) {
    case ModelFamily::kRidge: m.model = read_ridge(in); break;
    case ModelFamily::kGbm: m.model = read_gbm(in); break;
    case ModelFamily::kCnn: m.model = read_cnn(in); break;
  }
  return m;
}

// ---------------------------------------------------------------------------
// Grid search

void GridSpec::validate() const {
  for (const auto& [key, values] : axes) {
    if (!is_model_option(key)) {
      throw ConfigError("grid: unknown axis '" + key + "'");
    }
    if (values.empty()) throw ConfigError("grid: axis '" + key + "' is empty");
    if (fixed.count(key)) {
      throw ConfigError("grid: '" + key + "' is both an axis and fixed");
    }
  }
  for (const auto& [key, value] : fixed) {
    if (!is_model_option(key)) {
      throw ConfigError("grid: unknown fixed option '" + key + "'");
    }
  }
}

std::size_t GridSpec::size() const {
  std::size_t n = 1;
  for (const auto& [key, values] : axes) n *= values.size();
  return n;
}

GridSpec default_grid(ModelFamily family) {
  GridSpec grid;
  grid.family = family;
  switch (family) {
    case ModelFamily::kRidge:
      grid.axes["window"] = {"3", "6", "9"};
      grid.axes["ridge_lambda"] = {"0.01", "0.1", "1", "10", "100"};
      break;
    case ModelFamily::kGbm:
      grid.axes["window"] = {"3", "6", "9"};
      grid.axes["gbm_num_leaves"] = {"7", "15"};
      grid.axes["gbm_min_data_in_leaf"] = {"20", "70"};
      break;
    case ModelFamily::kCnn:
      grid.axes["window"] = {"3", "6", "9"};
      grid.axes["kernel"] = {"1", "2", "3"};
      grid.axes["tier"] = {"ptsonly", "pts_minutes", "pts_ict", "full"};
      grid.axes["filters"] = {"32", "64"};
      grid.axes["hidden"] = {"32", "64"};
      break;
  }
  return grid;
}

std::uint64_t trial_seed(
    std::uint64_t seed, ModelFamily family,
    std::span<const std::pair<std::string, std::string>> settings) {
  std::string key(to_string(family));
  for (const auto& [name, value] : settings) key += ";" + name + "=" + value;
  return mix_seed(seed, key);
}

namespace {

using Clock = std::chrono::steady_clock;

SplitAssignment splits_for(const ModelConfig& config, const PositionData& data,
                           const SplitAssignment& splits, bool strat_is_axis) {
  if (!strat_is_axis || config.strat_on == splits.strat_on) return splits;
  return assign_splits(data.series, splits.fractions, splits.n_bins,
                       config.strat_on, splits.seed);
}

void run_trial(TrialResult& trial, const PositionData& data,
               const SplitAssignment& splits, bool strat_is_axis, int cv_folds) {
  const auto start = Clock::now();
  try {
    const SplitAssignment active =
        splits_for(trial.config, data, splits, strat_is_axis);
    if (trial.config.family == ModelFamily::kCnn) {
      CnnShape{trial.config.window, trial.config.kernel, 1,
               trial.config.filters, trial.config.hidden}
          .validate();
    }
    if (cv_folds > 0) {
      // Folds over the train and validation players; test players stay out.
      PositionData pool{data.position, {}, data.strengths, data.sign};
      for (const auto& s : data.series) {
        if (active.at(s.key()) != SplitLabel::kTest) pool.series.push_back(s);
      }
      const CvResult cv = cross_validate(
          trial.config, pool,
          {cv_folds, trial.config.strat_on, active.n_bins, trial.seed});
      trial.train_mse = cv.mean_train_mse;
      trial.val_mse = cv.mean_val_mse;
    } else {
      const auto train_set = split_examples(data, active, SplitLabel::kTrain,
                                            trial.config.window, trial.config.tier);
      const auto val_set = split_examples(data, active, SplitLabel::kValidation,
                                          trial.config.window, trial.config.tier);
      const FitOutcome fit = fit_model(trial.config, data.position, data.sign,
                                       train_set, val_set, trial.seed);
      trial.train_mse = fit.train_mse;
      trial.val_mse = fit.val_mse;
    }
    trial.ok = true;
  } catch (const std::exception& e) {
    trial.ok = false;
    trial.reason = e.what();
  }
  trial.wall_seconds =
      std::chrono::duration<double>(Clock::now() - start).count();
}

}  // namespace

std::vector<TrialResult> run_grid(const GridSpec& grid, const PositionData& data,
                                  const SplitAssignment& splits,
                                  std::uint64_t seed, int workers, int cv_folds) {
  grid.validate();
  if (cv_folds == 1 || cv_folds < 0) {
    throw ArgumentError("run_grid: cv_folds must be 0 or >= 2, got " +
                        std::to_string(cv_folds));
  }
  ModelConfig base;
  base.family = grid.family;
  base.strat_on = splits.strat_on;
  for (const auto& [key, value] : grid.fixed) set_model_option(base, key, value);

  std::vector<std::string> names;
  std::vector<const std::vector<std::string>*> values;
  for (const auto& [key, vals] : grid.axes) {
    names.push_back(key);
    values.push_back(&vals);
  }

  std::vector<TrialResult> trials;
  trials.reserve(grid.size());
  std::vector<std::size_t> odometer(names.size(), 0);
  for (std::size_t t = 0; t < grid.size(); ++t) {
    TrialResult trial;
    trial.position = data.position;
    trial.config = base;
    for (std::size_t a = 0; a < names.size(); ++a) {
      trial.settings.emplace_back(names[a], (*values[a])[odometer[a]]);
    }
    trial.seed = trial_seed(seed, grid.family, trial.settings);
    try {
      for (const auto& [key, value] : trial.settings) {
        set_model_option(trial.config, key, value);
      }
    } catch (const std::exception& e) {
      trial.reason = e.what();
    }
    trials.push_back(std::move(trial));
    // Last axis varies fastest.
    for (std::size_t a = names.size(); a-- > 0;) {
      if (++odometer[a] < values[a]->size()) break;
      odometer[a] = 0;
    }
  }

  const bool strat_is_axis = grid.axes.count("strat_on") > 0;
  std::atomic<std::size_t> next{0};
  const auto worker = [&] {
    for (std::size_t i = next++; i < trials.size(); i = next++) {
      if (!trials[i].reason.empty()) continue;  // option parse failure
      run_trial(trials[i], data, splits, strat_is_axis, cv_folds);
    }
  };
  const int n_workers = std::clamp(workers, 1, static_cast<int>(trials.size()));
  if (n_workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < n_workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  std::stable_sort(trials.begin(), trials.end(),
                   [](const TrialResult& a, const TrialResult& b) {
                     if (a.ok != b.ok) return a.ok;
                     return a.ok && a.val_mse < b.val_mse;
                   });
  return trials;
}

TopKSummary top_k_summary(std::span<const TrialResult> results, std::size_t k) {
  std::vector<double> vals;
  for (const auto& r : results) {
    if (r.ok) vals.push_back(r.val_mse);
  }
  if (k < 1 || k > vals.size()) {
    throw ArgumentError("top_k_summary: k = " + std::to_string(k) +
                        " but only " + std::to_string(vals.size()) +
                        " successful trials");
  }
  std::sort(vals.begin(), vals.end());
  TopKSummary s;
  for (std::size_t i = 0; i < k; ++i) s.mean_val_mse += vals[i];
  s.mean_val_mse /= static_cast<double>(k);
  s.max_val_mse = vals[k - 1];
  return s;
}

FinalSelection select_final(std::span<const TrialResult> results,
                            const PositionData& data,
                            const SplitAssignment& splits) {
  const TrialResult* best = nullptr;
  for (const auto& r : results) {
    if (r.ok && (!best || r.val_mse < best->val_mse)) best = &r;
  }
  if (!best) throw ArgumentError("select_final: no successful trials");

  FinalSelection out;
  out.trial = *best;
  bool strat_is_axis = false;
  for (const auto& [key, value] : best->settings) {
    if (key == "strat_on") strat_is_axis = true;
  }
  const SplitAssignment active =
      splits_for(best->config, data, splits, strat_is_axis);
  const auto train_set = split_examples(data, active, SplitLabel::kTrain,
                                        best->config.window, best->config.tier);
  const auto val_set = split_examples(data, active, SplitLabel::kValidation,
                                      best->config.window, best->config.tier);
  out.fit = fit_model(best->config, data.position, data.sign, train_set,
                      val_set, best->seed);
  out.test_examples = split_examples(data, active, SplitLabel::kTest,
                                     best->config.window, best->config.tier);
  if (out.test_examples.empty()) {
    throw ArgumentError("select_final: test split has no examples");
  }
  out.test_predictions = predict(out.fit.model, out.test_examples);
  std::vector<double> y;
  for (const auto& e : out.test_examples) y.push_back(e.y);
  out.trial.test_mse = mse(y, std::span<const double>(out.test_predictions.data(),
                                                      out.test_predictions.size()));
  return out;
}

void write_trial_ledger(std::ostream& out, std::span<const TrialResult> results) {
  std::vector<std::string> axes;
  for (const auto& r : results) {
    for (const auto& [key, value] : r.settings) {
      if (std::find(axes.begin(), axes.end(), key) == axes.end()) {
        axes.push_back(key);
      }
    }
  }
  text::CsvWriter header(out);
  header.text("family").text("position");
  for (const auto& a : axes) header.text(a);
  header.text("seed").text("status").text("train_mse").text("val_mse")
      .text("test_mse").text("reason").end_row();
  for (const auto& r : results) {
    text::CsvWriter row(out);
    row.text(to_string(r.config.family)).text(to_string(r.position));
    for (const auto& a : axes) {
      const auto it = std::find_if(r.settings.begin(), r.settings.end(),
                                   [&](const auto& s) { return s.first == a; });
      if (it == r.settings.end()) {
        row.null();
      } else {
        row.text(it->second);
      }
    }
    row.text(std::to_string(r.seed)).text(r.ok ? "ok" : "failed");
    if (r.ok) {
      row.number(r.train_mse).number(r.val_mse);
    } else {
      row.null().null();
    }
    if (r.test_mse) {
      row.number(*r.test_mse);
    } else {
      row.null();
    }
    row.text(r.reason).end_row();
  }
}

// ---------------------------------------------------------------------------
// Cross-validation

std::map<CanonicalPlayerKey, int> assign_folds(
    std::span<const PlayerSeries> series, const CvConfig& cv) {
  if (cv.k < 2) throw ArgumentError("cross-validation needs k >= 2");
  const auto bins = stratification_bins(series, cv.n_bins, cv.strat_on);
  if (bins.size() < static_cast<std::size_t>(cv.k)) {
    throw ArgumentError("cross-validation: " + std::to_string(bins.size()) +
                        " players is fewer than k = " + std::to_string(cv.k));
  }
  std::map<std::pair<Position, int>, std::vector<CanonicalPlayerKey>> groups;
  for (const auto& [key, bin] : bins) groups[{key.position, bin}].push_back(key);

  const std::uint64_t fold_seed = mix_seed(cv.seed, "cv-folds");
  std::map<CanonicalPlayerKey, int> folds;
  std::size_t offset = 0;
  for (auto& [group, members] : groups) {
    std::vector<std::pair<std::uint64_t, CanonicalPlayerKey>> keyed;
    for (const auto& key : members) {
      keyed.emplace_back(mix_seed(fold_seed, key.canonical_name), key);
    }
    std::sort(keyed.begin(), keyed.end());
    // Dealing continues across bins so fold sizes differ by at most one.
    for (const auto& [hash, key] : keyed) {
      folds[key] = static_cast<int>(offset++ % static_cast<std::size_t>(cv.k));
    }
  }
  return folds;
}

CvResult cross_validate(const ModelConfig& config, const PositionData& data,
                        const CvConfig& cv) {
  const auto folds = assign_folds(data.series, cv);
  CvResult result;
  for (int f = 0; f < cv.k; ++f) {
    std::vector<PlayerSeries> train_series;
    std::vector<PlayerSeries> val_series;
    for (const auto& s : data.series) {
      (folds.at(s.key()) == f ? val_series : train_series).push_back(s);
    }
    const auto train_set = build_windows(train_series, config.window,
                                         config.tier, data.strengths, data.sign);
    const auto val_set = build_windows(val_series, config.window, config.tier,
                                       data.strengths, data.sign);
    const FitOutcome fit =
        fit_model(config, data.position, data.sign, train_set, val_set,
                  mix_seed(cv.seed, static_cast<std::uint64_t>(f)));
    result.fold_train_mse.push_back(fit.train_mse);
    result.fold_val_mse.push_back(fit.val_mse);
  }
  for (int f = 0; f < cv.k; ++f) {
    result.mean_train_mse += result.fold_train_mse[static_cast<std::size_t>(f)];
    result.mean_val_mse += result.fold_val_mse[static_cast<std::size_t>(f)];
  }
  result.mean_train_mse /= cv.k;
  result.mean_val_mse /= cv.k;
  return result;
}

}  // namespace fplcast
