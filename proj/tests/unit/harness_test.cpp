#include <set>
#include <sstream>

#include <gtest/gtest.h>

#include "fplcast/error.hpp"
#include "fplcast/harness.hpp"
#include "fplcast/rng.hpp"

using namespace fplcast;

namespace {

struct Fixture {
  std::vector<PlayerSeries> series;
  TeamStrengths strengths;
};

const Fixture& fixture() {
  static const Fixture f = [] {
    const auto season = generate_synthetic_season(21, 120, 14);
    const auto rows = drop_benched(season.rows);
    const auto keys = resolve_player_keys(rows).keys;
    return Fixture{group_series(rows, keys), season.strengths};
  }();
  return f;
}

PositionData mids() {
  return position_data(fixture().series, Position::kMID, fixture().strengths);
}

SplitAssignment splits_for(const PositionData& d) {
  return assign_splits(d.series, {}, 4, StratifyOn::kAvgScore, 3);
}

ModelConfig small(ModelFamily family) {
  ModelConfig c;
  c.family = family;
  c.window = 3;
  c.filters = 4;
  c.hidden = 4;
  c.train.epochs = 3;
  c.gbm.min_data_in_leaf = 10;
  c.gbm.n_trees = 10;
  return c;
}

GridSpec small_grid(ModelFamily family) {
  GridSpec g;
  g.family = family;
  g.fixed = {{"filters", "4"}, {"hidden", "4"}, {"epochs", "2"}};
  if (family != ModelFamily::kCnn) g.fixed.clear();
  return g;
}

}  // namespace

TEST(ModelOptions, EveryKeyRoundTrips) {
  ModelConfig c;
  for (auto key : model_option_keys()) {
    EXPECT_TRUE(is_model_option(key));
    const std::string value = get_model_option(c, key);
    ModelConfig d;
    set_model_option(d, key, value);
    EXPECT_EQ(get_model_option(d, key), value) << key;
  }
  set_model_option(c, "tier", "pts_ict");
  EXPECT_EQ(c.tier, FeatureTier::kPtsIct);
  set_model_option(c, "gbm_eta", "0.25");
  EXPECT_EQ(c.gbm.eta, 0.25);
  set_model_option(c, "activation", "tanh");
  EXPECT_EQ(c.activation, Activation::kTanh);
}

TEST(ModelOptions, DefaultsMatchModuleDefaults) {
  const ModelConfig c;
  EXPECT_EQ(c.gbm.n_trees, GbmHyperparams{}.n_trees);
  EXPECT_EQ(c.gbm.min_data_in_leaf, 70);
  EXPECT_EQ(c.train.epochs, 250);
  EXPECT_EQ(c.train.batch_size, 32);
  EXPECT_EQ(c.train.patience, 20);
  EXPECT_EQ(c.filters, 64);
}

TEST(ModelOptions, UnknownKeyAndBadValueNamed) {
  ModelConfig c;
  try {
    set_model_option(c, "colour", "red");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("colour"), std::string::npos);
  }
  try {
    set_model_option(c, "window", "three");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("window"), std::string::npos);
  }
  EXPECT_THROW(set_model_option(c, "tier", "everything"), ConfigError);
}

TEST(GridSpec, DefaultSizesAndValidation) {
  EXPECT_EQ(default_grid(ModelFamily::kRidge).size(), 15U);
  EXPECT_EQ(default_grid(ModelFamily::kGbm).size(), 12U);
  EXPECT_EQ(default_grid(ModelFamily::kCnn).size(), 144U);
  GridSpec g;
  g.axes["window"] = {};
  EXPECT_THROW(g.validate(), ConfigError);
  g.axes["window"] = {"3"};
  g.fixed["window"] = "3";
  EXPECT_THROW(g.validate(), ConfigError);
  g.fixed.clear();
  g.axes["bogus"] = {"1"};
  EXPECT_THROW(g.validate(), ConfigError);
}

TEST(TrialSeed, DependsOnlyOnOwnSettings) {
  using Settings = std::vector<std::pair<std::string, std::string>>;
  const Settings a = {{"kernel", "1"}, {"window", "3"}};
  const Settings b = {{"kernel", "2"}, {"window", "3"}};
  const Settings c = {{"kernel", "1"}, {"window", "6"}};
  const auto s = [](const Settings& x) { return trial_seed(9, ModelFamily::kCnn, x); };
  EXPECT_EQ(s(a), s(a));
  EXPECT_NE(s(a), s(b));
  EXPECT_NE(s(a), s(c));
  EXPECT_NE(s(a), trial_seed(10, ModelFamily::kCnn, a));
}

TEST(RunGrid, SeedIsolationAcrossGrids) {
  const auto data = mids();
  const auto splits = splits_for(data);
  GridSpec g1 = small_grid(ModelFamily::kRidge);
  g1.axes["ridge_lambda"] = {"0.1", "1"};
  GridSpec g2 = g1;
  g2.axes["ridge_lambda"] = {"0.1", "5"};
  const auto r1 = run_grid(g1, data, splits, 4);
  const auto r2 = run_grid(g2, data, splits, 4);
  const auto find = [](const std::vector<TrialResult>& rs, const std::string& v) {
    for (const auto& r : rs) {
      if (r.settings[0].second == v) return r;
    }
    return TrialResult{};
  };
  EXPECT_EQ(find(r1, "0.1").seed, find(r2, "0.1").seed);
  EXPECT_EQ(find(r1, "0.1").val_mse, find(r2, "0.1").val_mse);
  EXPECT_NE(find(r1, "1").seed, find(r2, "5").seed);
}

TEST(RunGrid, SingleTrial) {
  const auto data = mids();
  GridSpec g = small_grid(ModelFamily::kRidge);
  g.axes["window"] = {"3"};
  const auto r = run_grid(g, data, splits_for(data), 1);
  ASSERT_EQ(r.size(), 1U);
  EXPECT_TRUE(r[0].ok) << r[0].reason;
}

TEST(RunGrid, KernelLongerThanWindowFailsOnlyThatTrial) {
  const auto data = mids();
  GridSpec g = small_grid(ModelFamily::kCnn);
  g.axes["kernel"] = {"1", "2"};
  g.axes["window"] = {"1"};
  const auto r = run_grid(g, data, splits_for(data), 1);
  ASSERT_EQ(r.size(), 2U);
  EXPECT_TRUE(r[0].ok) << r[0].reason;
  EXPECT_FALSE(r[1].ok);
  EXPECT_NE(r[1].reason.find("kernel"), std::string::npos);
  EXPECT_EQ(r[1].settings[0].second, "2");
}

TEST(RunGrid, SortedDeterministicAndWorkerIndependent) {
  const auto data = mids();
  const auto splits = splits_for(data);
  GridSpec g = small_grid(ModelFamily::kGbm);
  g.axes["window"] = {"2", "4"};
  g.axes["gbm_num_leaves"] = {"3", "7"};
  g.fixed["gbm_min_data_in_leaf"] = "10";
  const auto a = run_grid(g, data, splits, 5, 1);
  const auto b = run_grid(g, data, splits, 5, 3);
  ASSERT_EQ(a.size(), 4U);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].settings, b[i].settings);
    EXPECT_EQ(a[i].val_mse, b[i].val_mse);
    EXPECT_EQ(a[i].seed, b[i].seed);
    if (i > 0) EXPECT_LE(a[i - 1].val_mse, a[i].val_mse);
  }
  std::ostringstream la;
  std::ostringstream lb;
  write_trial_ledger(la, a);
  write_trial_ledger(lb, b);
  EXPECT_EQ(la.str(), lb.str());
}

TEST(RunGrid, StratificationAxisRederivesSplits) {
  const auto data = mids();
  GridSpec g = small_grid(ModelFamily::kRidge);
  g.axes["strat_on"] = {"avg_score", "stdev_score"};
  const auto r = run_grid(g, data, splits_for(data), 1);
  ASSERT_EQ(r.size(), 2U);
  EXPECT_TRUE(r[0].ok && r[1].ok);
  EXPECT_NE(r[0].val_mse, r[1].val_mse);
}

TEST(RunGrid, CvScoringMatchesDirectCvWithoutTestPlayers) {
  const auto data = mids();
  const auto splits = splits_for(data);
  GridSpec g = small_grid(ModelFamily::kRidge);
  g.axes["ridge_lambda"] = {"0.1", "10"};
  reset_holdout_access_count();
  const auto r = run_grid(g, data, splits, 8, 1, 3);
  EXPECT_EQ(holdout_access_count(), 0U);
  ASSERT_EQ(r.size(), 2U);
  PositionData pool{data.position, {}, data.strengths, data.sign};
  for (const auto& s : data.series) {
    if (splits.at(s.key()) != SplitLabel::kTest) pool.series.push_back(s);
  }
  ASSERT_LT(pool.series.size(), data.series.size());
  for (const auto& trial : r) {
    ASSERT_TRUE(trial.ok) << trial.reason;
    const auto direct =
        cross_validate(trial.config, pool, {3, trial.config.strat_on, splits.n_bins, trial.seed});
    EXPECT_EQ(trial.val_mse, direct.mean_val_mse);
    EXPECT_EQ(trial.train_mse, direct.mean_train_mse);
  }
  const auto split_scored = run_grid(g, data, splits, 8, 1, 0);
  EXPECT_NE(split_scored[0].val_mse, r[0].val_mse);
  EXPECT_THROW(run_grid(g, data, splits, 8, 1, 1), ArgumentError);
}

TEST(TopK, Examples) {
  std::vector<TrialResult> rs(4);
  for (int i = 0; i < 4; ++i) {
    rs[i].ok = true;
    rs[i].val_mse = 4 - i;
  }
  const auto two = top_k_summary(rs, 2);
  EXPECT_EQ(two.mean_val_mse, 1.5);
  EXPECT_EQ(two.max_val_mse, 2.0);
  const auto one = top_k_summary(rs, 1);
  EXPECT_EQ(one.mean_val_mse, 1.0);
  EXPECT_EQ(one.max_val_mse, 1.0);
  for (auto& r : rs) r.val_mse = 7;
  EXPECT_EQ(top_k_summary(rs, 4).mean_val_mse, 7.0);
  rs[0].ok = false;
  EXPECT_THROW(top_k_summary(rs, 4), ArgumentError);
}

TEST(SelectFinal, ArgminAndSingleHoldoutAccess) {
  const auto data = mids();
  const auto splits = splits_for(data);
  GridSpec g = small_grid(ModelFamily::kRidge);
  g.axes["ridge_lambda"] = {"0.01", "10", "1000"};
  reset_holdout_access_count();
  const auto results = run_grid(g, data, splits, 2);
  EXPECT_EQ(holdout_access_count(), 0U);
  const auto final = select_final(results, data, splits);
  EXPECT_EQ(holdout_access_count(), 1U);
  double best = INFINITY;
  for (const auto& r : results) best = std::min(best, r.val_mse);
  EXPECT_EQ(final.trial.val_mse, best);
  EXPECT_EQ(final.fit.val_mse, best);
  ASSERT_TRUE(final.trial.test_mse);
  EXPECT_EQ(static_cast<std::size_t>(final.test_predictions.size()), final.test_examples.size());
  std::vector<double> y;
  for (const auto& e : final.test_examples) y.push_back(e.y);
  EXPECT_DOUBLE_EQ(*final.trial.test_mse,
                   mse(y, std::vector<double>(final.test_predictions.data(),
                                              final.test_predictions.data() +
                                                  final.test_predictions.size())));
  std::vector<TrialResult> failed(1);
  EXPECT_THROW(select_final(failed, data, splits), ArgumentError);
}

TEST(SplitExamples, OnlyRequestedPlayers) {
  const auto data = mids();
  const auto splits = splits_for(data);
  reset_holdout_access_count();
  for (SplitLabel label : {SplitLabel::kTrain, SplitLabel::kValidation}) {
    for (const auto& e : split_examples(data, splits, label, 3, FeatureTier::kPtsOnly)) {
      EXPECT_EQ(splits.at(e.player), label);
      EXPECT_EQ(e.position(), Position::kMID);
    }
  }
  EXPECT_EQ(holdout_access_count(), 0U);
}

TEST(FitModel, EveryFamilyPredictsAndRoundTrips) {
  const auto data = mids();
  const auto splits = splits_for(data);
  const auto train_set = split_examples(data, splits, SplitLabel::kTrain, 3, FeatureTier::kPtsMinutes);
  const auto val_set = split_examples(data, splits, SplitLabel::kValidation, 3, FeatureTier::kPtsMinutes);
  for (auto family : {ModelFamily::kRidge, ModelFamily::kGbm, ModelFamily::kCnn}) {
    auto config = small(family);
    config.tier = FeatureTier::kPtsMinutes;
    const auto fit = fit_model(config, Position::kMID, data.sign, train_set, val_set, 7);
    EXPECT_EQ(fit.curve.has_value(), family == ModelFamily::kCnn);
    const Eigen::VectorXd p = predict(fit.model, val_set);
    std::vector<double> y;
    for (const auto& e : val_set) y.push_back(e.y);
    EXPECT_DOUBLE_EQ(mse(y, std::vector<double>(p.data(), p.data() + p.size())), fit.val_mse);
    std::stringstream buf;
    write_model_bundle(buf, fit.model);
    const auto back = read_model_bundle(buf);
    EXPECT_EQ(back.family, family);
    EXPECT_EQ(back.window, 3);
    EXPECT_EQ(predict(back, val_set), p);
    const auto again = fit_model(config, Position::kMID, data.sign, train_set, val_set, 7);
    EXPECT_EQ(again.val_mse, fit.val_mse);
  }
}

TEST(FitModel, BaselineDesignLayout) {
  const auto data = mids();
  const auto splits = splits_for(data);
  const auto train_set = split_examples(data, splits, SplitLabel::kTrain, 4, FeatureTier::kPtsIct);
  const auto fit = fit_model([] {
    auto c = small(ModelFamily::kGbm);
    c.window = 4;
    c.tier = FeatureTier::kPtsIct;
    return c;
  }(), Position::kMID, data.sign, train_set, train_set, 1);
  const Eigen::MatrixXd x = baseline_design(fit.model, train_set);
  EXPECT_EQ(x.cols(), 7);
  EXPECT_EQ(x(0, 6), train_set[0].d);
  EXPECT_DOUBLE_EQ(x(0, 0), train_set[0].X.col(0).mean());
  EXPECT_EQ(baseline_feature_names(FeatureTier::kPtsIct).back(), "d");
  EXPECT_THROW(predict(fit.model, split_examples(data, splits, SplitLabel::kTrain, 3,
                                                 FeatureTier::kPtsIct)),
               ShapeError);
}

TEST(Folds, PartitionBalancedDeterministic) {
  const auto& series = fixture().series;
  const CvConfig cv{5, StratifyOn::kAvgScore, 4, 11};
  const auto a = assign_folds(series, cv);
  EXPECT_EQ(a, assign_folds(series, cv));
  std::set<CanonicalPlayerKey> players;
  for (const auto& s : series) players.insert(s.key());
  EXPECT_EQ(a.size(), players.size());
  std::map<Position, std::array<int, 5>> sizes;
  for (const auto& [key, fold] : a) {
    ASSERT_GE(fold, 0);
    ASSERT_LT(fold, 5);
    ++sizes[key.position][fold];
  }
  int total[5] = {0, 0, 0, 0, 0};
  for (const auto& [pos, n] : sizes) {
    for (int f = 0; f < 5; ++f) total[f] += n[f];
  }
  EXPECT_LE(*std::max_element(total, total + 5) - *std::min_element(total, total + 5), 1);
  auto other = cv;
  other.seed = 12;
  EXPECT_NE(a, assign_folds(series, other));
}

TEST(CrossValidate, TwoFolds) {
  const auto data = mids();
  const auto r = cross_validate(small(ModelFamily::kRidge), data, {2, StratifyOn::kAvgScore, 4, 1});
  ASSERT_EQ(r.fold_val_mse.size(), 2U);
  EXPECT_DOUBLE_EQ(r.mean_val_mse, (r.fold_val_mse[0] + r.fold_val_mse[1]) / 2);
  EXPECT_DOUBLE_EQ(r.mean_train_mse, (r.fold_train_mse[0] + r.fold_train_mse[1]) / 2);
  const double ratio = r.fold_val_mse[0] / r.fold_val_mse[1];
  EXPECT_GT(ratio, 0.5);
  EXPECT_LT(ratio, 2.0);
}

TEST(CrossValidate, TooFewPlayers) {
  auto data = mids();
  data.series.erase(data.series.begin() + 1, data.series.end());
  EXPECT_THROW(cross_validate(small(ModelFamily::kRidge), data, {5, StratifyOn::kAvgScore, 4, 1}),
               ArgumentError);
  EXPECT_THROW(assign_folds(data.series, {1, StratifyOn::kAvgScore, 4, 1}), ArgumentError);
}
