#include <cmath>
#include <random>
#include <set>
#include <sstream>

#include <gtest/gtest.h>

#include "fplcast/error.hpp"
#include "fplcast/evaluation.hpp"
#include "oracles.hpp"

using namespace fplcast;

namespace {

std::vector<double> tied_vector(std::mt19937_64& gen, int n, int top) {
  std::uniform_int_distribution<int> v(0, top);
  std::vector<double> out(n);
  for (auto& x : out) x = v(gen);
  return out;
}

WindowedExample example(std::vector<double> points, int d, int y) {
  WindowedExample e;
  e.X = WindowMatrix(static_cast<Eigen::Index>(points.size()), 1);
  for (std::size_t i = 0; i < points.size(); ++i) e.X(i, 0) = points[i];
  e.d = d;
  e.y = y;
  e.player = {"p" + std::to_string(y), Position::kDEF};
  e.season = "s";
  e.target_gameweek = y + 1;
  return e;
}

}  // namespace

TEST(Mse, Examples) {
  const std::vector<double> a = {1, 2, 3};
  EXPECT_EQ(mse(a, a), 0.0);
  EXPECT_EQ(mse(std::vector<double>{0, 0}, std::vector<double>{1, 3}), 5.0);
  EXPECT_THROW(mse(a, std::vector<double>{1}), ShapeError);
  EXPECT_THROW(mse(std::vector<double>{}, std::vector<double>{}), ArgumentError);
}

TEST(Mse, NonNegativeAndPermutationInvariant) {
  std::mt19937_64 gen(1);
  for (int t = 0; t < 50; ++t) {
    auto y = tied_vector(gen, 20, 10);
    auto h = tied_vector(gen, 20, 10);
    const double m = mse(y, h);
    EXPECT_GE(m, 0.0);
    EXPECT_EQ(m == 0.0, y == h);
    std::vector<std::size_t> p(20);
    std::iota(p.begin(), p.end(), 0);
    std::shuffle(p.begin(), p.end(), gen);
    std::vector<double> yp(20);
    std::vector<double> hp(20);
    for (int i = 0; i < 20; ++i) {
      yp[i] = y[p[i]];
      hp[i] = h[p[i]];
    }
    EXPECT_NEAR(mse(yp, hp), m, 1e-12);
  }
}

TEST(AverageRanks, Examples) {
  EXPECT_EQ(average_ranks(std::vector<double>{10, 20, 30}), (std::vector<double>{1, 2, 3}));
  EXPECT_EQ(average_ranks(std::vector<double>{1, 1, 2}), (std::vector<double>{1.5, 1.5, 3}));
  EXPECT_EQ(average_ranks(std::vector<double>{4, 4, 4, 4}),
            (std::vector<double>{2.5, 2.5, 2.5, 2.5}));
  EXPECT_EQ(average_ranks(std::vector<double>{3, 1, 2}), (std::vector<double>{3, 1, 2}));
}

TEST(AverageRanks, MatchesCountingOracle) {
  std::mt19937_64 gen(2);
  for (int t = 0; t < 200; ++t) {
    const auto v = tied_vector(gen, 1 + t % 40, 5);
    EXPECT_EQ(average_ranks(v), oracle::ranks_by_counting(v));
  }
}

TEST(Spearman, Examples) {
  const std::vector<double> y = {1, 2, 3};
  EXPECT_EQ(*spearman_tied(y, y), 1.0);
  EXPECT_NEAR(*spearman_tied(y, std::vector<double>{3, 1, 2}), -0.5, 1e-15);
  EXPECT_NEAR(*spearman_tied(std::vector<double>{1, 1, 2}, std::vector<double>{1, 2, 3}),
              0.8660, 1e-4);
  EXPECT_NEAR(*spearman_tied(std::vector<double>{1, 1, 2}, std::vector<double>{1, 2, 3}),
              std::sqrt(3.0) / 2.0, 1e-15);
}

TEST(Spearman, AllTiedIsNull) {
  EXPECT_FALSE(spearman_tied(std::vector<double>{2, 2, 2}, std::vector<double>{1, 2, 3}));
  EXPECT_FALSE(spearman_tied(std::vector<double>{1, 2, 3}, std::vector<double>{0, 0, 0}));
}

TEST(Spearman, MatchesBruteForceOracle) {
  std::mt19937_64 gen(3);
  for (int t = 0; t < 1000; ++t) {
    const auto y = tied_vector(gen, 50, 10);
    const auto h = tied_vector(gen, 50, 10);
    const auto got = spearman_tied(y, h);
    const double want = oracle::spearman(y, h);
    ASSERT_EQ(got.has_value(), !std::isnan(want));
    if (got) ASSERT_NEAR(*got, want, 1e-12);
  }
}

TEST(Spearman, InvariantUnderMonotoneTransformAndSymmetric) {
  std::mt19937_64 gen(4);
  for (int t = 0; t < 100; ++t) {
    const auto y = tied_vector(gen, 30, 6);
    const auto h = tied_vector(gen, 30, 6);
    auto ty = y;
    for (auto& v : ty) v = std::exp(v / 3.0) - 7.0;
    auto th = h;
    for (auto& v : th) v = v * v * v + 2.0 * v;
    const auto base = spearman_tied(y, h);
    ASSERT_TRUE(base);
    EXPECT_NEAR(*spearman_tied(ty, th), *base, 1e-12);
    EXPECT_NEAR(*spearman_tied(h, y), *base, 1e-12);
  }
}

TEST(Spearman, PerGameweekAveragesDefinedGroups) {
  const std::vector<double> y = {1, 2, 3, 5, 5, 9};
  const std::vector<double> h = {1, 2, 3, 1, 2, 0};
  const std::vector<int> gw = {1, 1, 1, 2, 2, 3};
  // group 1 is perfectly ordered, group 2 is all tied on y, group 3 has one row
  EXPECT_NEAR(*spearman_per_gameweek(y, h, gw), 1.0, 1e-15);
  const std::vector<int> gw2 = {1, 1, 2, 2, 1, 2};
  const double g1 = *spearman_tied(std::vector<double>{1, 2, 5}, std::vector<double>{1, 2, 2});
  const double g2 = *spearman_tied(std::vector<double>{3, 5, 9}, std::vector<double>{3, 1, 0});
  EXPECT_NEAR(*spearman_per_gameweek(y, h, gw2), (g1 + g2) / 2.0, 1e-15);
}

TEST(Reports, RoundTripAndTables) {
  const std::vector<double> y = {1, 2, 3, 4};
  const std::vector<double> h = {1.5, 2, 2.5, 5};
  std::vector<EvalReport> reports;
  for (Position p : kAllPositions) {
    reports.push_back(make_report(p, SplitLabel::kTest, "ridge", y, h));
    reports.push_back(make_report(p, SplitLabel::kTest, "cnn", y, y));
  }
  EXPECT_EQ(reports[0].n, 4U);
  EXPECT_DOUBLE_EQ(reports[0].mse, (0.25 + 0 + 0.25 + 1) / 4);
  std::stringstream buf;
  write_eval_reports(buf, reports);
  const auto back = read_eval_reports(buf);
  ASSERT_EQ(back.size(), reports.size());
  EXPECT_EQ(back[0].mse, reports[0].mse);
  EXPECT_EQ(back[0].spearman, reports[0].spearman);
  EXPECT_EQ(back[1].model, "cnn");

  std::ostringstream mse_table;
  write_mse_table(mse_table, reports);
  const std::string t = mse_table.str();
  EXPECT_EQ(t.substr(0, t.find('\n')), "\"position\",\"ridge\",\"cnn\"");
  EXPECT_NE(t.find("\"AVG\",0.375,0\n"), std::string::npos);
  std::ostringstream rho_table;
  write_spearman_table(rho_table, reports);
  EXPECT_NE(rho_table.str().find("\"cnn\",1,1,1,1\n"), std::string::npos);
}

TEST(Extremes, WorstAndBest) {
  const std::vector<WindowedExample> ex = {example({1, 2}, -2, 21), example({6, 6}, 1, 6),
                                           example({2, 0}, 3, 2), example({1, 1}, 0, 1)};
  const std::vector<double> pred = {2.2, 6, 3, 1};
  const auto e = extreme_examples(ex, pred, 2);
  ASSERT_EQ(e.worst.size(), 2U);
  EXPECT_EQ(e.worst[0].index, 0U);
  EXPECT_NEAR(e.worst[0].squared_error, 18.8 * 18.8, 1e-9);
  EXPECT_EQ(e.worst[0].d, -2);
  EXPECT_EQ(e.worst[0].window_points, (std::vector<double>{1, 2}));
  EXPECT_EQ(e.worst[1].index, 2U);
  EXPECT_EQ(e.best[0].squared_error, 0.0);
  EXPECT_EQ(e.best[0].index, 1U);  // tie on zero error broken by index
  EXPECT_EQ(e.best[1].index, 3U);
  const auto all = extreme_examples(ex, pred, 4);
  std::set<std::size_t> covered;
  for (const auto& x : all.worst) covered.insert(x.index);
  for (const auto& x : all.best) covered.insert(x.index);
  EXPECT_EQ(covered.size(), 4U);
  EXPECT_THROW(extreme_examples(ex, pred, 5), ArgumentError);
}

TEST(Predictions, ExportRoundTrip) {
  const std::vector<WindowedExample> ex = {example({1}, 0, 3), example({2}, 1, 4)};
  const std::vector<double> pred = {2.75, 1.0 / 3.0};
  const auto recs = prediction_records(ex, pred);
  ASSERT_EQ(recs.size(), 2U);
  EXPECT_EQ(recs[0].y, 3.0);
  EXPECT_EQ(recs[0].gameweek, 4);
  EXPECT_EQ(recs[1].position, Position::kDEF);
  std::stringstream buf;
  export_predictions(buf, recs);
  EXPECT_EQ(read_predictions(buf), recs);
  std::ostringstream empty;
  export_predictions(empty, {});
  EXPECT_EQ(empty.str(),
            "\"true\",\"predicted\",\"player\",\"season\",\"gameweek\",\"position\"\n");
  EXPECT_THROW(prediction_records(ex, std::vector<double>{1}), ShapeError);
}
