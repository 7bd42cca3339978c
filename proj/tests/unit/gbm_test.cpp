#include <random>
#include <set>
#include <sstream>

#include <gtest/gtest.h>

#include "fplcast/error.hpp"
#include "fplcast/gbm.hpp"
#include "oracles.hpp"

using namespace fplcast;

namespace {

GbmHyperparams toy_params(double lambda) {
  GbmHyperparams hp;
  hp.n_trees = 1;
  hp.max_depth = 1;
  hp.num_leaves = 2;
  hp.min_data_in_leaf = 1;
  hp.lambda_l2 = lambda;
  hp.eta = 1.0;
  return hp;
}

struct Data {
  Eigen::MatrixXd x;
  Eigen::VectorXd y;
};

Data toy() {
  Data d{Eigen::MatrixXd(4, 1), Eigen::VectorXd(4)};
  d.x << 0, 0, 1, 1;
  d.y << 0, 0, 10, 10;
  return d;
}

// Nonlinear target with integer-valued features so that split values tie.
Data synthetic(std::uint64_t seed, int n, int f) {
  std::mt19937_64 gen(seed);
  std::uniform_int_distribution<int> level(0, 9);
  std::normal_distribution<double> noise(0.0, 1.0);
  Data d{Eigen::MatrixXd(n, f), Eigen::VectorXd(n)};
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < f; ++j) d.x(i, j) = level(gen) + (j % 2 ? noise(gen) : 0.0);
    d.y[i] = 2.0 * (d.x(i, 0) > 4) + 0.3 * d.x(i, 1 % f) * (f > 2 ? d.x(i, 2) : 1.0) +
             noise(gen);
  }
  return d;
}

RegressionTree stump(int feature, double threshold, double left, double right) {
  std::vector<TreeNode> nodes(3);
  nodes[0].feature = feature;
  nodes[0].threshold = threshold;
  nodes[0].left = 1;
  nodes[0].right = 2;
  nodes[1].value = left;
  nodes[1].depth = nodes[2].depth = 1;
  nodes[1].parent = nodes[2].parent = 0;
  nodes[2].value = right;
  return RegressionTree(nodes);
}

double train_mse(const GbmModel& m, const Data& d, std::size_t trees) {
  double s = 0;
  for (Eigen::Index i = 0; i < d.x.rows(); ++i) {
    const Eigen::VectorXd row = d.x.row(i);
    const double r = d.y[i] - predict_gbm(m, std::span<const double>(row.data(), row.size()), trees);
    s += r * r;
  }
  return s / static_cast<double>(d.x.rows());
}

}  // namespace

TEST(FitGbm, ToyTwoLeaves) {
  const auto d = toy();
  const auto m = fit_gbm(d.x, d.y, toy_params(0.0));
  EXPECT_EQ(m.base_score, 5.0);
  ASSERT_EQ(m.trees.size(), 1U);
  const Eigen::VectorXd p = predict_gbm(m, d.x);
  EXPECT_EQ(p, d.y);
  EXPECT_EQ(predict_gbm(m, Eigen::VectorXd(Eigen::VectorXd::Zero(1))), 0.0);
}

TEST(FitGbm, ToyWithL2Shrinkage) {
  const auto d = toy();
  const auto m = fit_gbm(d.x, d.y, toy_params(2.0));
  const Eigen::VectorXd p = predict_gbm(m, d.x);
  EXPECT_EQ(p, Eigen::Vector4d(2.5, 2.5, 7.5, 7.5));
}

TEST(FitGbm, NoTreesPredictsMean) {
  const auto d = synthetic(1, 50, 3);
  auto hp = toy_params(0.0);
  hp.n_trees = 0;
  const auto m = fit_gbm(d.x, d.y, hp);
  EXPECT_TRUE(m.trees.empty());
  EXPECT_EQ(predict_gbm(m, Eigen::VectorXd(d.x.row(3))), d.y.mean());
}

TEST(FitGbm, EtaScalesTreeContribution) {
  const auto d = synthetic(2, 200, 3);
  GbmHyperparams hp;
  hp.min_data_in_leaf = 10;
  auto m = fit_gbm(d.x, d.y, hp);
  const Eigen::VectorXd x = d.x.row(7);
  const double before = predict_gbm(m, x) - m.base_score;
  m.eta *= 2.0;
  EXPECT_NEAR(predict_gbm(m, x) - m.base_score, 2.0 * before, 1e-12);
}

TEST(FitGbm, Errors) {
  const auto d = toy();
  EXPECT_THROW(fit_gbm(Eigen::MatrixXd(0, 1), Eigen::VectorXd(0), toy_params(0)), ArgumentError);
  Eigen::VectorXd bad = d.y;
  bad[1] = NAN;
  EXPECT_THROW(fit_gbm(d.x, bad, toy_params(0)), NumericError);
  auto hp = toy_params(0);
  hp.num_leaves = 1;
  EXPECT_THROW(fit_gbm(d.x, d.y, hp), ArgumentError);
  const auto m = fit_gbm(d.x, d.y, toy_params(0));
  EXPECT_THROW(predict_gbm(m, Eigen::VectorXd(Eigen::Vector2d(0, 0))), ShapeError);
}

TEST(FitGbm, TooFewRowsDegeneratesToBase) {
  const auto d = synthetic(3, 100, 2);
  GbmHyperparams hp;  // min 70 per leaf needs 140 rows
  const auto m = fit_gbm(d.x, d.y, hp);
  for (const auto& t : m.trees) EXPECT_EQ(t.leaf_count(), 1);
}

TEST(FitGbm, TrainingMseNonIncreasing) {
  for (std::uint64_t seed : {4, 5, 6}) {
    const auto d = synthetic(seed, 600, 4);
    GbmHyperparams hp;
    hp.n_trees = 50;
    const auto m = fit_gbm(d.x, d.y, hp);
    double previous = train_mse(m, d, 0);
    for (std::size_t t = 1; t <= m.trees.size(); ++t) {
      const double now = train_mse(m, d, t);
      EXPECT_LE(now, previous + 1e-12) << "tree " << t;
      previous = now;
    }
  }
}

TEST(FitGbm, StructuralConstraints) {
  for (const auto& hp : {GbmHyperparams{}, GbmHyperparams{20, 4, 1.0, 15, 20, 0.3},
                         GbmHyperparams{10, 2, 0.0, 31, 5, 1.0}}) {
    const auto d = synthetic(7, 900, 5);
    const auto m = fit_gbm(d.x, d.y, hp);
    for (const auto& tree : m.trees) {
      EXPECT_LE(tree.depth(), hp.max_depth);
      EXPECT_LE(tree.leaf_count(), hp.num_leaves);
      EXPECT_GE(tree.leaf_count(), 1);
      for (const auto& n : tree.nodes()) {
        if (n.is_leaf()) {
          EXPECT_GE(n.count, hp.min_data_in_leaf);
        } else {
          ASSERT_GE(n.left, 0);
          ASSERT_GE(n.right, 0);
          EXPECT_EQ(tree.nodes()[n.left].count + tree.nodes()[n.right].count, n.count);
        }
      }
      for (const auto& step : tree.trace()) EXPECT_GT(step.gain, 0.0);
      EXPECT_EQ(tree.trace().size(), static_cast<std::size_t>(tree.leaf_count() - 1));
    }
  }
}

TEST(FitGbm, LeafWiseTraceMatchesBruteForceReplay) {
  const auto d = synthetic(8, 400, 3);
  GbmHyperparams hp{8, 4, 2.0, 9, 15, 0.5};
  const auto m = fit_gbm(d.x, d.y, hp);
  for (std::size_t t = 0; t < m.trees.size(); ++t) {
    const auto& tree = m.trees[t];
    std::vector<double> residual(d.x.rows());
    for (Eigen::Index i = 0; i < d.x.rows(); ++i) {
      const Eigen::VectorXd row = d.x.row(i);
      residual[i] = d.y[i] - predict_gbm(m, std::span<const double>(row.data(), row.size()), t);
    }
    const auto expansion = [&](int node) {
      if (tree.nodes()[node].depth >= hp.max_depth) return oracle::Split{};
      return oracle::best_split(d.x, residual, oracle::rows_through(tree, d.x, node),
                                hp.min_data_in_leaf, hp.lambda_l2);
    };
    std::set<int> leaves = {0};
    for (const auto& step : tree.trace()) {
      ASSERT_TRUE(leaves.count(step.node)) << "tree " << t;
      double best = -INFINITY;
      for (int leaf : leaves) {
        const auto s = expansion(leaf);
        if (s.valid) best = std::max(best, s.gain);
      }
      EXPECT_NEAR(step.gain, best, 1e-9 * std::max(1.0, best)) << "tree " << t;
      EXPECT_NEAR(expansion(step.node).gain, best, 1e-9 * std::max(1.0, best));
      leaves.erase(step.node);
      leaves.insert(tree.nodes()[step.node].left);
      leaves.insert(tree.nodes()[step.node].right);
    }
    if (tree.leaf_count() < hp.num_leaves) {
      for (int leaf : leaves) EXPECT_FALSE(expansion(leaf).valid) << "tree " << t;
    }
  }
}

TEST(SplitGain, MatchesScoreDifference) {
  const double lambda = 3.0;
  const double g = split_gain(4.0, 2, -6.0, 5, lambda);
  const auto score = [&](double s, double n) { return -s * s / (n + lambda); };
  EXPECT_NEAR(g, score(-2.0, 7) - score(4.0, 2) - score(-6.0, 5), 1e-12);
}

TEST(SplitImportance, Counts) {
  GbmModel m;
  m.n_features = 4;
  m.feature_names = {"a", "b", "c", "d"};
  auto none = split_importance(m);
  EXPECT_EQ(none.counts, (std::vector<long>{0, 0, 0, 0}));
  EXPECT_EQ(none.percentages, (std::vector<double>{0, 0, 0, 0}));
  m.trees.push_back(stump(3, 0.5, -1, 1));
  EXPECT_EQ(split_importance(m).percentages[3], 100.0);
  m.trees.push_back(stump(1, 0.5, -1, 1));
  const auto two = split_importance(m);
  EXPECT_EQ(two.percentages[1], 50.0);
  EXPECT_EQ(two.percentages[3], 50.0);
}

TEST(Shapley, ConstantModelGivesZeros) {
  GbmModel m;
  m.n_features = 3;
  m.base_score = 4.0;
  const std::vector<double> x = {1, 2, 3};
  const auto r = shapley_values(m, x, Eigen::MatrixXd::Zero(5, 3));
  EXPECT_EQ(r.phi, (std::vector<double>{0, 0, 0}));
  EXPECT_EQ(r.base_value, 4.0);
}

TEST(Shapley, SingleStump) {
  GbmModel m;
  m.n_features = 3;
  m.eta = 1.0;
  m.trees.push_back(stump(0, 0.5, -2.0, 3.0));
  const std::vector<double> x = {1.0, 7.0, 7.0};
  const auto r = shapley_values(m, x, Eigen::MatrixXd::Zero(4, 3));
  EXPECT_EQ(r.phi[0], 5.0);
  EXPECT_EQ(r.phi[1], 0.0);
  EXPECT_EQ(r.phi[2], 0.0);
  EXPECT_EQ(r.base_value, -2.0);
}

TEST(Shapley, MatchesPermutationOracle) {
  const auto d = synthetic(9, 300, 5);
  GbmHyperparams hp{15, 3, 1.0, 7, 10, 0.3};
  const auto m = fit_gbm(d.x, d.y, hp);
  const Eigen::MatrixXd background = d.x.topRows(12);
  for (int e = 20; e < 23; ++e) {
    const Eigen::VectorXd xv = d.x.row(e);
    const std::vector<double> x(xv.data(), xv.data() + xv.size());
    const auto r = shapley_values(m, x, background);
    const auto value = [&](std::uint32_t mask) {
      double s = 0;
      for (Eigen::Index b = 0; b < background.rows(); ++b) {
        std::vector<double> h(5);
        for (int j = 0; j < 5; ++j) h[j] = (mask >> j) & 1U ? x[j] : background(b, j);
        s += predict_gbm(m, std::span<const double>(h));
      }
      return s / static_cast<double>(background.rows());
    };
    const auto phi = oracle::shapley_by_permutation(5, value);
    for (int j = 0; j < 5; ++j) EXPECT_NEAR(r.phi[j], phi[j], 1e-10);
    double total = r.base_value;
    for (double p : r.phi) total += p;
    EXPECT_NEAR(total, r.prediction, 1e-10);
  }
}

TEST(Shapley, BudgetAndBackgroundErrors) {
  GbmModel wide;
  wide.n_features = 16;
  EXPECT_THROW(shapley_values(wide, std::vector<double>(16), Eigen::MatrixXd::Zero(1, 16)),
               BudgetError);
  GbmModel m;
  m.n_features = 2;
  EXPECT_THROW(shapley_values(m, std::vector<double>(2), Eigen::MatrixXd(0, 2)),
               ArgumentError);
}

TEST(GbmIo, RoundTripPredictsIdentically) {
  const auto d = synthetic(10, 300, 3);
  GbmHyperparams hp{10, 3, 1.0, 7, 10, 0.2};
  const auto m = fit_gbm(d.x, d.y, hp, {"a", "b", "c"});
  std::stringstream buf;
  write_gbm(buf, m);
  const auto back = read_gbm(buf);
  EXPECT_EQ(back.feature_names, m.feature_names);
  EXPECT_EQ(back.trees.size(), m.trees.size());
  EXPECT_EQ(predict_gbm(back, d.x), predict_gbm(m, d.x));
  std::stringstream again;
  write_gbm(again, back);
  std::stringstream first;
  write_gbm(first, m);
  EXPECT_EQ(again.str(), first.str());
}
