#pragma once

#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace fplcast {

struct GbmHyperparams {
  int n_trees = 50;
  int max_depth = 3;
  double lambda_l2 = 10.0;
  int num_leaves = 7;
  int min_data_in_leaf = 70;
  double eta = 0.1;

  void validate() const;  // throws ArgumentError
};

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  double value = 0.0;  // leaf output (internal nodes keep their pre-split value)
  int depth = 0;
  int parent = -1;
  int count = 0;  // training rows routed here

  bool is_leaf() const { return feature < 0; }
};

// One accepted split of leaf-wise growth, in acceptance order.
struct GrowthStep {
  int node = 0;
  double gain = 0.0;
};

class RegressionTree {
 public:
  RegressionTree() : nodes_(1) {}
  explicit RegressionTree(std::vector<TreeNode> nodes,
                          std::vector<GrowthStep> trace = {});

  double predict(std::span<const double> x) const;
  int leaf_index(std::span<const double> x) const;

  const std::vector<TreeNode>& nodes() const { return nodes_; }
  const std::vector<GrowthStep>& trace() const { return trace_; }
  int leaf_count() const;
  int depth() const;

 private:
  std::vector<TreeNode> nodes_;
  std::vector<GrowthStep> trace_;
};

struct GbmModel {
  double base_score = 0.0;
  std::vector<RegressionTree> trees;
  double eta = 0.1;
  GbmHyperparams hyperparams;
  int n_features = 0;
  std::vector<std::string> feature_names;
};

// Squared-loss boosting: each tree is fit to the current residuals with
// best-first (leaf-wise) growth and exact split enumeration.
GbmModel fit_gbm(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                 const GbmHyperparams& hp,
                 std::vector<std::string> feature_names = {});

double predict_gbm(const GbmModel& model, std::span<const double> x);
double predict_gbm(const GbmModel& model, const Eigen::VectorXd& x);
// Uses only the first n_trees trees (staged prediction).
double predict_gbm(const GbmModel& model, std::span<const double> x,
                   std::size_t n_trees);
Eigen::VectorXd predict_gbm(const GbmModel& model, const Eigen::MatrixXd& x);

// Best split of one node's rows under the growth constraints. Exposed for
// tests and diagnostics.
struct SplitCandidate {
  bool valid = false;
  int feature = -1;
  double threshold = 0.0;
  double gain = 0.0;
};

// score(S) = -(sum r)^2 / (|S| + lambda); gain = score(parent) - score(L) -
// score(R).
double split_gain(double sum_left, double count_left, double sum_right,
                  double count_right, double lambda);

struct SplitImportance {
  std::vector<std::string> feature_names;
  std::vector<long> counts;
  std::vector<double> percentages;
};

SplitImportance split_importance(const GbmModel& model);

inline constexpr int kMaxShapleyFeatures = 15;

struct ShapleyResult {
  double base_value = 0.0;  // v(empty set)
  std::vector<double> phi;
  double prediction = 0.0;
};

// Exact interventional Shapley values by enumerating all 2^M coalitions.
ShapleyResult shapley_values(const GbmModel& model, std::span<const double> x,
                             const Eigen::MatrixXd& background);

void write_gbm(std::ostream& out, const GbmModel& model);
GbmModel read_gbm(std::istream& in);

}  // namespace fplcast
