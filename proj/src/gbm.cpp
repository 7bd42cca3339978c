#include "fplcast/gbm.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>
#include <sstream>

#include "fplcast/error.hpp"
#include "fplcast/text_io.hpp"

namespace fplcast {

void GbmHyperparams::validate() const {
  if (n_trees < 0) throw ArgumentError("gbm: n_trees must be >= 0");
  if (max_depth < 1) throw ArgumentError("gbm: max_depth must be >= 1");
  if (num_leaves < 2) throw ArgumentError("gbm: num_leaves must be >= 2");
  if (min_data_in_leaf < 1) {
    throw ArgumentError("gbm: min_data_in_leaf must be >= 1");
  }
  if (!(lambda_l2 >= 0.0)) throw ArgumentError("gbm: lambda_l2 must be >= 0");
  if (!(eta > 0.0 && eta <= 1.0)) {
    throw ArgumentError("gbm: eta must be in (0, 1]");
  }
}

RegressionTree::RegressionTree(std::vector<TreeNode> nodes,
                               std::vector<GrowthStep> trace)
    : nodes_(std::move(nodes)), trace_(std::move(trace)) {
  if (nodes_.empty()) nodes_.emplace_back();
}

int RegressionTree::leaf_index(std::span<const double> x) const {
  int node = 0;
  while (!nodes_[node].is_leaf()) {
    const TreeNode& n = nodes_[node];
    node = x[static_cast<std::size_t>(n.feature)] < n.threshold ? n.left
                                                                : n.right;
  }
  return node;
}

double RegressionTree::predict(std::span<const double> x) const {
  return nodes_[leaf_index(x)].value;
}

int RegressionTree::leaf_count() const {
  return static_cast<int>(std::count_if(
      nodes_.begin(), nodes_.end(), [](const TreeNode& n) { return n.is_leaf(); }));
}

int RegressionTree::depth() const {
  int depth = 0;
  for (const auto& n : nodes_) depth = std::max(depth, n.depth);
  return depth;
}

double split_gain(double sum_left, double count_left, double sum_right,
                  double count_right, double lambda) {
  const double sum = sum_left + sum_right;
  const double count = count_left + count_right;
  return sum_left * sum_left / (count_left + lambda) +
         sum_right * sum_right / (count_right + lambda) -
         sum * sum / (count + lambda);
}

namespace {

// Grows one tree on the residuals. `order[f]` lists row indices sorted by
// feature f; it is shared by every tree of the ensemble.
class TreeGrower {
 public:
  TreeGrower(const Eigen::MatrixXd& x, const Eigen::VectorXd& residual,
             const std::vector<std::vector<int>>& order,
             const GbmHyperparams& hp)
      : x_(x), residual_(residual), order_(order), hp_(hp),
        node_of_(static_cast<std::size_t>(x.rows()), 0) {}

  RegressionTree grow() {
    TreeNode root;
    root.count = static_cast<int>(x_.rows());
    sums_.push_back(residual_.sum());
    root.value = sums_[0] / (root.count + hp_.lambda_l2);
    nodes_.push_back(root);
    candidates_.push_back(best_split(0));

    int leaves = 1;
    while (leaves < hp_.num_leaves) {
      int chosen = -1;
      for (std::size_t n = 0; n < nodes_.size(); ++n) {
        if (!nodes_[n].is_leaf() || !candidates_[n].valid) continue;
        if (chosen < 0 || better(candidates_[n], candidates_[chosen])) {
          chosen = static_cast<int>(n);
        }
      }
      if (chosen < 0) break;
      apply_split(chosen);
      ++leaves;
    }
    return RegressionTree(std::move(nodes_), std::move(trace_));
  }

  const std::vector<int>& node_of() const { return node_of_; }

 private:
  static bool better(const SplitCandidate& a, const SplitCandidate& b) {
    if (a.gain != b.gain) return a.gain > b.gain;
    if (a.feature != b.feature) return a.feature < b.feature;
    return a.threshold < b.threshold;
  }

  SplitCandidate best_split(int node) const {
    SplitCandidate best;
    const TreeNode& n = nodes_[node];
    if (n.depth >= hp_.max_depth) return best;
    if (n.count < 2 * hp_.min_data_in_leaf) return best;
    const double total = sums_[node];
    const double count = n.count;
    const double lambda = hp_.lambda_l2;
    for (std::size_t f = 0; f < order_.size(); ++f) {
      double left_sum = 0.0;
      int left_count = 0;
      double prev = 0.0;
      for (int row : order_[f]) {
        if (node_of_[row] != node) continue;
        const double value = x_(row, static_cast<Eigen::Index>(f));
        if (left_count > 0 && value != prev &&
            left_count >= hp_.min_data_in_leaf &&
            n.count - left_count >= hp_.min_data_in_leaf) {
          const double gain =
              split_gain(left_sum, left_count, total - left_sum,
                         count - left_count, lambda);
          if (gain > 0.0 && (!best.valid || gain > best.gain)) {
            double threshold = prev + (value - prev) / 2.0;
            if (threshold <= prev) threshold = value;
            best = {true, static_cast<int>(f), threshold, gain};
          }
        }
        left_sum += residual_[row];
        ++left_count;
        prev = value;
      }
    }
    return best;
  }

  void apply_split(int node) {
    const SplitCandidate split = candidates_[node];
    TreeNode left;
    TreeNode right;
    left.depth = right.depth = nodes_[node].depth + 1;
    left.parent = right.parent = node;
    const int left_id = static_cast<int>(nodes_.size());
    const int right_id = left_id + 1;
    double left_sum = 0.0;
    double right_sum = 0.0;
    for (std::size_t i = 0; i < node_of_.size(); ++i) {
      if (node_of_[i] != node) continue;
      const auto row = static_cast<Eigen::Index>(i);
      if (x_(row, split.feature) < split.threshold) {
        node_of_[i] = left_id;
        left_sum += residual_[row];
        ++left.count;
      } else {
        node_of_[i] = right_id;
        right_sum += residual_[row];
        ++right.count;
      }
    }
    left.value = left_sum / (left.count + hp_.lambda_l2);
    right.value = right_sum / (right.count + hp_.lambda_l2);
    TreeNode& parent = nodes_[node];
    parent.feature = split.feature;
    parent.threshold = split.threshold;
    parent.left = left_id;
    parent.right = right_id;
    nodes_.push_back(left);
    nodes_.push_back(right);
    sums_.push_back(left_sum);
    sums_.push_back(right_sum);
    trace_.push_back({node, split.gain});
    candidates_.push_back(best_split(left_id));
    candidates_.push_back(best_split(right_id));
  }

  const Eigen::MatrixXd& x_;
  const Eigen::VectorXd& residual_;
  const std::vector<std::vector<int>>& order_;
  const GbmHyperparams& hp_;
  std::vector<int> node_of_;
  std::vector<TreeNode> nodes_;
  std::vector<double> sums_;
  std::vector<SplitCandidate> candidates_;
  std::vector<GrowthStep> trace_;
};

void check_width(const GbmModel& model, std::size_t width) {
  if (width != static_cast<std::size_t>(model.n_features)) {
    throw ShapeError("gbm: model has " + std::to_string(model.n_features) +
                     " features, input has " + std::to_string(width));
  }
}

}  // namespace

GbmModel fit_gbm(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                 const GbmHyperparams& hp,
                 std::vector<std::string> feature_names) {
  hp.validate();
  if (x.rows() == 0) throw ArgumentError("fit_gbm: no examples");
  if (x.rows() != y.size()) throw ShapeError("fit_gbm: x/y length mismatch");
  if (!y.allFinite()) throw NumericError("fit_gbm: non-finite target");
  if (!x.allFinite()) throw NumericError("fit_gbm: non-finite feature value");
  if (feature_names.empty()) {
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      feature_names.push_back("x" + std::to_string(j));
    }
  }
  if (static_cast<Eigen::Index>(feature_names.size()) != x.cols()) {
    throw ShapeError("fit_gbm: feature_names length does not match columns");
  }
  if (x.rows() < 2 * hp.min_data_in_leaf) {
    warn("fit_gbm: " + std::to_string(x.rows()) +
         " examples cannot satisfy min_data_in_leaf=" +
         std::to_string(hp.min_data_in_leaf) +
         " on both sides of a split; model reduces to the base score");
  }

  GbmModel model;
  model.hyperparams = hp;
  model.eta = hp.eta;
  model.n_features = static_cast<int>(x.cols());
  model.feature_names = std::move(feature_names);
  model.base_score = y.mean();

  std::vector<std::vector<int>> order(static_cast<std::size_t>(x.cols()));
  for (std::size_t f = 0; f < order.size(); ++f) {
    auto& idx = order[f];
    idx.resize(static_cast<std::size_t>(x.rows()));
    std::iota(idx.begin(), idx.end(), 0);
    const auto col = static_cast<Eigen::Index>(f);
    std::stable_sort(idx.begin(), idx.end(),
                     [&](int a, int b) { return x(a, col) < x(b, col); });
  }

  Eigen::VectorXd prediction = Eigen::VectorXd::Constant(y.size(), model.base_score);
  for (int m = 0; m < hp.n_trees; ++m) {
    const Eigen::VectorXd residual = y - prediction;
    TreeGrower grower(x, residual, order, hp);
    RegressionTree tree = grower.grow();
    const auto& node_of = grower.node_of();
    for (Eigen::Index i = 0; i < y.size(); ++i) {
      prediction[i] +=
          model.eta * tree.nodes()[static_cast<std::size_t>(node_of[i])].value;
    }
    model.trees.push_back(std::move(tree));
  }
  return model;
}

double predict_gbm(const GbmModel& model, std::span<const double> x,
                   std::size_t n_trees) {
  check_width(model, x.size());
  double sum = 0.0;
  const std::size_t limit = std::min(n_trees, model.trees.size());
  for (std::size_t m = 0; m < limit; ++m) sum += model.trees[m].predict(x);
  return model.base_score + model.eta * sum;
}

double predict_gbm(const GbmModel& model, std::span<const double> x) {
  return predict_gbm(model, x, model.trees.size());
}

double predict_gbm(const GbmModel& model, const Eigen::VectorXd& x) {
  return predict_gbm(model, std::span<const double>(x.data(), x.size()));
}

Eigen::VectorXd predict_gbm(const GbmModel& model, const Eigen::MatrixXd& x) {
  check_width(model, static_cast<std::size_t>(x.cols()));
  Eigen::VectorXd out(x.rows());
  std::vector<double> row(static_cast<std::size_t>(x.cols()));
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    for (Eigen::Index j = 0; j < x.cols(); ++j) row[j] = x(i, j);
    out[i] = predict_gbm(model, std::span<const double>(row));
  }
  return out;
}

SplitImportance split_importance(const GbmModel& model) {
  SplitImportance importance;
  importance.feature_names = model.feature_names;
  const auto width = static_cast<std::size_t>(model.n_features);
  importance.counts.assign(width, 0);
  importance.percentages.assign(width, 0.0);
  long total = 0;
  for (const auto& tree : model.trees) {
    for (const auto& node : tree.nodes()) {
      if (node.is_leaf()) continue;
      ++importance.counts[static_cast<std::size_t>(node.feature)];
      ++total;
    }
  }
  if (total > 0) {
    for (std::size_t j = 0; j < width; ++j) {
      importance.percentages[j] =
          100.0 * static_cast<double>(importance.counts[j]) / total;
    }
  }
  return importance;
}

ShapleyResult shapley_values(const GbmModel& model, std::span<const double> x,
                             const Eigen::MatrixXd& background) {
  const int m = model.n_features;
  if (m > kMaxShapleyFeatures) {
    throw BudgetError("shapley_values: " + std::to_string(m) +
                      " features exceeds the exact-enumeration budget of " +
                      std::to_string(kMaxShapleyFeatures) +
                      "; explain a model trained on a feature subset");
  }
  if (background.rows() == 0) {
    throw ArgumentError("shapley_values: background sample is empty");
  }
  check_width(model, x.size());
  check_width(model, static_cast<std::size_t>(background.cols()));

  const std::size_t n_masks = std::size_t{1} << m;
  std::vector<double> value(n_masks, 0.0);
  std::vector<double> hybrid(static_cast<std::size_t>(m));
  for (std::size_t mask = 0; mask < n_masks; ++mask) {
    double sum = 0.0;
    for (Eigen::Index b = 0; b < background.rows(); ++b) {
      for (int j = 0; j < m; ++j) {
        hybrid[j] = (mask >> j) & 1U ? x[j] : background(b, j);
      }
      sum += predict_gbm(model, std::span<const double>(hybrid));
    }
    value[mask] = sum / static_cast<double>(background.rows());
  }

  // Integer weights s! (m - s - 1)!, divided by m! once per feature. All
  // are exact in a double for m <= 15.
  std::vector<double> factorial(static_cast<std::size_t>(m) + 1, 1.0);
  for (int s = 1; s <= m; ++s) factorial[s] = factorial[s - 1] * s;
  std::vector<double> weight(static_cast<std::size_t>(std::max(m, 1)));
  for (int s = 0; s < m; ++s) weight[s] = factorial[s] * factorial[m - s - 1];

  ShapleyResult result;
  result.base_value = value[0];
  result.prediction = predict_gbm(model, x);
  result.phi.assign(static_cast<std::size_t>(m), 0.0);
  for (int j = 0; j < m; ++j) {
    const std::size_t bit = std::size_t{1} << j;
    double phi = 0.0;
    for (std::size_t mask = 0; mask < n_masks; ++mask) {
      if (mask & bit) continue;
      const double delta = value[mask | bit] - value[mask];
      if (delta != 0.0) phi += weight[std::popcount(mask)] * delta;
    }
    result.phi[j] = phi / factorial[m];
  }
  return result;
}

// ---------------------------------------------------------------------------
// Serialization: hyperparameter header, then each tree as a pre-order dump of
// "split <feature> <threshold> <count>" and "leaf <value> <count>" lines.

namespace {

void dump_node(std::ostream& out, const RegressionTree& tree, int index) {
  const TreeNode& node = tree.nodes()[index];
  if (node.is_leaf()) {
    out << "leaf " << text::format_double(node.value) << ' ' << node.count
        << '\n';
    return;
  }
  out << "split " << node.feature << ' ' << text::format_double(node.threshold)
      << ' ' << node.count << ' ' << text::format_double(node.value) << '\n';
  dump_node(out, tree, node.left);
  dump_node(out, tree, node.right);
}

double read_number(std::istream& in) {
  std::string token;
  in >> token;
  auto v = text::parse_double(token);
  if (!v) throw SchemaError("gbm model: bad number '" + token + "'");
  return *v;
}

int load_node(std::istream& in, std::vector<TreeNode>& nodes, int parent,
              int depth) {
  std::string kind;
  if (!(in >> kind)) throw SchemaError("gbm model: truncated tree");
  const int index = static_cast<int>(nodes.size());
  nodes.emplace_back();
  nodes[index].parent = parent;
  nodes[index].depth = depth;
  if (kind == "leaf") {
    nodes[index].value = read_number(in);
    in >> nodes[index].count;
    return index;
  }
  if (kind != "split") throw SchemaError("gbm model: unknown node '" + kind + "'");
  int feature = 0;
  in >> feature;
  nodes[index].feature = feature;
  nodes[index].threshold = read_number(in);
  in >> nodes[index].count;
  nodes[index].value = read_number(in);
  const int left = load_node(in, nodes, index, depth + 1);
  nodes[index].left = left;
  const int right = load_node(in, nodes, index, depth + 1);
  nodes[index].right = right;
  return index;
}

}  // namespace

void write_gbm(std::ostream& out, const GbmModel& model) {
  const auto& hp = model.hyperparams;
  out << "gbm_version 1\n";
  out << "n_features " << model.n_features << '\n';
  out << "feature_names " << text::join(model.feature_names, ";") << '\n';
  out << "base_score " << text::format_double(model.base_score) << '\n';
  out << "eta " << text::format_double(model.eta) << '\n';
  out << "n_trees " << hp.n_trees << '\n';
  out << "max_depth " << hp.max_depth << '\n';
  out << "lambda_l2 " << text::format_double(hp.lambda_l2) << '\n';
  out << "num_leaves " << hp.num_leaves << '\n';
  out << "min_data_in_leaf " << hp.min_data_in_leaf << '\n';
  out << "trees " << model.trees.size() << '\n';
  for (std::size_t t = 0; t < model.trees.size(); ++t) {
    out << "tree " << t << '\n';
    dump_node(out, model.trees[t], 0);
  }
}

GbmModel read_gbm(std::istream& in) {
  GbmModel model;
  auto& hp = model.hyperparams;
  std::string key;
  in >> key;
  if (key != "gbm_version") throw SchemaError("not a gbm model");
  int version = 0;
  in >> version;
  std::size_t n_trees_stored = 0;
  while (in >> key) {
    if (key == "n_features") {
      in >> model.n_features;
    } else if (key == "feature_names") {
      std::string names;
      in >> names;
      model.feature_names = text::split(names, ';');
    } else if (key == "base_score") {
      model.base_score = read_number(in);
    } else if (key == "eta") {
      model.eta = read_number(in);
      hp.eta = model.eta;
    } else if (key == "n_trees") {
      in >> hp.n_trees;
    } else if (key == "max_depth") {
      in >> hp.max_depth;
    } else if (key == "lambda_l2") {
      hp.lambda_l2 = read_number(in);
    } else if (key == "num_leaves") {
      in >> hp.num_leaves;
    } else if (key == "min_data_in_leaf") {
      in >> hp.min_data_in_leaf;
    } else if (key == "trees") {
      in >> n_trees_stored;
      for (std::size_t t = 0; t < n_trees_stored; ++t) {
        std::string tag;
        std::size_t index = 0;
        in >> tag >> index;
        if (tag != "tree" || index != t) throw SchemaError("gbm model: bad tree header");
        std::vector<TreeNode> nodes;
        load_node(in, nodes, -1, 0);
        model.trees.emplace_back(std::move(nodes));
      }
      break;
    } else {
      throw SchemaError("gbm model: unknown key '" + key + "'");
    }
  }
  return model;
}

}  // namespace fplcast
