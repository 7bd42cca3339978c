#pragma once

#include <cstdint>
#include <istream>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fplcast/dataset.hpp"

namespace fplcast {

using RowMatrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class Activation { kRelu, kTanh };
std::string_view to_string(Activation activation);
std::optional<Activation> parse_activation(std::string_view text);

// Architecture: one valid, stride-1 convolution over the time axis, flatten,
// append the upcoming difficulty, one dense hidden layer, linear output.
struct CnnShape {
  int window = 6;    // w
  int kernel = 1;    // k
  int features = 1;  // f
  int filters = 64;  // F
  int hidden = 64;   // h

  int conv_length() const { return window - kernel + 1; }
  int patch_size() const { return kernel * features; }
  int dense_inputs() const { return filters * conv_length() + 1; }
  std::size_t parameter_count() const;
  void validate() const;  // throws ShapeError

  bool operator==(const CnnShape&) const = default;
};

// All trainable parameters in one flat buffer, in the order: conv filters
// (F x k*f, entry (p, a*f + b) is C[p][a][b]), conv biases (F), hidden
// weights (h x (F*L + 1), column j*F + p reads filter p at offset j, the
// last column reads d), hidden biases (h), output weights (h), output bias.
class CnnParams {
 public:
  CnnParams() = default;
  explicit CnnParams(const CnnShape& shape);

  const CnnShape& shape() const { return shape_; }
  std::vector<double>& values() { return values_; }
  const std::vector<double>& values() const { return values_; }

  Eigen::Map<RowMatrix> conv();
  Eigen::Map<const RowMatrix> conv() const;
  Eigen::Map<Eigen::VectorXd> conv_bias();
  Eigen::Map<const Eigen::VectorXd> conv_bias() const;
  Eigen::Map<RowMatrix> hidden();
  Eigen::Map<const RowMatrix> hidden() const;
  Eigen::Map<Eigen::VectorXd> hidden_bias();
  Eigen::Map<const Eigen::VectorXd> hidden_bias() const;
  Eigen::Map<Eigen::VectorXd> output();
  Eigen::Map<const Eigen::VectorXd> output() const;
  double& output_bias() { return values_.back(); }
  double output_bias() const { return values_.back(); }

  // Offsets into values() of each block.
  std::size_t conv_offset() const { return 0; }
  std::size_t conv_bias_offset() const;
  std::size_t hidden_offset() const;
  std::size_t hidden_bias_offset() const;
  std::size_t output_offset() const;

 private:
  CnnShape shape_;
  std::vector<double> values_;
};

struct CnnModel {
  CnnShape shape;
  Activation activation = Activation::kRelu;
  CnnParams params;
};

// Glorot-uniform weights, zero biases.
CnnModel init_model(int w, int k, int f, int filters, int hidden,
                    Activation activation, std::uint64_t seed);

// Activations retained for backpropagation over a batch of B examples.
struct ForwardCache {
  RowMatrix patches;     // (B*L) x (k*f)
  RowMatrix conv_pre;    // (B*L) x F
  RowMatrix conv_act;    // (B*L) x F
  RowMatrix dense_in;    // B x (F*L + 1)
  RowMatrix hidden_pre;  // B x h
  RowMatrix hidden_act;  // B x h
  Eigen::VectorXd output;  // B
};

struct ForwardResult {
  double prediction = 0.0;
  ForwardCache cache;
};

ForwardResult forward(const CnnModel& model, const WindowMatrix& x, double d);

// A minibatch view: examples[indices[i]] for each i.
struct CnnBatch {
  std::span<const WindowedExample> examples;
  std::span<const std::size_t> indices;
  std::size_t size() const { return indices.size(); }
};

ForwardCache forward_batch(const CnnModel& model, const CnnBatch& batch);

// ||C||_1 + ||W1||_1 and ||C||_2^2 + ||W1||_2^2.
double l1_penalty(const CnnModel& model);
double l2_penalty(const CnnModel& model);

// (1/B) sum (y - yhat)^2 + lambda1 * P1 + lambda2 * P2.
double cost(const CnnModel& model, const CnnBatch& batch, double lambda1,
            double lambda2);

// Exact gradient of cost() with respect to every parameter.
CnnParams backward(const CnnModel& model, const CnnBatch& batch,
                   double lambda1, double lambda2);

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  long step = 0;
};

AdamState make_adam_state(const CnnParams& params);

void adam_step(std::vector<double>& params, const std::vector<double>& grads,
               AdamState& state, double lr, double beta1 = 0.9,
               double beta2 = 0.999, double epsilon = 1e-8);

struct TrainConfig {
  int epochs = 250;
  double learning_rate = 0.001;
  int batch_size = 32;
  double early_stop_tolerance = 1e-4;
  int patience = 20;
  double lambda1 = 0.0;
  double lambda2 = 0.0;
  std::uint64_t seed = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  void validate() const;  // throws ArgumentError
};

struct LearningCurve {
  std::vector<double> train_cost;
  std::vector<double> train_mse;
  std::vector<double> val_mse;
  int best_epoch = 0;  // 0-based index into the vectors

  std::size_t epochs() const { return val_mse.size(); }
};

struct TrainResult {
  CnnModel model;  // parameters from the best-validation epoch
  LearningCurve curve;
};

// Minibatch Adam with per-epoch seeded shuffling. Early stopping counts
// epochs whose validation MSE fails to beat the best by more than the
// tolerance; the returned parameters are those of the lowest validation MSE.
TrainResult train(const CnnModel& initial,
                  std::span<const WindowedExample> train_set,
                  std::span<const WindowedExample> val_set,
                  const TrainConfig& config);

Eigen::VectorXd predict_cnn(const CnnModel& model,
                            std::span<const WindowedExample> examples);

// Each filter z-scored over its k*f entries (constant filters become zeros),
// then averaged entrywise over all filters. Returns k x f.
RowMatrix mean_normalized_filter(const CnnModel& model);

void write_cnn(std::ostream& out, const CnnModel& model);
CnnModel read_cnn(std::istream& in);

void write_learning_curve(std::ostream& out, const LearningCurve& curve);

}  // namespace fplcast
