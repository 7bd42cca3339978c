#include "fplcast/cnn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "fplcast/error.hpp"
#include "fplcast/rng.hpp"
#include "fplcast/text_io.hpp"

namespace fplcast {

std::string_view to_string(Activation activation) {
  return activation == Activation::kRelu ? "relu" : "tanh";
}

std::optional<Activation> parse_activation(std::string_view text) {
  if (text == "relu") return Activation::kRelu;
  if (text == "tanh") return Activation::kTanh;
  return std::nullopt;
}

std::size_t CnnShape::parameter_count() const {
  const auto F = static_cast<std::size_t>(filters);
  const auto h = static_cast<std::size_t>(hidden);
  return F * static_cast<std::size_t>(patch_size()) + F +
         h * static_cast<std::size_t>(dense_inputs()) + h + h + 1;
}

void CnnShape::validate() const {
  if (window < 1 || kernel < 1 || features < 1 || filters < 1 || hidden < 1) {
    throw ShapeError("cnn: all dimensions must be >= 1");
  }
  if (kernel > window) {
    throw ShapeError("cnn: kernel " + std::to_string(kernel) +
                     " exceeds window " + std::to_string(window));
  }
}

// ---------------------------------------------------------------------------
// Parameter buffer

CnnParams::CnnParams(const CnnShape& shape)
    : shape_(shape), values_(shape.parameter_count(), 0.0) {}

std::size_t CnnParams::conv_bias_offset() const {
  return static_cast<std::size_t>(shape_.filters) *
         static_cast<std::size_t>(shape_.patch_size());
}
std::size_t CnnParams::hidden_offset() const {
  return conv_bias_offset() + static_cast<std::size_t>(shape_.filters);
}
std::size_t CnnParams::hidden_bias_offset() const {
  return hidden_offset() + static_cast<std::size_t>(shape_.hidden) *
                               static_cast<std::size_t>(shape_.dense_inputs());
}
std::size_t CnnParams::output_offset() const {
  return hidden_bias_offset() + static_cast<std::size_t>(shape_.hidden);
}

Eigen::Map<RowMatrix> CnnParams::conv() {
  return {values_.data(), shape_.filters, shape_.patch_size()};
}
Eigen::Map<const RowMatrix> CnnParams::conv() const {
  return {values_.data(), shape_.filters, shape_.patch_size()};
}
Eigen::Map<Eigen::VectorXd> CnnParams::conv_bias() {
  return {values_.data() + conv_bias_offset(), shape_.filters};
}
Eigen::Map<const Eigen::VectorXd> CnnParams::conv_bias() const {
  return {values_.data() + conv_bias_offset(), shape_.filters};
}
Eigen::Map<RowMatrix> CnnParams::hidden() {
  return {values_.data() + hidden_offset(), shape_.hidden, shape_.dense_inputs()};
}
Eigen::Map<const RowMatrix> CnnParams::hidden() const {
  return {values_.data() + hidden_offset(), shape_.hidden, shape_.dense_inputs()};
}
Eigen::Map<Eigen::VectorXd> CnnParams::hidden_bias() {
  return {values_.data() + hidden_bias_offset(), shape_.hidden};
}
Eigen::Map<const Eigen::VectorXd> CnnParams::hidden_bias() const {
  return {values_.data() + hidden_bias_offset(), shape_.hidden};
}
Eigen::Map<Eigen::VectorXd> CnnParams::output() {
  return {values_.data() + output_offset(), shape_.hidden};
}
Eigen::Map<const Eigen::VectorXd> CnnParams::output() const {
  return {values_.data() + output_offset(), shape_.hidden};
}

CnnModel init_model(int w, int k, int f, int filters, int hidden,
                    Activation activation, std::uint64_t seed) {
  CnnModel model;
  model.shape = {w, k, f, filters, hidden};
  model.shape.validate();
  model.activation = activation;
  model.params = CnnParams(model.shape);
  Rng rng(mix_seed(seed, "cnn-init"));
  const auto glorot = [&](auto block, double fan_in, double fan_out) {
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    for (Eigen::Index i = 0; i < block.size(); ++i) {
      block.data()[i] = rng.uniform(-limit, limit);
    }
  };
  glorot(model.params.conv(), static_cast<double>(k) * f,
         static_cast<double>(k) * filters);
  glorot(model.params.hidden(), model.shape.dense_inputs(), hidden);
  glorot(model.params.output(), hidden, 1.0);
  return model;
}

// ---------------------------------------------------------------------------
// Forward / backward

namespace {

void activate(const RowMatrix& pre, RowMatrix& out, Activation activation) {
  if (activation == Activation::kRelu) {
    out = pre.cwiseMax(0.0);
  } else {
    out = pre.array().tanh().matrix();
  }
}

// Multiplies grad in place by the activation derivative (relu'(0) = 0).
void activation_backward(RowMatrix& grad, const RowMatrix& pre,
                         const RowMatrix& act, Activation activation) {
  if (activation == Activation::kRelu) {
    grad = (pre.array() > 0.0).select(grad, 0.0);
  } else {
    grad.array() *= 1.0 - act.array().square();
  }
}

double sign(double v) { return (v > 0.0) - (v < 0.0); }

void check_example(const CnnShape& shape, const WindowMatrix& x) {
  if (x.rows() != shape.window || x.cols() != shape.features) {
    throw ShapeError("cnn: expected " + std::to_string(shape.window) + "x" +
                     std::to_string(shape.features) + " window, got " +
                     std::to_string(x.rows()) + "x" + std::to_string(x.cols()));
  }
}

ForwardCache forward_impl(const CnnModel& model,
                          std::span<const WindowMatrix* const> windows,
                          std::span<const double> difficulty) {
  const CnnShape& s = model.shape;
  const auto B = static_cast<Eigen::Index>(windows.size());
  const Eigen::Index L = s.conv_length();
  const Eigen::Index F = s.filters;
  const Eigen::Index kf = s.patch_size();

  ForwardCache c;
  c.patches.resize(B * L, kf);
  for (Eigen::Index b = 0; b < B; ++b) {
    const WindowMatrix& x = *windows[static_cast<std::size_t>(b)];
    check_example(s, x);
    for (Eigen::Index j = 0; j < L; ++j) {
      // Row-major storage makes rows j..j+k-1 one contiguous run.
      c.patches.row(b * L + j) =
          Eigen::Map<const Eigen::RowVectorXd>(x.data() + j * s.features, kf);
    }
  }
  c.conv_pre = c.patches * model.params.conv().transpose();
  c.conv_pre.rowwise() += model.params.conv_bias().transpose();
  activate(c.conv_pre, c.conv_act, model.activation);

  c.dense_in.resize(B, F * L + 1);
  for (Eigen::Index b = 0; b < B; ++b) {
    c.dense_in.row(b).head(F * L) = Eigen::Map<const Eigen::RowVectorXd>(
        c.conv_act.data() + b * L * F, F * L);
    c.dense_in(b, F * L) = difficulty[static_cast<std::size_t>(b)];
  }
  c.hidden_pre = c.dense_in * model.params.hidden().transpose();
  c.hidden_pre.rowwise() += model.params.hidden_bias().transpose();
  activate(c.hidden_pre, c.hidden_act, model.activation);
  c.output = c.hidden_act * model.params.output();
  c.output.array() += model.params.output_bias();
  return c;
}

struct BatchViews {
  std::vector<const WindowMatrix*> windows;
  std::vector<double> difficulty;
  Eigen::VectorXd target;
};

BatchViews views(const CnnBatch& batch) {
  BatchViews v;
  v.windows.reserve(batch.size());
  v.difficulty.reserve(batch.size());
  v.target.resize(static_cast<Eigen::Index>(batch.size()));
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto& e = batch.examples[batch.indices[i]];
    v.windows.push_back(&e.X);
    v.difficulty.push_back(e.d);
    v.target[static_cast<Eigen::Index>(i)] = e.y;
  }
  return v;
}

}  // namespace

ForwardResult forward(const CnnModel& model, const WindowMatrix& x, double d) {
  const WindowMatrix* window = &x;
  ForwardResult result;
  result.cache = forward_impl(model, std::span<const WindowMatrix* const>(&window, 1),
                              std::span<const double>(&d, 1));
  result.prediction = result.cache.output[0];
  return result;
}

ForwardCache forward_batch(const CnnModel& model, const CnnBatch& batch) {
  const BatchViews v = views(batch);
  return forward_impl(model, v.windows, v.difficulty);
}

double l1_penalty(const CnnModel& model) {
  return model.params.conv().cwiseAbs().sum() +
         model.params.hidden().cwiseAbs().sum();
}

double l2_penalty(const CnnModel& model) {
  return model.params.conv().squaredNorm() +
         model.params.hidden().squaredNorm();
}

double cost(const CnnModel& model, const CnnBatch& batch, double lambda1,
            double lambda2) {
  if (batch.size() == 0) throw ArgumentError("cnn cost: empty batch");
  const BatchViews v = views(batch);
  const ForwardCache c = forward_impl(model, v.windows, v.difficulty);
  const double mse = (c.output - v.target).squaredNorm() /
                     static_cast<double>(batch.size());
  double total = mse;
  if (lambda1 != 0.0) total += lambda1 * l1_penalty(model);
  if (lambda2 != 0.0) total += lambda2 * l2_penalty(model);
  return total;
}

CnnParams backward(const CnnModel& model, const CnnBatch& batch,
                   double lambda1, double lambda2) {
  if (batch.size() == 0) throw ArgumentError("cnn backward: empty batch");
  const CnnShape& s = model.shape;
  const BatchViews v = views(batch);
  const ForwardCache c = forward_impl(model, v.windows, v.difficulty);
  const auto B = static_cast<Eigen::Index>(batch.size());
  const Eigen::Index L = s.conv_length();
  const Eigen::Index F = s.filters;

  CnnParams grad(s);
  const Eigen::VectorXd d_out =
      (2.0 / static_cast<double>(B)) * (c.output - v.target);
  grad.output() = c.hidden_act.transpose() * d_out;
  grad.output_bias() = d_out.sum();

  RowMatrix d_hidden = d_out * model.params.output().transpose();
  activation_backward(d_hidden, c.hidden_pre, c.hidden_act, model.activation);
  grad.hidden() = d_hidden.transpose() * c.dense_in;
  grad.hidden_bias() = d_hidden.colwise().sum().transpose();

  const RowMatrix d_dense_in = d_hidden * model.params.hidden();
  RowMatrix d_conv(B * L, F);
  for (Eigen::Index b = 0; b < B; ++b) {
    Eigen::Map<Eigen::RowVectorXd>(d_conv.data() + b * L * F, F * L) =
        d_dense_in.row(b).head(F * L);
  }
  activation_backward(d_conv, c.conv_pre, c.conv_act, model.activation);
  grad.conv() = d_conv.transpose() * c.patches;
  grad.conv_bias() = d_conv.colwise().sum().transpose();

  if (lambda1 != 0.0) {
    grad.conv() += lambda1 * model.params.conv().unaryExpr(&sign);
    grad.hidden() += lambda1 * model.params.hidden().unaryExpr(&sign);
  }
  if (lambda2 != 0.0) {
    grad.conv() += 2.0 * lambda2 * model.params.conv();
    grad.hidden() += 2.0 * lambda2 * model.params.hidden();
  }
  return grad;
}

// ---------------------------------------------------------------------------
// Adam

AdamState make_adam_state(const CnnParams& params) {
  AdamState state;
  state.m.assign(params.values().size(), 0.0);
  state.v.assign(params.values().size(), 0.0);
  return state;
}

void adam_step(std::vector<double>& params, const std::vector<double>& grads,
               AdamState& state, double lr, double beta1, double beta2,
               double epsilon) {
  if (grads.size() != params.size() || state.m.size() != params.size() ||
      state.v.size() != params.size()) {
    throw ShapeError("adam_step: parameter, gradient and state sizes differ");
  }
  ++state.step;
  const double correction1 = 1.0 - std::pow(beta1, static_cast<double>(state.step));
  const double correction2 = 1.0 - std::pow(beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    state.m[i] = beta1 * state.m[i] + (1.0 - beta1) * g;
    state.v[i] = beta2 * state.v[i] + (1.0 - beta2) * g * g;
    const double m_hat = state.m[i] / correction1;
    const double v_hat = state.v[i] / correction2;
    params[i] -= lr * m_hat / (std::sqrt(v_hat) + epsilon);
  }
}

// ---------------------------------------------------------------------------
// Training

void TrainConfig::validate() const {
  if (epochs < 1) throw ArgumentError("train: epochs must be >= 1");
  if (!(learning_rate > 0.0)) throw ArgumentError("train: learning_rate must be > 0");
  if (batch_size < 1) throw ArgumentError("train: batch_size must be >= 1");
  if (!(early_stop_tolerance >= 0.0)) {
    throw ArgumentError("train: early_stop_tolerance must be >= 0");
  }
  if (patience < 1) throw ArgumentError("train: patience must be >= 1");
  if (!(lambda1 >= 0.0) || !(lambda2 >= 0.0)) {
    throw ArgumentError("train: lambda1 and lambda2 must be >= 0");
  }
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0) ||
      !(epsilon > 0.0)) {
    throw ArgumentError("train: invalid Adam constants");
  }
}

Eigen::VectorXd predict_cnn(const CnnModel& model,
                            std::span<const WindowedExample> examples) {
  constexpr std::size_t kChunk = 512;
  Eigen::VectorXd out(static_cast<Eigen::Index>(examples.size()));
  std::vector<const WindowMatrix*> windows;
  std::vector<double> difficulty;
  for (std::size_t start = 0; start < examples.size(); start += kChunk) {
    const std::size_t end = std::min(examples.size(), start + kChunk);
    windows.clear();
    difficulty.clear();
    for (std::size_t i = start; i < end; ++i) {
      windows.push_back(&examples[i].X);
      difficulty.push_back(examples[i].d);
    }
    const ForwardCache c = forward_impl(model, windows, difficulty);
    out.segment(static_cast<Eigen::Index>(start),
                static_cast<Eigen::Index>(end - start)) = c.output;
  }
  return out;
}

namespace {

double dataset_mse(const CnnModel& model,
                   std::span<const WindowedExample> examples) {
  const Eigen::VectorXd pred = predict_cnn(model, examples);
  double ss = 0.0;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    const double r = pred[static_cast<Eigen::Index>(i)] - examples[i].y;
    ss += r * r;
  }
  return ss / static_cast<double>(examples.size());
}

}  // namespace

TrainResult train(const CnnModel& initial,
                  std::span<const WindowedExample> train_set,
                  std::span<const WindowedExample> val_set,
                  const TrainConfig& config) {
  config.validate();
  if (train_set.empty()) throw ArgumentError("train: empty training set");
  if (val_set.empty()) throw ArgumentError("train: empty validation set");

  CnnModel model = initial;
  AdamState adam = make_adam_state(model.params);
  TrainResult result{model, {}};
  LearningCurve& curve = result.curve;
  double best_val = std::numeric_limits<double>::infinity();
  double reference = std::numeric_limits<double>::infinity();
  int stale_epochs = 0;
  const auto batch = static_cast<std::size_t>(config.batch_size);

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    Rng rng(mix_seed(config.seed, static_cast<std::uint64_t>(epoch)));
    const std::vector<std::size_t> order = rng.permutation(train_set.size());
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t end = std::min(order.size(), start + batch);
      const CnnBatch minibatch{train_set,
                               std::span<const std::size_t>(order).subspan(
                                   start, end - start)};
      const CnnParams grad =
          backward(model, minibatch, config.lambda1, config.lambda2);
      adam_step(model.params.values(), grad.values(), adam,
                config.learning_rate, config.beta1, config.beta2,
                config.epsilon);
    }

    const double train_mse = dataset_mse(model, train_set);
    const double val_mse = dataset_mse(model, val_set);
    curve.train_mse.push_back(train_mse);
    curve.train_cost.push_back(train_mse + config.lambda1 * l1_penalty(model) +
                               config.lambda2 * l2_penalty(model));
    curve.val_mse.push_back(val_mse);

    if (val_mse < best_val) {
      best_val = val_mse;
      curve.best_epoch = epoch;
      result.model = model;
    }
    if (val_mse < reference - config.early_stop_tolerance) {
      reference = val_mse;
      stale_epochs = 0;
    } else if (++stale_epochs >= config.patience) {
      break;
    }
  }
  return result;
}

// ---------------------------------------------------------------------------
// Filters

RowMatrix mean_normalized_filter(const CnnModel& model) {
  const CnnShape& s = model.shape;
  const auto conv = model.params.conv();
  Eigen::RowVectorXd mean = Eigen::RowVectorXd::Zero(s.patch_size());
  for (Eigen::Index p = 0; p < conv.rows(); ++p) {
    const Eigen::RowVectorXd filter = conv.row(p);
    const double mu = filter.mean();
    const double sigma =
        std::sqrt((filter.array() - mu).square().sum() /
                  static_cast<double>(filter.size()));
    if (sigma > 0.0) mean += ((filter.array() - mu) / sigma).matrix();
  }
  mean /= static_cast<double>(conv.rows());
  return Eigen::Map<const RowMatrix>(mean.data(), s.kernel, s.features);
}

// ---------------------------------------------------------------------------
// Serialization

namespace {

void write_block(std::ostream& out, std::string_view name, const double* data,
                 Eigen::Index rows, Eigen::Index cols) {
  out << name << ' ' << rows << ' ' << cols << '\n';
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) {
      if (c) out << ' ';
      out << text::format_double(data[r * cols + c]);
    }
    out << '\n';
  }
}

void read_block(std::istream& in, std::string_view name, double* data,
                Eigen::Index rows, Eigen::Index cols) {
  std::string tag;
  Eigen::Index r = 0;
  Eigen::Index c = 0;
  in >> tag >> r >> c;
  if (tag != name || r != rows || c != cols) {
    throw SchemaError("cnn model: expected block '" + std::string(name) + "'");
  }
  std::string token;
  for (Eigen::Index i = 0; i < rows * cols; ++i) {
    in >> token;
    auto v = text::parse_double(token);
    if (!v) throw SchemaError("cnn model: bad value in block " + std::string(name));
    data[i] = *v;
  }
}

}  // namespace

void write_cnn(std::ostream& out, const CnnModel& model) {
  const CnnShape& s = model.shape;
  const CnnParams& p = model.params;
  out << "cnn_version 1\n";
  out << "window " << s.window << "\nkernel " << s.kernel << "\nfeatures "
      << s.features << "\nfilters " << s.filters << "\nhidden " << s.hidden
      << "\nactivation " << to_string(model.activation) << '\n';
  write_block(out, "conv", p.conv().data(), s.filters, s.patch_size());
  write_block(out, "conv_bias", p.conv_bias().data(), 1, s.filters);
  write_block(out, "hidden", p.hidden().data(), s.hidden, s.dense_inputs());
  write_block(out, "hidden_bias", p.hidden_bias().data(), 1, s.hidden);
  write_block(out, "output", p.output().data(), 1, s.hidden);
  const double bias = p.output_bias();
  write_block(out, "output_bias", &bias, 1, 1);
}

CnnModel read_cnn(std::istream& in) {
  CnnModel model;
  std::string key;
  int version = 0;
  in >> key >> version;
  if (key != "cnn_version") throw SchemaError("not a cnn model");
  CnnShape& s = model.shape;
  std::string activation;
  in >> key >> s.window >> key >> s.kernel >> key >> s.features >> key >>
      s.filters >> key >> s.hidden >> key >> activation;
  if (!in) throw SchemaError("cnn model: truncated header");
  s.validate();
  auto act = parse_activation(activation);
  if (!act) throw SchemaError("cnn model: unknown activation " + activation);
  model.activation = *act;
  model.params = CnnParams(s);
  CnnParams& p = model.params;
  read_block(in, "conv", p.conv().data(), s.filters, s.patch_size());
  read_block(in, "conv_bias", p.conv_bias().data(), 1, s.filters);
  read_block(in, "hidden", p.hidden().data(), s.hidden, s.dense_inputs());
  read_block(in, "hidden_bias", p.hidden_bias().data(), 1, s.hidden);
  read_block(in, "output", p.output().data(), 1, s.hidden);
  read_block(in, "output_bias", &p.output_bias(), 1, 1);
  return model;
}

void write_learning_curve(std::ostream& out, const LearningCurve& curve) {
  out << "\"epoch\",\"train_cost\",\"train_mse\",\"val_mse\"\n";
  for (std::size_t e = 0; e < curve.epochs(); ++e) {
    text::CsvWriter(out)
        .integer(static_cast<std::int64_t>(e + 1))
        .number(curve.train_cost[e])
        .number(curve.train_mse[e])
        .number(curve.val_mse[e])
        .end_row();
  }
}

}  // namespace fplcast
