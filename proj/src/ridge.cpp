#include "fplcast/ridge.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "fplcast/error.hpp"
#include "fplcast/text_io.hpp"

namespace fplcast {

RidgeModel fit_ridge(const Eigen::MatrixXd& design, const Eigen::VectorXd& y,
                     double lambda, std::vector<std::string> feature_names) {
  if (design.rows() < 1) throw ArgumentError("fit_ridge: no examples");
  if (design.rows() != y.size()) {
    throw ShapeError("fit_ridge: design has " + std::to_string(design.rows()) +
                     " rows but y has " + std::to_string(y.size()));
  }
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) {
    throw ArgumentError("fit_ridge: lambda must be finite and >= 0");
  }
  if (!design.allFinite() || !y.allFinite()) {
    throw NumericError("fit_ridge: non-finite input");
  }
  if (feature_names.empty()) {
    for (Eigen::Index j = 0; j < design.cols(); ++j) {
      feature_names.push_back("x" + std::to_string(j));
    }
  }
  if (static_cast<Eigen::Index>(feature_names.size()) != design.cols()) {
    throw ShapeError("fit_ridge: feature_names length does not match columns");
  }

  const Eigen::RowVectorXd x_mean = design.colwise().mean();
  const double y_mean = y.mean();
  const Eigen::MatrixXd centered = design.rowwise() - x_mean;
  const Eigen::VectorXd y_centered = y.array() - y_mean;

  Eigen::MatrixXd gram = centered.transpose() * centered;
  gram.diagonal().array() += lambda;
  const Eigen::VectorXd rhs = centered.transpose() * y_centered;

  const Eigen::LDLT<Eigen::MatrixXd> ldlt(gram);
  const auto pivots = ldlt.vectorD();
  const double scale = std::max(1.0, gram.diagonal().cwiseAbs().maxCoeff());
  const bool singular =
      ldlt.info() != Eigen::Success ||
      (pivots.size() > 0 && pivots.minCoeff() <= 1e-12 * scale);
  if (singular) {
    throw NumericError(
        "fit_ridge: normal equations are singular; use lambda > 0");
  }

  RidgeModel model;
  model.weights = ldlt.solve(rhs);
  model.intercept = y_mean - x_mean.dot(model.weights);
  model.lambda = lambda;
  model.feature_names = std::move(feature_names);
  return model;
}

double predict_ridge(const RidgeModel& model, const Eigen::VectorXd& x) {
  if (x.size() != model.weights.size()) {
    throw ShapeError("predict_ridge: expected " +
                     std::to_string(model.weights.size()) + " features, got " +
                     std::to_string(x.size()));
  }
  return model.intercept + model.weights.dot(x);
}

Eigen::VectorXd predict_ridge(const RidgeModel& model,
                              const Eigen::MatrixXd& design) {
  if (design.cols() != model.weights.size()) {
    throw ShapeError("predict_ridge: column count mismatch");
  }
  return (design * model.weights).array() + model.intercept;
}

void write_ridge(std::ostream& out, const RidgeModel& model) {
  out << "ridge_version 1\n";
  out << "lambda " << text::format_double(model.lambda) << '\n';
  out << "intercept " << text::format_double(model.intercept) << '\n';
  out << "features " << model.feature_names.size() << '\n';
  for (std::size_t j = 0; j < model.feature_names.size(); ++j) {
    out << "weight " << model.feature_names[j] << ' '
        << text::format_double(model.weights[static_cast<Eigen::Index>(j)])
        << '\n';
  }
}

RidgeModel read_ridge(std::istream& in) {
  RidgeModel model;
  std::string key;
  std::size_t count = 0;
  in >> key;
  if (key != "ridge_version") throw SchemaError("not a ridge model");
  int version = 0;
  in >> version;
  while (in >> key) {
    if (key == "lambda") {
      in >> model.lambda;
    } else if (key == "intercept") {
      std::string v;
      in >> v;
      model.intercept = text::parse_double(v).value_or(0.0);
    } else if (key == "features") {
      in >> count;
      model.weights.resize(static_cast<Eigen::Index>(count));
      for (std::size_t j = 0; j < count; ++j) {
        std::string tag, name, v;
        in >> tag >> name >> v;
        auto value = text::parse_double(v);
        if (tag != "weight" || !value) throw SchemaError("bad ridge weight line");
        model.feature_names.push_back(name);
        model.weights[static_cast<Eigen::Index>(j)] = *value;
      }
      break;
    } else {
      throw SchemaError("unknown ridge key '" + key + "'");
    }
  }
  return model;
}

CoefficientTable export_coefficients(
    const std::vector<std::pair<Position, RidgeModel>>& models) {
  CoefficientTable table;
  if (models.empty()) return table;
  auto ordered = models;
  std::stable_sort(ordered.begin(), ordered.end(),
                   [](const auto& a, const auto& b) { return a.first < b.first; });
  table.feature_names = ordered.front().second.feature_names;
  for (const auto& [position, model] : ordered) {
    if (model.feature_names != table.feature_names) {
      throw ArgumentError(
          "export_coefficients: models disagree on feature ordering");
    }
    table.positions.push_back(position);
    table.weights.emplace_back(model.weights.data(),
                               model.weights.data() + model.weights.size());
    table.intercepts.push_back(model.intercept);
  }
  return table;
}

void write_coefficient_table(std::ostream& out, const CoefficientTable& table) {
  text::CsvWriter header(out);
  header.text("position");
  for (const auto& name : table.feature_names) header.text(name);
  header.text("intercept").end_row();
  for (std::size_t i = 0; i < table.positions.size(); ++i) {
    text::CsvWriter row(out);
    row.text(to_string(table.positions[i]));
    for (double w : table.weights[i]) row.number(w);
    row.number(table.intercepts[i]).end_row();
  }
}

CoefficientTable read_coefficient_table(std::istream& in) {
  CoefficientTable table;
  std::string line;
  if (!text::read_line(in, line)) throw SchemaError("empty coefficient table");
  auto header = text::split_csv_line(line);
  if (header.size() < 2 || header.front() != "position" ||
      header.back() != "intercept") {
    throw SchemaError("coefficient table: unexpected header");
  }
  table.feature_names.assign(header.begin() + 1, header.end() - 1);
  std::size_t line_number = 1;
  while (text::read_line(in, line)) {
    ++line_number;
    if (text::trim(line).empty()) continue;
    const auto fields = text::split_csv_line(line);
    if (fields.size() != header.size()) {
      throw ParseError("coefficient table: wrong field count", line_number);
    }
    auto position = parse_position(fields.front());
    if (!position) throw ParseError("unknown position", line_number);
    table.positions.push_back(*position);
    std::vector<double> weights;
    for (std::size_t j = 1; j + 1 < fields.size(); ++j) {
      auto v = text::parse_double(fields[j]);
      if (!v) throw ParseError("bad coefficient", line_number);
      weights.push_back(*v);
    }
    table.weights.push_back(std::move(weights));
    auto intercept = text::parse_double(fields.back());
    if (!intercept) throw ParseError("bad intercept", line_number);
    table.intercepts.push_back(*intercept);
  }
  return table;
}

}  // namespace fplcast
