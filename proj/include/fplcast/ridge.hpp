#pragma once

#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fplcast/ingest.hpp"

namespace fplcast {

// L2-regularized linear model with an unpenalized intercept.
struct RidgeModel {
  Eigen::VectorXd weights;
  double intercept = 0.0;
  double lambda = 0.0;
  std::vector<std::string> feature_names;
};

// Solves (A^T A + lambda I) beta = A^T y on column-centered A and y, then
// recovers intercept = mean(y) - mean(A) . beta.
RidgeModel fit_ridge(const Eigen::MatrixXd& design, const Eigen::VectorXd& y,
                     double lambda, std::vector<std::string> feature_names = {});

double predict_ridge(const RidgeModel& model, const Eigen::VectorXd& x);
Eigen::VectorXd predict_ridge(const RidgeModel& model,
                              const Eigen::MatrixXd& design);

void write_ridge(std::ostream& out, const RidgeModel& model);
RidgeModel read_ridge(std::istream& in);

// Coefficient heatmap data: one row per position, in GK, DEF, MID, FWD order.
struct CoefficientTable {
  std::vector<std::string> feature_names;
  std::vector<Position> positions;
  std::vector<std::vector<double>> weights;
  std::vector<double> intercepts;

  bool operator==(const CoefficientTable&) const = default;
};

CoefficientTable export_coefficients(
    const std::vector<std::pair<Position, RidgeModel>>& models);

void write_coefficient_table(std::ostream& out, const CoefficientTable& table);
CoefficientTable read_coefficient_table(std::istream& in);

}  // namespace fplcast
