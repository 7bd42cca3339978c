#include <sstream>

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "fplcast/cli.hpp"
#include "fplcast/dataset.hpp"
#include "fplcast/evaluation.hpp"
#include "fplcast/gbm.hpp"
#include "fplcast/ingest.hpp"
#include "fplcast/ridge.hpp"

namespace py = pybind11;
using namespace fplcast;

namespace {

py::tuple synthetic_csv(std::uint64_t seed, int players, int weeks,
                        const std::string& season) {
  const SyntheticSeason s = generate_synthetic_season(seed, players, weeks, {}, season);
  std::ostringstream rows;
  std::ostringstream strengths;
  write_gameweek_csv(rows, s.rows);
  write_team_strengths(strengths, s.strengths);
  return py::make_tuple(rows.str(), strengths.str());
}

py::tuple cli(const std::vector<std::string>& args) {
  std::ostringstream out;
  std::ostringstream err;
  int code = 0;
  {
    py::gil_scoped_release release;
    code = run_cli(args, out, err);
  }
  return py::make_tuple(code, out.str(), err.str());
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Fantasy points forecasting core";

  py::register_exception<Error>(m, "FplcastError", PyExc_RuntimeError);

  m.def("canonicalize_name", &canonicalize_name, py::arg("name"));
  m.def("token_sort_similarity", &token_sort_similarity, py::arg("a"), py::arg("b"));
  m.def(
      "fuzzy_match",
      [](const std::string& query, const std::vector<std::string>& candidates,
         double threshold) -> py::object {
        auto match = fuzzy_match(query, candidates, threshold);
        if (!match) return py::none();
        return py::make_tuple(match->candidate, match->score);
      },
      py::arg("query"), py::arg("candidates"),
      py::arg("threshold") = kDefaultFuzzyThreshold);

  m.def(
      "mse",
      [](const std::vector<double>& y, const std::vector<double>& yhat) {
        return mse(y, yhat);
      },
      py::arg("y"), py::arg("yhat"));
  m.def(
      "average_ranks",
      [](const std::vector<double>& v) { return average_ranks(v); },
      py::arg("values"));
  m.def(
      "spearman_tied",
      [](const std::vector<double>& y, const std::vector<double>& yhat) {
        return spearman_tied(y, yhat);
      },
      py::arg("y"), py::arg("yhat"));

  py::class_<RidgeModel>(m, "RidgeModel")
      .def_readonly("weights", &RidgeModel::weights)
      .def_readonly("intercept", &RidgeModel::intercept)
      .def_readonly("lambda_", &RidgeModel::lambda)
      .def_readonly("feature_names", &RidgeModel::feature_names)
      .def("predict", [](const RidgeModel& model, const Eigen::MatrixXd& x) {
        return predict_ridge(model, x);
      });
  m.def(
      "fit_ridge",
      [](const Eigen::MatrixXd& x, const Eigen::VectorXd& y, double lambda) {
        return fit_ridge(x, y, lambda);
      },
      py::arg("x"), py::arg("y"), py::arg("lambda_"));

  py::class_<GbmHyperparams>(m, "GbmHyperparams")
      .def(py::init<>())
      .def_readwrite("n_trees", &GbmHyperparams::n_trees)
      .def_readwrite("max_depth", &GbmHyperparams::max_depth)
      .def_readwrite("lambda_l2", &GbmHyperparams::lambda_l2)
      .def_readwrite("num_leaves", &GbmHyperparams::num_leaves)
      .def_readwrite("min_data_in_leaf", &GbmHyperparams::min_data_in_leaf)
      .def_readwrite("eta", &GbmHyperparams::eta);
  py::class_<GbmModel>(m, "GbmModel")
      .def_readonly("base_score", &GbmModel::base_score)
      .def_readonly("eta", &GbmModel::eta)
      .def_property_readonly("n_trees",
                             [](const GbmModel& g) { return g.trees.size(); })
      .def("predict", [](const GbmModel& g, const Eigen::MatrixXd& x) {
        return predict_gbm(g, x);
      });
  m.def(
      "fit_gbm",
      [](const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
         const GbmHyperparams& hp) { return fit_gbm(x, y, hp); },
      py::arg("x"), py::arg("y"), py::arg("hyperparams") = GbmHyperparams{});
  m.def(
      "shapley_values",
      [](const GbmModel& g, const std::vector<double>& x,
         const Eigen::MatrixXd& background) {
        const ShapleyResult r = shapley_values(g, x, background);
        return py::make_tuple(r.base_value, r.phi, r.prediction);
      },
      py::arg("model"), py::arg("x"), py::arg("background"));

  m.def("synthetic_csv", &synthetic_csv, py::arg("seed"), py::arg("players") = 200,
        py::arg("weeks") = 38, py::arg("season") = "synthetic",
        "Synthetic season as (gameweek CSV text, strengths CSV text).");
  m.def("run_cli", &cli, py::arg("args"),
        "Runs one command; returns (exit status, stdout, stderr).");
}
