#pragma once

#include <istream>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "fplcast/dataset.hpp"
#include "fplcast/ingest.hpp"

namespace fplcast {

double mse(std::span<const double> y, std::span<const double> yhat);

// Ranks 1..n; tied values share the mean of the positions they occupy.
std::vector<double> average_ranks(std::span<const double> values);

// Pearson correlation of average ranks with population moments. Empty
// optional when either side has zero rank variance (all values tied).
std::optional<double> spearman_tied(std::span<const double> y,
                                    std::span<const double> yhat);

// Spearman computed within each gameweek group and averaged over the groups
// where it is defined. Groups with fewer than two examples are skipped.
std::optional<double> spearman_per_gameweek(std::span<const double> y,
                                            std::span<const double> yhat,
                                            std::span<const int> gameweeks);

struct EvalReport {
  Position position = Position::kMID;
  SplitLabel split = SplitLabel::kValidation;
  std::size_t n = 0;
  double mse = 0.0;
  std::optional<double> spearman;
  std::string model;
};

EvalReport make_report(Position position, SplitLabel split, std::string model,
                       std::span<const double> y, std::span<const double> yhat);

void write_eval_reports(std::ostream& out, std::span<const EvalReport> reports);
std::vector<EvalReport> read_eval_reports(std::istream& in);

// Positions as rows (GK, DEF, MID, FWD, AVG), models as columns, MSE cells.
// AVG is the unweighted mean over the positions present for that model.
void write_mse_table(std::ostream& out, std::span<const EvalReport> reports);
// Models as rows, positions as columns, Spearman cells (empty when null).
void write_spearman_table(std::ostream& out,
                          std::span<const EvalReport> reports);

struct ExtremeEntry {
  std::size_t index = 0;  // position in the evaluated example list
  double y = 0.0;
  double yhat = 0.0;
  double squared_error = 0.0;
  int d = 0;
  std::vector<double> window_points;  // oldest week first
};

struct ExtremeExamples {
  std::vector<ExtremeEntry> worst;  // descending squared error
  std::vector<ExtremeEntry> best;   // ascending squared error
};

// Examples must be unscaled so that column 0 reads weekly points.
ExtremeExamples extreme_examples(std::span<const WindowedExample> examples,
                                 std::span<const double> predictions,
                                 std::size_t k);

void write_extreme_examples(std::ostream& out, const ExtremeExamples& extremes);

struct PredictionRecord {
  double y = 0.0;
  double yhat = 0.0;
  std::string player;
  std::string season;
  int gameweek = 0;
  Position position = Position::kMID;

  bool operator==(const PredictionRecord&) const = default;
};

std::vector<PredictionRecord> prediction_records(
    std::span<const WindowedExample> examples,
    std::span<const double> predictions);

void export_predictions(std::ostream& out,
                        std::span<const PredictionRecord> records);
std::vector<PredictionRecord> read_predictions(std::istream& in);

}  // namespace fplcast
