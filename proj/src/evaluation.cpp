#include "fplcast/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "fplcast/error.hpp"
#include "fplcast/text_io.hpp"

namespace fplcast {

double mse(std::span<const double> y, std::span<const double> yhat) {
  if (y.size() != yhat.size()) {
    throw ShapeError("mse: " + std::to_string(y.size()) + " targets vs " +
                     std::to_string(yhat.size()) + " predictions");
  }
  if (y.empty()) throw ArgumentError("mse: empty input");
  double sum = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double r = y[i] - yhat[i];
    sum += r * r;
  }
  return sum / static_cast<double>(y.size());
}

std::vector<double> average_ranks(std::span<const double> values) {
  if (values.empty()) throw ArgumentError("average_ranks: empty input");
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return values[a] < values[b];
  });
  std::vector<double> ranks(values.size());
  std::size_t start = 0;
  while (start < order.size()) {
    std::size_t end = start + 1;
    while (end < order.size() && values[order[end]] == values[order[start]]) {
      ++end;
    }
    // Positions start+1 .. end share their mean.
    const double rank = 0.5 * static_cast<double>(start + 1 + end);
    for (std::size_t i = start; i < end; ++i) ranks[order[i]] = rank;
    start = end;
  }
  return ranks;
}

std::optional<double> spearman_tied(std::span<const double> y,
                                    std::span<const double> yhat) {
  if (y.size() != yhat.size()) {
    throw ShapeError("spearman_tied: length mismatch");
  }
  if (y.size() < 2) throw ArgumentError("spearman_tied: need n >= 2");
  const std::vector<double> ry = average_ranks(y);
  const std::vector<double> rp = average_ranks(yhat);
  const double n = static_cast<double>(y.size());
  // Both rank vectors have mean (n + 1) / 2 exactly.
  const double mean = 0.5 * (n + 1.0);
  double syp = 0.0;
  double syy = 0.0;
  double spp = 0.0;
  for (std::size_t i = 0; i < ry.size(); ++i) {
    const double a = ry[i] - mean;
    const double b = rp[i] - mean;
    syp += a * b;
    syy += a * a;
    spp += b * b;
  }
  if (syy == 0.0 || spp == 0.0) return std::nullopt;
  return syp / std::sqrt(syy * spp);
}

std::optional<double> spearman_per_gameweek(std::span<const double> y,
                                            std::span<const double> yhat,
                                            std::span<const int> gameweeks) {
  if (y.size() != yhat.size() || y.size() != gameweeks.size()) {
    throw ShapeError("spearman_per_gameweek: length mismatch");
  }
  std::map<int, std::pair<std::vector<double>, std::vector<double>>> groups;
  for (std::size_t i = 0; i < y.size(); ++i) {
    auto& group = groups[gameweeks[i]];
    group.first.push_back(y[i]);
    group.second.push_back(yhat[i]);
  }
  double sum = 0.0;
  int defined = 0;
  for (const auto& [gw, group] : groups) {
    if (group.first.size() < 2) continue;
    if (auto rho = spearman_tied(group.first, group.second)) {
      sum += *rho;
      ++defined;
    }
  }
  if (defined == 0) return std::nullopt;
  return sum / defined;
}

EvalReport make_report(Position position, SplitLabel split, std::string model,
                       std::span<const double> y,
                       std::span<const double> yhat) {
  EvalReport report;
  report.position = position;
  report.split = split;
  report.model = std::move(model);
  report.n = y.size();
  report.mse = mse(y, yhat);
  if (y.size() >= 2) report.spearman = spearman_tied(y, yhat);
  return report;
}

void write_eval_reports(std::ostream& out, std::span<const EvalReport> reports) {
  out << "\"model\",\"position\",\"split\",\"n\",\"mse\",\"spearman\"\n";
  for (const auto& r : reports) {
    text::CsvWriter row(out);
    row.text(r.model)
        .text(to_string(r.position))
        .text(to_string(r.split))
        .integer(static_cast<std::int64_t>(r.n))
        .number(r.mse);
    if (r.spearman) {
      row.number(*r.spearman);
    } else {
      row.null();
    }
    row.end_row();
  }
}

std::vector<EvalReport> read_eval_reports(std::istream& in) {
  std::vector<EvalReport> reports;
  std::string line;
  if (!text::read_line(in, line)) return reports;
  std::size_t line_number = 1;
  while (text::read_line(in, line)) {
    ++line_number;
    if (text::trim(line).empty()) continue;
    const auto f = text::split_csv_line(line);
    if (f.size() != 6) throw ParseError("eval report: expected 6 fields", line_number);
    EvalReport r;
    r.model = f[0];
    auto position = parse_position(f[1]);
    auto split = parse_split_label(f[2]);
    auto n = text::parse_int(f[3]);
    auto m = text::parse_double(f[4]);
    if (!position || !split || !n || !m) {
      throw ParseError("eval report: malformed row", line_number);
    }
    r.position = *position;
    r.split = *split;
    r.n = static_cast<std::size_t>(*n);
    r.mse = *m;
    if (!f[5].empty()) r.spearman = text::parse_double(f[5]);
    reports.push_back(std::move(r));
  }
  return reports;
}

namespace {

std::vector<std::string> model_order(std::span<const EvalReport> reports) {
  std::vector<std::string> models;
  for (const auto& r : reports) {
    if (std::find(models.begin(), models.end(), r.model) == models.end()) {
      models.push_back(r.model);
    }
  }
  return models;
}

const EvalReport* find_report(std::span<const EvalReport> reports,
                              const std::string& model, Position position) {
  for (const auto& r : reports) {
    if (r.model == model && r.position == position) return &r;
  }
  return nullptr;
}

}  // namespace

void write_mse_table(std::ostream& out, std::span<const EvalReport> reports) {
  const auto models = model_order(reports);
  text::CsvWriter header(out);
  header.text("position");
  for (const auto& m : models) header.text(m);
  header.end_row();
  std::vector<double> sums(models.size(), 0.0);
  std::vector<int> counts(models.size(), 0);
  for (Position p : kAllPositions) {
    text::CsvWriter row(out);
    row.text(to_string(p));
    for (std::size_t m = 0; m < models.size(); ++m) {
      if (const EvalReport* r = find_report(reports, models[m], p)) {
        row.number(r->mse);
        sums[m] += r->mse;
        ++counts[m];
      } else {
        row.null();
      }
    }
    row.end_row();
  }
  text::CsvWriter avg(out);
  avg.text("AVG");
  for (std::size_t m = 0; m < models.size(); ++m) {
    if (counts[m] > 0) {
      avg.number(sums[m] / counts[m]);
    } else {
      avg.null();
    }
  }
  avg.end_row();
}

void write_spearman_table(std::ostream& out,
                          std::span<const EvalReport> reports) {
  text::CsvWriter header(out);
  header.text("model");
  for (Position p : kAllPositions) header.text(to_string(p));
  header.end_row();
  for (const auto& model : model_order(reports)) {
    text::CsvWriter row(out);
    row.text(model);
    for (Position p : kAllPositions) {
      const EvalReport* r = find_report(reports, model, p);
      if (r && r->spearman) {
        row.number(*r->spearman);
      } else {
        row.null();
      }
    }
    row.end_row();
  }
}

ExtremeExamples extreme_examples(std::span<const WindowedExample> examples,
                                 std::span<const double> predictions,
                                 std::size_t k) {
  if (examples.size() != predictions.size()) {
    throw ShapeError("extreme_examples: length mismatch");
  }
  if (k > examples.size()) {
    throw ArgumentError("extreme_examples: k = " + std::to_string(k) +
                        " exceeds " + std::to_string(examples.size()) +
                        " examples");
  }
  std::vector<ExtremeEntry> entries;
  entries.reserve(examples.size());
  for (std::size_t i = 0; i < examples.size(); ++i) {
    ExtremeEntry e;
    e.index = i;
    e.y = examples[i].y;
    e.yhat = predictions[i];
    e.squared_error = (e.y - e.yhat) * (e.y - e.yhat);
    e.d = examples[i].d;
    const auto& x = examples[i].X;
    for (Eigen::Index r = 0; r < x.rows(); ++r) e.window_points.push_back(x(r, 0));
    entries.push_back(std::move(e));
  }
  ExtremeExamples out;
  auto worst = entries;
  std::stable_sort(worst.begin(), worst.end(), [](const auto& a, const auto& b) {
    return a.squared_error > b.squared_error;
  });
  worst.resize(k);
  auto best = std::move(entries);
  std::stable_sort(best.begin(), best.end(), [](const auto& a, const auto& b) {
    return a.squared_error < b.squared_error;
  });
  best.resize(k);
  out.worst = std::move(worst);
  out.best = std::move(best);
  return out;
}

void write_extreme_examples(std::ostream& out, const ExtremeExamples& extremes) {
  out << "\"kind\",\"index\",\"true\",\"predicted\",\"squared_error\",\"d\","
         "\"window_points\"\n";
  const auto emit = [&](std::string_view kind, const ExtremeEntry& e) {
    std::vector<std::string> points;
    for (double p : e.window_points) points.push_back(text::format_double(p));
    text::CsvWriter(out)
        .text(kind)
        .integer(static_cast<std::int64_t>(e.index))
        .number(e.y)
        .number(e.yhat)
        .number(e.squared_error)
        .integer(e.d)
        .text(text::join(points, " "))
        .end_row();
  };
  for (const auto& e : extremes.worst) emit("worst", e);
  for (const auto& e : extremes.best) emit("best", e);
}

std::vector<PredictionRecord> prediction_records(
    std::span<const WindowedExample> examples,
    std::span<const double> predictions) {
  if (examples.size() != predictions.size()) {
    throw ShapeError("prediction_records: length mismatch");
  }
  std::vector<PredictionRecord> records;
  records.reserve(examples.size());
  for (std::size_t i = 0; i < examples.size(); ++i) {
    records.push_back({static_cast<double>(examples[i].y), predictions[i],
                       examples[i].player.canonical_name, examples[i].season,
                       examples[i].target_gameweek, examples[i].position()});
  }
  return records;
}

void export_predictions(std::ostream& out,
                        std::span<const PredictionRecord> records) {
  out << "\"true\",\"predicted\",\"player\",\"season\",\"gameweek\","
         "\"position\"\n";
  for (const auto& r : records) {
    text::CsvWriter(out)
        .number(r.y)
        .number(r.yhat)
        .text(r.player)
        .text(r.season)
        .integer(r.gameweek)
        .text(to_string(r.position))
        .end_row();
  }
}

std::vector<PredictionRecord> read_predictions(std::istream& in) {
  std::vector<PredictionRecord> records;
  std::string line;
  if (!text::read_line(in, line)) return records;
  std::size_t line_number = 1;
  while (text::read_line(in, line)) {
    ++line_number;
    if (text::trim(line).empty()) continue;
    const auto f = text::split_csv_line(line);
    if (f.size() != 6) throw ParseError("predictions: expected 6 fields", line_number);
    auto y = text::parse_double(f[0]);
    auto yhat = text::parse_double(f[1]);
    auto gw = text::parse_int(f[4]);
    auto position = parse_position(f[5]);
    if (!y || !yhat || !gw || !position) {
      throw ParseError("predictions: malformed row", line_number);
    }
    records.push_back({*y, *yhat, f[2], f[3], static_cast<int>(*gw), *position});
  }
  return records;
}

}  // namespace fplcast
