#pragma once

#include <cstdint>
#include <istream>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

// Small CSV and number-formatting helpers shared by every on-disk format.

namespace fplcast::text {

// Splits one CSV record. Handles RFC 4180 quoting ("a, b" and doubled quotes).
std::vector<std::string> split_csv_line(std::string_view line);

// Reads one logical line, stripping a trailing '\r'. Returns false at EOF.
bool read_line(std::istream& in, std::string& line);

// Fixed 17-significant-digit rendering; integral values print without
// exponent or trailing zeros ("12", "0.5", "-1.25").
std::string format_double(double value);

std::string quote(std::string_view field);

// Writes a CSV row where every text field is quoted and numbers are not.
class CsvWriter {
 public:
  explicit CsvWriter(std::ostream& out) : out_(out) {}

  CsvWriter& text(std::string_view value);
  CsvWriter& number(double value);
  CsvWriter& integer(std::int64_t value);
  CsvWriter& null();
  void end_row();

 private:
  void separator();

  std::ostream& out_;
  bool first_ = true;
};

void write_header(std::ostream& out, std::span<const std::string> names);

std::optional<double> parse_double(std::string_view text);
std::optional<std::int64_t> parse_int(std::string_view text);

std::string trim(std::string_view text);
std::vector<std::string> split(std::string_view text, char sep);
std::string join(std::span<const std::string> parts, std::string_view sep);

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& contents);

}  // namespace fplcast::text
