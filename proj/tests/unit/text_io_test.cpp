#include <sstream>

#include <gtest/gtest.h>

#include "fplcast/text_io.hpp"

namespace text = fplcast::text;

TEST(SplitCsvLine, PlainFields) {
  EXPECT_EQ(text::split_csv_line("a,b,,c"),
            (std::vector<std::string>{"a", "b", "", "c"}));
}

TEST(SplitCsvLine, QuotedCommaAndDoubledQuote) {
  EXPECT_EQ(text::split_csv_line(R"("a, b","say ""hi""",3)"),
            (std::vector<std::string>{"a, b", "say \"hi\"", "3"}));
}

TEST(ReadLine, StripsCarriageReturn) {
  std::istringstream in("x,y\r\nz\n");
  std::string line;
  ASSERT_TRUE(text::read_line(in, line));
  EXPECT_EQ(line, "x,y");
  ASSERT_TRUE(text::read_line(in, line));
  EXPECT_EQ(line, "z");
  EXPECT_FALSE(text::read_line(in, line));
}

TEST(FormatDouble, SeventeenSignificantDigits) {
  EXPECT_EQ(text::format_double(12.0), "12");
  EXPECT_EQ(text::format_double(0.5), "0.5");
  EXPECT_EQ(text::format_double(-1.25), "-1.25");
  EXPECT_EQ(text::format_double(0.1), "0.10000000000000001");
  EXPECT_EQ(text::format_double(-0.0), "0");
}

TEST(FormatDouble, RoundTripsExactly) {
  for (double v : {1.0 / 3.0, 2.718281828459045, 1e-300, 6.02214076e23, -7.5e-9}) {
    EXPECT_EQ(*text::parse_double(text::format_double(v)), v);
  }
}

TEST(CsvWriter, QuotesTextOnly) {
  std::ostringstream out;
  text::CsvWriter w(out);
  w.text("o\"k").number(1.5).integer(-3).null();
  w.end_row();
  EXPECT_EQ(out.str(), "\"o\"\"k\",1.5,-3,\n");
}

TEST(Parse, RejectsTrailingGarbage) {
  EXPECT_FALSE(text::parse_double("1.5x").has_value());
  EXPECT_FALSE(text::parse_int("12.5").has_value());
  EXPECT_EQ(*text::parse_int("3.0"), 3);
  EXPECT_FALSE(text::parse_int("").has_value());
  EXPECT_EQ(*text::parse_int(" 42 "), 42);
}

TEST(Strings, TrimSplitJoin) {
  EXPECT_EQ(text::trim("  a b \t"), "a b");
  const auto parts = text::split("a;b;;c", ';');
  EXPECT_EQ(parts, (std::vector<std::string>{"a", "b", "", "c"}));
  EXPECT_EQ(text::join(parts, "|"), "a|b||c");
}
