#include <gtest/gtest.h>

#include <sstream>

#include "prefer/plot.hpp"

using namespace prefer;
using namespace prefer::plot;

namespace {

Table parse(const std::string& text) {
  std::istringstream in(text);
  return read_csv(in);
}

std::size_t count(const std::string& hay, const std::string& needle) {
  std::size_t n = 0;
  for (auto p = hay.find(needle); p != std::string::npos; p = hay.find(needle, p + 1)) ++n;
  return n;
}

const char* kAggregate =
    "round,arm,seeds,A_pref_mean,A_pref_min,A_pref_max\n"
    "1,prefer-mmr,2,0.3,0.2,0.4\n"
    "2,prefer-mmr,2,0.5,0.4,0.6\n"
    "1,static-mmr,2,0.3,0.3,0.3\n"
    "2,static-mmr,2,0.3,0.3,0.3\n";

}  // namespace

TEST(Csv, ParsesHeaderAndRows) {
  const auto t = parse("a,b,c\r\n1,2,3\n\n4,5,\n");
  EXPECT_EQ(t.header, (std::vector<std::string>{"a", "b", "c"}));
  ASSERT_EQ(t.rows.size(), 2u);
  EXPECT_EQ(t.rows[1][2], "");
  EXPECT_EQ(*t.column("c"), 2u);
  EXPECT_FALSE(t.column("d"));
}

TEST(Csv, RaggedRowNamesLine) {
  try {
    parse("a,b\n1,2\n3\n");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::parse_error);
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos);
  }
  EXPECT_THROW(parse(""), Error);
}

TEST(Series, AggregateGivesBandsPerArm) {
  const auto s = extract_series(parse(kAggregate), "A_pref");
  ASSERT_EQ(s.size(), 2u);
  EXPECT_EQ(s[0].label, "prefer-mmr");
  EXPECT_EQ(s[0].y, (std::vector<double>{0.3, 0.5}));
  EXPECT_EQ(s[0].hi, (std::vector<double>{0.4, 0.6}));
}

TEST(Series, RunFileLabelsBySeed) {
  const auto s = extract_series(
      parse("round,arm,seed,A_pref\n1,prefer-gumbel,3,0.1\n2,prefer-gumbel,3,0.2\n"), "A_pref");
  ASSERT_EQ(s.size(), 1u);
  EXPECT_EQ(s[0].label, "prefer-gumbel seed 3");
  EXPECT_TRUE(s[0].lo.empty());
}

TEST(Series, MissingMetricOrBadNumber) {
  EXPECT_THROW(extract_series(parse(kAggregate), "regret_avg"), Error);
  EXPECT_THROW(extract_series(parse("round,arm,x\n1,a,zz\n"), "x"), Error);
}

TEST(Svg, OneLineAndBandPerSeries) {
  ChartOptions opt;
  opt.title = "A & B <test>";
  const auto svg = render_svg(extract_series(parse(kAggregate), "A_pref"), opt);
  EXPECT_EQ(svg.rfind("<svg", 0), 0u);
  EXPECT_EQ(count(svg, "<polyline"), 2u);
  EXPECT_EQ(count(svg, "<polygon"), 2u);
  EXPECT_NE(svg.find("A &amp; B &lt;test&gt;"), std::string::npos);
  EXPECT_NE(svg.find("static-mmr"), std::string::npos);
  EXPECT_EQ(svg.find("nan"), std::string::npos);
}

TEST(Svg, EmptyInputIsError) { EXPECT_THROW(render_svg({}, {}), Error); }
