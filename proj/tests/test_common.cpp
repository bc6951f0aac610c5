#include <cmath>
#include <limits>
#include <random>

#include "support.hpp"
#include "trafficview/common.hpp"
#include "trafficview/error.hpp"

using namespace trafficview;

TEST(Hash, Fnv1aKnownVectors) {
  EXPECT_EQ(fnv1a64(""), 0xcbf29ce484222325ULL);
  EXPECT_EQ(fnv1a64("a"), 0xaf63dc4c8601ec8cULL);
}

TEST(Hash, Mix64Spreads) {
  EXPECT_NE(mix64(1), mix64(2));
  EXPECT_EQ(mix64(42), mix64(42));
}

TEST(Csv, SplitQuoted) {
  const auto f = csv::split_line(R"(a,"b,c","say ""hi""",)");
  ASSERT_EQ(f.size(), 4u);
  EXPECT_EQ(f[1], "b,c");
  EXPECT_EQ(f[2], "say \"hi\"");
  EXPECT_EQ(f[3], "");
}

TEST(Csv, EscapeRoundTrip) {
  std::mt19937 rng(3);
  const std::string alphabet = "ab,\" x\n";
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<std::string> fields(1 + rng() % 4);
    for (auto& f : fields)
      for (unsigned k = rng() % 6; k > 0; --k) f.push_back(alphabet[rng() % (alphabet.size() - 1)]);
    EXPECT_EQ(csv::split_line(csv::join(fields)), fields);
  }
}

TEST(Csv, HeaderMismatchIsParseError) {
  tvtest::TempDir dir;
  tvtest::write_file(dir.str("x.csv"), "a,b\n1,2\n");
  EXPECT_THROW(csv::read_file(dir.str("x.csv"), {"a", "c"}), ParseError);
  EXPECT_EQ(csv::read_file(dir.str("x.csv"), {"a", "b"}).size(), 1u);
  EXPECT_THROW(csv::read_file(dir.str("missing.csv"), {"a"}), IoError);
}

TEST(Format, ShortestRoundTrip) {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(-1e6, 1e6);
  for (int i = 0; i < 1000; ++i) {
    const double v = u(rng);
    EXPECT_EQ(std::stod(format_double(v)), v);
  }
  EXPECT_EQ(format_double(2.0), "2");
  EXPECT_EQ(format_fixed(-1.0, 2), "-1.00");
}

TEST(Dates, EpochAndWeekday) {
  EXPECT_EQ(parse_date("1970-01-01"), 0);
  EXPECT_EQ(day_of_week(0), 3);  // Thursday
  EXPECT_EQ(format_date(parse_date("2024-02-05")), "2024-02-05");
  EXPECT_EQ(day_of_week(parse_date("2024-02-05")), 0);
  EXPECT_EQ(day_of_week(parse_date("2025-02-03")), 0);
  EXPECT_THROW(parse_date("2024-13-01"), InvalidArgument);
  EXPECT_THROW(parse_date("yesterday"), InvalidArgument);
}

TEST(Dates, FloorDivNegative) {
  EXPECT_EQ(floor_div(-1, 86400), -1);
  EXPECT_EQ(floor_div(86399, 86400), 0);
  EXPECT_EQ(floor_div(-86400, 86400), -1);
}

TEST(Strings, TrimAndLower) {
  EXPECT_EQ(trim("  a b \n"), "a b");
  EXPECT_EQ(to_lower("MiXeD"), "mixed");
}
