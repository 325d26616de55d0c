#include <gtest/gtest.h>

#include "multical/csv.hpp"
#include "multical/error.hpp"

using namespace multical;

TEST(Csv, ParsesRecord) {
  const auto p = parse_csv("IDpol,ClaimNb,Exposure,Area\n1,1,0.5,A\n2,0,1,\"B\"\n", {});
  ASSERT_EQ(p.size(), 2u);
  EXPECT_DOUBLE_EQ(p.frequency()[0], 2.0);
  EXPECT_EQ(p.feature("Area").text[1], "B");
}

TEST(Csv, ZeroExposureIsRowError) {
  try {
    parse_csv("IDpol,ClaimNb,Exposure\n1,0,1\n2,0,0\n", {});
    FAIL();
  } catch (const ValidationError& e) {
    ASSERT_TRUE(e.row().has_value());
    EXPECT_EQ(*e.row(), 1u);
  }
}

TEST(Csv, MissingColumnNamed) {
  try {
    parse_csv("IDpol,Exposure\n1,1\n", {});
    FAIL();
  } catch (const SchemaError& e) {
    EXPECT_EQ(e.column(), "ClaimNb");
  }
}

TEST(Csv, UnparseableNumberIsRowError) {
  EXPECT_THROW(parse_csv("IDpol,ClaimNb,Exposure\n1,x,1\n", {}), ValidationError);
}

TEST(Csv, RoundTrip) {
  CsvSchema schema;
  schema.sensitive_column = "Group";
  schema.premium_column = "pi";
  const std::string text =
      "IDpol,ClaimNb,Exposure,VehAge,Group,pi,split\n"
      "a,0,0.1,3.25,g1,0.123456789012345678,train\n"
      "b,2,1,11,g2,0.3,test\n"
      "c,1,0.33333333333333331,0.1,g1,1e-7,validation\n";
  const auto p = parse_csv(text, schema);
  const auto q = parse_csv(to_csv(p), schema);
  ASSERT_EQ(p.size(), q.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    EXPECT_EQ(p.ids()[i], q.ids()[i]);
    EXPECT_EQ(p.claims()[i], q.claims()[i]);
    EXPECT_EQ(p.exposure()[i], q.exposure()[i]);
    EXPECT_EQ(p.baseline()[i], q.baseline()[i]);
    EXPECT_EQ(p.fold(i), q.fold(i));
    EXPECT_EQ(p.sensitive().codes[i], q.sensitive().codes[i]);
    EXPECT_EQ(p.feature("VehAge").numeric[i], q.feature("VehAge").numeric[i]);
  }
  EXPECT_EQ(to_csv(p), to_csv(q));
}

TEST(Csv, SensitiveEdgesBinNumericColumn) {
  CsvSchema schema;
  schema.sensitive_column = "VehAge";
  schema.sensitive_edges = {3, 9};
  const auto p = parse_csv("IDpol,ClaimNb,Exposure,VehAge\n1,0,1,2\n2,0,1,9\n3,0,1,25\n", schema);
  const auto& s = p.sensitive();
  ASSERT_EQ(s.kind, SensitiveKind::categorical);
  EXPECT_EQ(s.levels[static_cast<std::size_t>(s.codes[0])], "(0,3]");
  EXPECT_EQ(s.levels[static_cast<std::size_t>(s.codes[1])], "(3,9]");
  EXPECT_EQ(s.levels[static_cast<std::size_t>(s.codes[2])], ">9");
}

TEST(Csv, CapClaims) {
  CsvSchema schema;
  schema.cap_claims = 2.0;
  const auto p = parse_csv("IDpol,ClaimNb,Exposure\n1,5,1\n", schema);
  EXPECT_EQ(p.claims()[0], 2.0);
}

TEST(Csv, FormatDoubleRoundTrips) {
  for (double v : {0.1, 1.0 / 3.0, 1e-300, 123456789.123456789}) {
    EXPECT_EQ(std::stod(format_double(v)), v);
  }
}
