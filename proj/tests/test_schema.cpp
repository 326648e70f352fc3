#include <gtest/gtest.h>

#include <cmath>

#include "strucdiff/dataset_io.hpp"
#include "strucdiff/errors.hpp"
#include "strucdiff/rng.hpp"
#include "strucdiff/schema.hpp"
#include "test_support.hpp"

namespace strucdiff {
namespace {

using testing::mixed_schema;

TEST(Schema, FlatNumericDocument) {
  const EntitySchema s = load_schema(R"({"kind":"composite","children":{"a":{"kind":"numerical"},"b":{"kind":"numerical"}}})");
  EXPECT_EQ(s.size(), 2);
  EXPECT_EQ(s.leaf(0).path, "a");
  EXPECT_EQ(s.leaf(1).path, "b");
}

TEST(Schema, CompositeLeavesUseDottedPaths) {
  const EntitySchema s = load_schema(R"({"kind":"composite","children":{"launch":{"kind":"composite","children":{
      "day":{"kind":"numerical"},"month":{"kind":"numerical"},"year":{"kind":"numerical"}}}}})");
  ASSERT_EQ(s.size(), 3);
  EXPECT_EQ(s.leaf(0).path, "launch.day");
  EXPECT_EQ(s.leaf(1).path, "launch.month");
  EXPECT_EQ(s.leaf(2).path, "launch.year");
  EXPECT_EQ(s.index_of("launch.month"), 1);
  EXPECT_EQ(s.index_of("launch"), -1);
}

TEST(Schema, RejectsDuplicatePath) {
  EXPECT_THROW(load_schema(R"({"kind":"composite","children":{"a":{"kind":"numerical"},"a":{"kind":"numerical"}}})"),
               SchemaError);
}

TEST(Schema, RejectsMalformedNodes) {
  EXPECT_THROW(load_schema(R"({"kind":"composite","children":{"a":{"kind":"categorical","categories":[]}}})"), SchemaError);
  EXPECT_THROW(load_schema(R"({"kind":"composite","children":{"a":{"kind":"vector"}}})"), SchemaError);
  EXPECT_THROW(load_schema(R"({"kind":"composite","children":{}})"), SchemaError);
  EXPECT_THROW(load_schema(R"({"kind":"composite","children":{"a":{"kind":"categorical","categories":["x","x"]}}})"),
               SchemaError);
  EXPECT_THROW(load_schema("{not json"), SchemaError);
}

TEST(Schema, SaveLoadIsBitExactAndStable) {
  const EntitySchema s = mixed_schema();
  const std::string doc = save_schema(s);
  const EntitySchema back = load_schema(doc);
  EXPECT_EQ(save_schema(back), doc);
  ASSERT_EQ(back.size(), s.size());
  for (int i = 0; i < s.size(); ++i) EXPECT_EQ(back.leaf(i).path, s.leaf(i).path);
  EXPECT_EQ(schema_fingerprint(back), schema_fingerprint(s));
}

TEST(Schema, FingerprintIgnoresNormalizersButNotStructure) {
  const EntitySchema s = mixed_schema();
  EntitySchema refit = s;
  refit.set_normalizer(0, Normalizer{-5.0, 5.0, true, false});
  EXPECT_EQ(schema_fingerprint(refit), schema_fingerprint(s));
  const EntitySchema other = load_schema(R"({"kind":"composite","children":{"price":{"kind":"numerical"}}})");
  EXPECT_NE(schema_fingerprint(other), schema_fingerprint(s));
}

TEST(Schema, ValidateEntity) {
  const EntitySchema s = mixed_schema();
  EXPECT_NO_THROW(validate_entity(testing::row({Cell::number(1), Cell::missing(), Cell::category(2), Cell::text("abc")}), s));
  EXPECT_THROW(validate_entity(testing::row({Cell::number(1)}), s), DataError);
  EXPECT_THROW(validate_entity(testing::row({Cell::number(NAN), Cell::missing(), Cell::category(0), Cell::masked()}), s), DataError);
  EXPECT_THROW(validate_entity(testing::row({Cell::number(1), Cell::missing(), Cell::category(3), Cell::masked()}), s), DataError);
  EXPECT_THROW(validate_entity(testing::row({Cell::number(1), Cell::missing(), Cell::category(0), Cell::text("abcdefghij")}), s),
               DataError);
  EXPECT_THROW(validate_entity(testing::row({Cell::number(1), Cell::missing(), Cell::category(0), Cell::text("xyz")}), s), DataError);
}

TEST(Normalizer, FitsMinMaxAndFlagsConstants) {
  const EntitySchema s = load_schema(R"({"kind":"composite","children":{"a":{"kind":"numerical"},"b":{"kind":"numerical"}}})");
  const Dataset rows{testing::row({Cell::number(2), Cell::number(5)}), testing::row({Cell::number(4), Cell::number(5)}),
                     testing::row({Cell::number(6), Cell::missing()})};
  const EntitySchema fitted = fit_normalizers(s, rows);
  EXPECT_EQ(fitted.leaf(0).normalizer.min, 2.0);
  EXPECT_EQ(fitted.leaf(0).normalizer.max, 6.0);
  EXPECT_FALSE(fitted.leaf(0).normalizer.constant);
  EXPECT_EQ(fitted.leaf(1).normalizer.min, 5.0);
  EXPECT_EQ(fitted.leaf(1).normalizer.max, 5.0);
  EXPECT_TRUE(fitted.leaf(1).normalizer.constant);
  EXPECT_EQ(normalize_value(123.0, fitted.leaf(1).normalizer), 0.0);
  EXPECT_EQ(denormalize_value(0.0, fitted.leaf(1).normalizer), 5.0);
}

TEST(Normalizer, MidpointEndpointAndExtrapolation) {
  const Normalizer n{-1.0, 3.0, true, false};
  EXPECT_DOUBLE_EQ(normalize_value(1.0, n), 0.5);
  const Normalizer m{0.0, 10.0, true, false};
  EXPECT_DOUBLE_EQ(normalize_value(10.0, m), 1.0);
  EXPECT_DOUBLE_EQ(normalize_value(15.0, m), 1.5);
  EXPECT_THROW(normalize_value(1.0, Normalizer{}), SchemaError);
}

TEST(Normalizer, ErrorsWithoutPresentValues) {
  const EntitySchema s = load_schema(R"({"kind":"composite","children":{"a":{"kind":"numerical"}}})");
  EXPECT_THROW(fit_normalizers(s, Dataset{testing::row({Cell::missing()})}), DataError);
  EXPECT_THROW(fit_normalizers(s, Dataset{}), DataError);
}

TEST(Normalizer, RoundTripOnRandomValues) {
  Rng rng(11);
  for (int i = 0; i < 1000; ++i) {
    const double lo = rng.uniform(-1e3, 1e3);
    const Normalizer n{lo, lo + rng.uniform(1e-3, 1e3), true, false};
    const double x = rng.uniform(-1e4, 1e4);
    EXPECT_NEAR(denormalize_value(normalize_value(x, n), n), x, 1e-12 * std::max(1.0, std::abs(x)) * 1e3);
  }
}

TEST(Normalizer, MissingAndMaskedSurviveNormalization) {
  const EntitySchema s = mixed_schema();
  const EntityInstance e = testing::row({Cell::missing(), Cell::masked(), Cell::category(1), Cell::missing()});
  EXPECT_EQ(normalize(e, s), e);
  EXPECT_EQ(denormalize(e, s), e);
}

TEST(Text, EncodeDecodeRoundTrip) {
  TextSpec spec;
  spec.vocab = "abc ";
  spec.max_length = 6;
  const auto tokens = encode_text(spec, "ab ca");
  EXPECT_EQ(decode_text(spec, tokens), "ab ca");
  EXPECT_THROW(encode_text(spec, "abz"), DataError);
}

TEST(Schema, PermutedSchemaReordersLeaves) {
  const EntitySchema s = mixed_schema();
  const std::vector<int> order{3, 1, 0, 2};
  const EntitySchema p = s.permuted(order);
  for (int i = 0; i < 4; ++i) EXPECT_EQ(p.leaf(i).path, s.leaf(order[static_cast<std::size_t>(i)]).path);
  const EntityInstance e = testing::row({Cell::number(1), Cell::number(2), Cell::category(0), Cell::text("a")});
  const EntityInstance q = permute_entity(e, order);
  EXPECT_EQ(q.values[0], e.values[3]);
  EXPECT_EQ(q.values[2], e.values[0]);
}

// ---------------------------------------------------------------- CSV/JSONL

TEST(Csv, ParsesQuotedFieldsAndRejectsRaggedRows) {
  const CsvTable t = parse_csv("a,b\r\n\"x,1\",\"say \"\"hi\"\"\"\n3,\n");
  ASSERT_EQ(t.rows.size(), 2u);
  EXPECT_EQ(t.rows[0][0], "x,1");
  EXPECT_EQ(t.rows[0][1], "say \"hi\"");
  EXPECT_EQ(t.rows[1][1], "");
  EXPECT_EQ(parse_csv(write_csv(t)).rows, t.rows);
  EXPECT_THROW(parse_csv("a,b\n1,2,3\n"), DataError);
  EXPECT_THROW(parse_csv(""), DataError);
}

TEST(Csv, InfersKindsFromColumns) {
  const EntitySchema s = infer_schema_from_csv("num,cat\n1.5,a\n2.0,b\n,a\n");
  ASSERT_EQ(s.size(), 2);
  EXPECT_EQ(s.leaf(0).kind, PropertyKind::numerical);
  EXPECT_EQ(s.leaf(1).kind, PropertyKind::categorical);
  EXPECT_EQ(s.leaf(1).categories, (std::vector<std::string>{"a", "b"}));
  const Dataset rows = read_csv_dataset("num,cat\n1.5,a\n2.0,b\n,a\n", s);
  EXPECT_TRUE(rows[2].values[0].is_missing());
  EXPECT_EQ(rows[0].values[0].number(), 1.5);
}

TEST(Csv, ManyDistinctStringsBecomeText) {
  std::string csv = "name\n";
  for (int i = 0; i < 30; ++i) csv += "item" + std::to_string(i) + "\n";
  CsvOptions opt;
  opt.categorical_cutoff = 20;
  const EntitySchema s = infer_schema_from_csv(csv, opt);
  EXPECT_EQ(s.leaf(0).kind, PropertyKind::text);
}

TEST(Csv, HintsOverrideInferenceAndSentinelIsMissing) {
  CsvOptions opt;
  opt.type_hints["code"] = PropertyKind::categorical;
  const EntitySchema s = infer_schema_from_csv("code,v\n1,NA\n2,3\n", opt);
  EXPECT_EQ(s.leaf(0).kind, PropertyKind::categorical);
  const Dataset rows = read_csv_dataset("code,v\n1,NA\n2,3\n", s);
  EXPECT_TRUE(rows[0].values[1].is_missing());
}

TEST(Csv, DottedHeadersBuildCompositeTree) {
  const EntitySchema s = infer_schema_from_csv("launch.day,launch.year,name\n1,2001,a\n2,2002,b\n");
  ASSERT_EQ(s.size(), 3);
  EXPECT_EQ(s.leaf(0).path, "launch.day");
  EXPECT_EQ(s.root().children.size(), 2u);
}

TEST(Dataset, CsvAndJsonlRoundTripPresentCells) {
  EntitySchema s = mixed_schema();
  const Dataset rows{testing::row({Cell::number(3.25), Cell::number(17), Cell::category(1), Cell::text("bad cafe")}),
                     testing::row({Cell::number(-0.1), Cell::missing(), Cell::category(0), Cell::missing()})};
  const Dataset via_csv = read_csv_dataset(write_csv_dataset(rows, s), s);
  const Dataset via_jsonl = read_jsonl_dataset(write_jsonl_dataset(rows, s), s);
  EXPECT_EQ(via_csv, rows);
  EXPECT_EQ(via_jsonl, rows);
  // parse -> normalize -> denormalize -> serialize
  const Dataset back = denormalize(normalize(via_csv, s), s);
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t i = 0; i < rows[r].values.size(); ++i) {
      if (rows[r].values[i].is_number()) {
        EXPECT_NEAR(back[r].values[i].number(), rows[r].values[i].number(), 1e-9 * std::abs(rows[r].values[i].number()) + 1e-15);
      } else {
        EXPECT_EQ(back[r].values[i], rows[r].values[i]);
      }
    }
}

TEST(Dataset, JsonlNestsObjectsAndTreatsNullAsMissing) {
  const EntitySchema s = mixed_schema();
  const Dataset rows = read_jsonl_dataset(R"({"price":2,"launch":{"status":"released","day":null}})" "\n", s);
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_EQ(rows[0].values[0].number(), 2.0);
  EXPECT_TRUE(rows[0].values[1].is_missing());
  EXPECT_EQ(rows[0].values[2].category(), 1);
  EXPECT_TRUE(rows[0].values[3].is_missing());
  EXPECT_THROW(read_jsonl_dataset(R"({"launch":{"status":"lost"}})" "\n", s), DataError);
}

TEST(Dataset, FormatNumberIsShortestRoundTrip) {
  EXPECT_EQ(format_number(0.1), "0.1");
  EXPECT_EQ(format_number(2.0), "2");
  Rng rng(4);
  for (int i = 0; i < 200; ++i) {
    const double x = rng.normal(0, 1e6);
    EXPECT_EQ(std::stod(format_number(x)), x);
  }
}

}  // namespace
}  // namespace strucdiff
