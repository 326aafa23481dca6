#include <gtest/gtest.h>

#include "bikesite/categories.hpp"
#include "bikesite/errors.hpp"

using namespace bikesite;

namespace {
std::optional<CategoryId> cat(Tags t) { return categorize(t, default_category_rules()); }
}  // namespace

TEST(Categories, ExactlyTwentyInFixedOrder) {
  EXPECT_EQ(kCategoryNames.size(), 20u);
  EXPECT_EQ(kCategoryNames.front(), "aerialway");
  EXPECT_EQ(kCategoryNames.back(), "water");
  for (std::size_t i = 0; i < kCategoryCount; ++i) {
    const auto c = category_from_name(kCategoryNames[i]);
    ASSERT_TRUE(c);
    EXPECT_EQ(index_of(*c), i);
  }
  EXPECT_FALSE(category_from_name("parks"));
}

TEST(Categories, NamedExamples) {
  EXPECT_EQ(cat({{"highway", "cycleway"}}), CategoryId::roads_bike);
  EXPECT_EQ(cat({{"amenity", "bank"}}), CategoryId::finances);
  EXPECT_EQ(cat({}), std::nullopt);
  EXPECT_EQ(cat({{"amenity", "bicycle_rental"}}), std::nullopt);
}

TEST(Categories, StationExclusionBeatsEveryOtherRule) {
  EXPECT_EQ(cat({{"amenity", "bicycle_rental"}, {"shop", "bicycle"}}), std::nullopt);
  EXPECT_EQ(cat({{"bicycle_rental", "docking_station"}, {"public_transport", "platform"}}), std::nullopt);
  EXPECT_TRUE(is_excluded({{"amenity", "bicycle_rental"}}, default_category_rules()));
  EXPECT_FALSE(is_excluded({{"amenity", "bicycle_parking"}}, default_category_rules()));
  EXPECT_EQ(cat({{"amenity", "bicycle_parking"}}), CategoryId::transportation);
}

TEST(Categories, RuleOrderResolvesOverlaps) {
  // a building tagged as a shop is a shop
  EXPECT_EQ(cat({{"building", "retail"}, {"shop", "supermarket"}}), CategoryId::shops);
  EXPECT_EQ(cat({{"building", "yes"}}), CategoryId::buildings);
  EXPECT_EQ(cat({{"building", "school"}}), CategoryId::education);
  EXPECT_EQ(cat({{"leisure", "pitch"}}), CategoryId::sport);
  EXPECT_EQ(cat({{"leisure", "park"}}), CategoryId::leisure);
  EXPECT_EQ(cat({{"highway", "footway"}}), CategoryId::roads_walk);
  EXPECT_EQ(cat({{"highway", "residential"}}), CategoryId::roads_drive);
  EXPECT_EQ(cat({{"highway", "bus_stop"}}), CategoryId::transportation);
  EXPECT_EQ(cat({{"waterway", "river"}}), CategoryId::water);
  EXPECT_EQ(cat({{"highway", "residential"}, {"cycleway", "lane"}}), CategoryId::roads_bike);
}

TEST(Categories, EveryCategoryReachable) {
  std::vector<bool> seen(kCategoryCount, false);
  for (const auto& r : default_category_rules().rules) {
    if (r.category) seen[index_of(*r.category)] = true;
  }
  for (std::size_t i = 0; i < kCategoryCount; ++i) EXPECT_TRUE(seen[i]) << kCategoryNames[i];
}

TEST(Categories, WildcardAndCustomRules) {
  const auto rules = parse_category_rules(R"({"version":"t","rules":[
    {"key":"shop","values":["kiosk"],"exclude":true},
    {"key":"shop","values":["*"],"category":"shops"}]})");
  EXPECT_EQ(rules.version, "t");
  EXPECT_EQ(rules.rules.size(), 2u);
  EXPECT_EQ(categorize({{"shop", "kiosk"}}, rules), std::nullopt);
  EXPECT_EQ(categorize({{"shop", "bakery"}}, rules), CategoryId::shops);
  EXPECT_EQ(rules.keys(), std::vector<std::string>{"shop"});
}

TEST(Categories, MalformedRulesRejected) {
  EXPECT_THROW(parse_category_rules(R"({"version":"t","rules":[{"key":"a","category":"parks"}]})"), ConfigError);
  EXPECT_THROW(parse_category_rules(R"({"rules":[]})"), ConfigError);
  EXPECT_THROW(parse_category_rules(R"({"version":"t"})"), ConfigError);
  EXPECT_THROW(parse_category_rules("{not json"), ParseError);
}

TEST(Categories, Deterministic) {
  const Tags t{{"amenity", "cafe"}, {"building", "yes"}, {"tourism", "hotel"}};
  const auto first = cat(t);
  for (int i = 0; i < 10; ++i) EXPECT_EQ(cat(t), first);
}
