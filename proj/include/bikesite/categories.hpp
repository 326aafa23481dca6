#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace bikesite {

/// The twenty feature categories. The enumerator order is the column order
/// of every embedding and must not change.
enum class CategoryId : std::uint8_t {
  aerialway,
  airports,
  buildings,
  culture_and_entertainment,
  education,
  emergency,
  finances,
  healthcare,
  historic,
  leisure,
  other,
  roads_bike,
  roads_drive,
  roads_walk,
  shops,
  sport,
  sustenance,
  tourism,
  transportation,
  water,
};

inline constexpr std::size_t kCategoryCount = 20;

inline constexpr std::array<std::string_view, kCategoryCount> kCategoryNames = {
    "aerialway",   "airports", "buildings",  "culture_and_entertainment",
    "education",   "emergency", "finances",  "healthcare",
    "historic",    "leisure",  "other",      "roads_bike",
    "roads_drive", "roads_walk", "shops",    "sport",
    "sustenance",  "tourism",  "transportation", "water",
};

constexpr std::size_t index_of(CategoryId c) noexcept { return static_cast<std::size_t>(c); }
constexpr std::string_view name_of(CategoryId c) noexcept { return kCategoryNames[index_of(c)]; }
std::optional<CategoryId> category_from_name(std::string_view name) noexcept;

constexpr bool is_road(CategoryId c) noexcept {
  return c == CategoryId::roads_bike || c == CategoryId::roads_drive ||
         c == CategoryId::roads_walk;
}

using Tags = std::map<std::string, std::string>;

struct CategoryRule {
  std::string key;
  /// Exact tag value, or "*" for any value.
  std::string value;
  /// nullopt marks an exclusion rule: a matching element is dropped.
  std::optional<CategoryId> category;
};

/// Ordered tag rules; the first rule whose key/value matches any tag wins.
struct CategoryRules {
  std::vector<CategoryRule> rules;
  std::string version;

  /// Distinct tag keys, in first-appearance order. Used to build queries.
  std::vector<std::string> keys() const;
};

/// Parses the JSON rules document ({"version": ..., "rules": [...]}).
/// Throws ConfigError on unknown categories or malformed entries.
CategoryRules parse_category_rules(std::string_view json_text);
CategoryRules load_category_rules(const std::string& path);

/// The rules file shipped in data/category_rules.json, compiled in.
const CategoryRules& default_category_rules();
std::string_view default_category_rules_json();

/// Category of the first matching rule, or nullopt when no rule matches or
/// an exclusion rule matches first.
std::optional<CategoryId> categorize(const Tags& tags, const CategoryRules& rules);

/// True when the tags hit an exclusion rule before any category rule.
bool is_excluded(const Tags& tags, const CategoryRules& rules);

}  // namespace bikesite
