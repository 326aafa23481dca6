#include "bikesite/categories.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "bikesite/errors.hpp"

namespace bikesite {

namespace detail {
extern const std::string_view kDefaultRulesJson;
}

std::optional<CategoryId> category_from_name(std::string_view name) noexcept {
  const auto it = std::find(kCategoryNames.begin(), kCategoryNames.end(), name);
  if (it == kCategoryNames.end()) return std::nullopt;
  return static_cast<CategoryId>(std::distance(kCategoryNames.begin(), it));
}

std::vector<std::string> CategoryRules::keys() const {
  std::vector<std::string> out;
  for (const auto& r : rules) {
    if (std::find(out.begin(), out.end(), r.key) == out.end()) out.push_back(r.key);
  }
  return out;
}

CategoryRules parse_category_rules(std::string_view json_text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("category rules: ") + e.what(), e.byte);
  }
  CategoryRules out;
  out.version = doc.value("version", "");
  if (out.version.empty()) throw ConfigError("category rules: missing 'version'");
  if (!doc.contains("rules") || !doc["rules"].is_array()) {
    throw ConfigError("category rules: missing 'rules' array");
  }
  for (const auto& entry : doc["rules"]) {
    const auto key = entry.value("key", "");
    if (key.empty()) throw ConfigError("category rules: rule without 'key'");
    std::vector<std::string> values;
    if (entry.contains("values")) {
      values = entry["values"].get<std::vector<std::string>>();
    } else {
      values.push_back(entry.value("value", "*"));
    }
    std::optional<CategoryId> category;
    if (!entry.value("exclude", false)) {
      const auto name = entry.value("category", "");
      category = category_from_name(name);
      if (!category) {
        throw ConfigError("category rules: unknown category '" + name + "' for key '" + key + "'");
      }
    }
    for (auto& v : values) out.rules.push_back({key, std::move(v), category});
  }
  if (out.rules.empty()) throw ConfigError("category rules: rule list is empty");
  return out;
}

CategoryRules load_category_rules(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read category rules file " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_category_rules(buf.str());
}

std::string_view default_category_rules_json() { return detail::kDefaultRulesJson; }

const CategoryRules& default_category_rules() {
  static const CategoryRules rules = parse_category_rules(detail::kDefaultRulesJson);
  return rules;
}

namespace {

const CategoryRule* first_match(const Tags& tags, const CategoryRules& rules) {
  if (tags.empty()) return nullptr;
  for (const auto& rule : rules.rules) {
    const auto it = tags.find(rule.key);
    if (it == tags.end()) continue;
    if (rule.value == "*" || rule.value == it->second) return &rule;
  }
  return nullptr;
}

}  // namespace

std::optional<CategoryId> categorize(const Tags& tags, const CategoryRules& rules) {
  const auto* rule = first_match(tags, rules);
  return rule ? rule->category : std::nullopt;
}

bool is_excluded(const Tags& tags, const CategoryRules& rules) {
  const auto* rule = first_match(tags, rules);
  return rule && !rule->category;
}

}  // namespace bikesite
