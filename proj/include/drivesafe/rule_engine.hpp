#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace drivesafe::rules {

// Eight actionable suggestion classes plus NA. Enumerator order is the
// conflict-resolution priority: the most restrictive action wins when a
// keyword set spans several categories.
enum class SafetySuggestion {
  MustStop = 0,
  Yield,
  SlowDown,
  CarefullyManeuver,
  BeAwareCautious,
  FollowVehicleAhead,
  StartMoving,
  NA,
};

inline constexpr int kSuggestionCount = 8;

// 0 = most restrictive (MustStop), 7 = NA.
int priority_rank(SafetySuggestion s);

// Stable machine token used in data files, e.g. "must_stop".
const char* to_token(SafetySuggestion s);
std::optional<SafetySuggestion> suggestion_from_token(std::string_view token);

// Human-facing name, e.g. "(Must) Stop".
const char* display_name(SafetySuggestion s);

// Closed keyword -> suggestion vocabulary loaded from a rule file.
// Immutable after load; lookups are thread-safe.
class RuleMap {
 public:
  struct Entry {
    std::string keyword;  // canonical casing
    SafetySuggestion category = SafetySuggestion::NA;
    std::int64_t instance_count = 0;
  };

  bool empty() const { return entries_.empty(); }
  std::size_t size() const { return entries_.size(); }
  const std::vector<Entry>& entries() const { return entries_; }

  // Canonical keywords in file order.
  std::vector<std::string> keywords() const;

  // Lowercase/trim/collapse whitespace, expand "VRU", strip a trailing 's'
  // from the final word when the singular form is in the vocabulary.
  // Returns the canonical-cased keyword, or nullopt when out of vocabulary.
  std::optional<std::string> normalize_keyword(std::string_view raw) const;

  // Category of a canonical keyword; throws std::invalid_argument otherwise.
  SafetySuggestion category_of(std::string_view canonical) const;

  std::optional<std::int64_t> instance_count(std::string_view canonical) const;

  std::size_t category_size(SafetySuggestion s) const;

  friend RuleMap load_rule_map(const std::filesystem::path& path);
  friend RuleMap make_rule_map(std::vector<Entry> entries);

 private:
  std::vector<Entry> entries_;
  std::unordered_map<std::string, std::size_t> by_lower_;  // lowercase keyword -> index
};

// Parses a UTF-8, line-oriented `category<TAB>keyword<TAB>count` file and
// verifies the RuleMap invariants (unique keywords, known categories, every
// category populated). Throws std::runtime_error with the offending line.
RuleMap load_rule_map(const std::filesystem::path& path);

// Same validation as load_rule_map, for programmatically built maps.
RuleMap make_rule_map(std::vector<RuleMap::Entry> entries);

// g(K): resolve each canonical keyword to its category and return the
// highest-priority one. Empty input -> NA. Non-canonical keyword -> throws.
SafetySuggestion map_keywords(const RuleMap& map, const std::vector<std::string>& canonical_keywords);

}  // namespace drivesafe::rules
