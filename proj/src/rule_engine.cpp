#include "drivesafe/rule_engine.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace drivesafe::rules {

namespace {

struct CategoryInfo {
  SafetySuggestion value;
  const char* token;
  const char* display;
};

constexpr std::array<CategoryInfo, kSuggestionCount> kCategories{{
    {SafetySuggestion::MustStop, "must_stop", "(Must) Stop"},
    {SafetySuggestion::Yield, "yield", "Yield"},
    {SafetySuggestion::SlowDown, "slow_down", "Slow down"},
    {SafetySuggestion::CarefullyManeuver, "carefully_maneuver", "Carefully maneuver"},
    {SafetySuggestion::BeAwareCautious, "be_aware_cautious", "Be aware / cautious"},
    {SafetySuggestion::FollowVehicleAhead, "follow_vehicle_ahead", "Follow the vehicle ahead"},
    {SafetySuggestion::StartMoving, "start_moving", "Start moving"},
    {SafetySuggestion::NA, "na", "NA"},
}};

std::string lower_collapse(std::string_view raw) {
  std::string out;
  out.reserve(raw.size());
  bool pending_space = false;
  for (char c : raw) {
    const unsigned char uc = static_cast<unsigned char>(c);
    if (std::isspace(uc)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) {
      out.push_back(' ');
      pending_space = false;
    }
    out.push_back(static_cast<char>(std::tolower(uc)));
  }
  return out;
}

// Replaces the standalone word "vru" (with or without parentheses).
std::string expand_vru(const std::string& lowered) {
  std::string out;
  std::istringstream in(lowered);
  std::string word;
  while (in >> word) {
    if (!out.empty()) out.push_back(' ');
    if (word == "vru" || word == "(vru)") {
      out += "vulnerable road user";
    } else {
      out += word;
    }
  }
  return out;
}

std::string strip_final_plural(const std::string& lowered) {
  if (lowered.size() < 2 || lowered.back() != 's') return lowered;
  return lowered.substr(0, lowered.size() - 1);
}

}  // namespace

int priority_rank(SafetySuggestion s) { return static_cast<int>(s); }

const char* to_token(SafetySuggestion s) {
  return kCategories[static_cast<std::size_t>(s)].token;
}

const char* display_name(SafetySuggestion s) {
  return kCategories[static_cast<std::size_t>(s)].display;
}

std::optional<SafetySuggestion> suggestion_from_token(std::string_view token) {
  for (const auto& info : kCategories) {
    if (token == info.token) return info.value;
  }
  return std::nullopt;
}

std::vector<std::string> RuleMap::keywords() const {
  std::vector<std::string> out;
  out.reserve(entries_.size());
  for (const auto& e : entries_) out.push_back(e.keyword);
  return out;
}

std::optional<std::string> RuleMap::normalize_keyword(std::string_view raw) const {
  const std::string base = lower_collapse(raw);
  if (base.empty()) return std::nullopt;
  const std::string candidates[] = {
      base,
      expand_vru(base),
      strip_final_plural(base),
      expand_vru(strip_final_plural(base)),
  };
  for (const auto& c : candidates) {
    auto it = by_lower_.find(c);
    if (it != by_lower_.end()) return entries_[it->second].keyword;
  }
  return std::nullopt;
}

SafetySuggestion RuleMap::category_of(std::string_view canonical) const {
  auto it = by_lower_.find(lower_collapse(canonical));
  if (it == by_lower_.end() || entries_[it->second].keyword != canonical) {
    throw std::invalid_argument("keyword not canonical: '" + std::string(canonical) + "'");
  }
  return entries_[it->second].category;
}

std::optional<std::int64_t> RuleMap::instance_count(std::string_view canonical) const {
  auto it = by_lower_.find(lower_collapse(canonical));
  if (it == by_lower_.end()) return std::nullopt;
  return entries_[it->second].instance_count;
}

std::size_t RuleMap::category_size(SafetySuggestion s) const {
  return static_cast<std::size_t>(
      std::count_if(entries_.begin(), entries_.end(),
                    [s](const Entry& e) { return e.category == s; }));
}

RuleMap make_rule_map(std::vector<RuleMap::Entry> entries) {
  RuleMap map;
  map.entries_ = std::move(entries);
  for (std::size_t i = 0; i < map.entries_.size(); ++i) {
    const auto& e = map.entries_[i];
    if (e.keyword.empty()) throw std::runtime_error("rule map: empty keyword");
    const std::string key = lower_collapse(e.keyword);
    auto [it, inserted] = map.by_lower_.emplace(key, i);
    if (!inserted) {
      throw std::runtime_error("rule map: duplicate keyword '" + e.keyword + "'");
    }
    // alias without a trailing parenthetical, e.g. "... road user (vru)"
    const auto paren = key.find(" (");
    if (paren != std::string::npos && key.back() == ')') {
      map.by_lower_.emplace(key.substr(0, paren), i);
    }
  }
  if (map.entries_.empty()) throw std::runtime_error("rule map: no entries");
  for (const auto& info : kCategories) {
    if (map.category_size(info.value) == 0) {
      throw std::runtime_error(std::string("rule map: count mismatch, category '") + info.token +
                               "' has no keywords");
    }
  }
  return map;
}

RuleMap load_rule_map(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open rule file: " + path.string());

  std::vector<RuleMap::Entry> entries;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;

    const auto tab1 = line.find('\t');
    const auto tab2 = tab1 == std::string::npos ? std::string::npos : line.find('\t', tab1 + 1);
    if (tab1 == std::string::npos || tab2 == std::string::npos) {
      throw std::runtime_error(path.string() + ":" + std::to_string(line_no) +
                               ": expected category<TAB>keyword<TAB>count");
    }
    const std::string cat_token = line.substr(0, tab1);
    const std::string keyword = line.substr(tab1 + 1, tab2 - tab1 - 1);
    const std::string count_str = line.substr(tab2 + 1);

    const auto category = suggestion_from_token(cat_token);
    if (!category) {
      throw std::runtime_error(path.string() + ":" + std::to_string(line_no) +
                               ": unknown category '" + cat_token + "'");
    }
    std::int64_t count = 0;
    try {
      std::size_t pos = 0;
      count = std::stoll(count_str, &pos);
      if (pos != count_str.size() || count < 0) throw std::invalid_argument(count_str);
    } catch (const std::exception&) {
      throw std::runtime_error(path.string() + ":" + std::to_string(line_no) +
                               ": bad instance count '" + count_str + "'");
    }
    entries.push_back({keyword, *category, count});
  }

  try {
    return make_rule_map(std::move(entries));
  } catch (const std::runtime_error& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
}

SafetySuggestion map_keywords(const RuleMap& map, const std::vector<std::string>& canonical_keywords) {
  SafetySuggestion best = SafetySuggestion::NA;
  for (const auto& kw : canonical_keywords) {
    const SafetySuggestion cat = map.category_of(kw);
    if (priority_rank(cat) < priority_rank(best)) best = cat;
  }
  return best;
}

}  // namespace drivesafe::rules
