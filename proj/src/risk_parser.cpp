#include "drivesafe/risk_parser.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <sstream>

namespace drivesafe::risk {

namespace {

bool is_word_char(unsigned char c) { return std::isalnum(c) != 0; }

// Drops the UTF-8 combining circumflex (U+0302) so the hat-decorated field
// names match their plain ASCII spellings.
std::string strip_hats(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (i + 1 < text.size() && static_cast<unsigned char>(text[i]) == 0xCC &&
        static_cast<unsigned char>(text[i + 1]) == 0x82) {
      ++i;
      continue;
    }
    out.push_back(text[i]);
  }
  return out;
}

std::string to_lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

enum class Field { Label, Caption, Keywords, Bbox };

struct MarkerHit {
  Field field;
  std::size_t marker_pos = 0;  // where the marker word starts
  std::size_t value_pos = 0;   // first char after the '='/':' separator
};

const std::vector<std::string>& markers_for(Field f) {
  static const std::vector<std::string> label = {"risk label", "risk_label", "risk", "r"};
  static const std::vector<std::string> caption = {"risk caption", "c_r", "cr", "caption"};
  static const std::vector<std::string> keywords = {"risk-related keywords", "risk related keywords",
                                                    "keywords", "k"};
  static const std::vector<std::string> bbox = {"bounding box", "bbox", "b"};
  switch (f) {
    case Field::Label: return label;
    case Field::Caption: return caption;
    case Field::Keywords: return keywords;
    default: return bbox;
  }
}

// Matches `marker` as a standalone word at `pos`, followed by optional
// spaces and '=' or ':'. Returns the value start, or npos.
std::size_t match_marker_at(const std::string& lower, std::size_t pos, const std::string& marker) {
  if (pos > 0 && is_word_char(static_cast<unsigned char>(lower[pos - 1]))) return std::string::npos;
  if (lower.compare(pos, marker.size(), marker) != 0) return std::string::npos;
  std::size_t q = pos + marker.size();
  if (q < lower.size() && is_word_char(static_cast<unsigned char>(lower[q]))) return std::string::npos;
  while (q < lower.size() && (lower[q] == ' ' || lower[q] == '\t')) ++q;
  if (q >= lower.size() || (lower[q] != '=' && lower[q] != ':')) return std::string::npos;
  return q + 1;
}

std::optional<MarkerHit> find_marker(const std::string& lower, Field field) {
  const auto& markers = markers_for(field);
  for (std::size_t pos = 0; pos < lower.size(); ++pos) {
    for (const auto& m : markers) {
      const std::size_t value = match_marker_at(lower, pos, m);
      if (value != std::string::npos) return MarkerHit{field, pos, value};
    }
  }
  return std::nullopt;
}

std::vector<std::string> split_list_tokens(std::string_view fragment) {
  std::string body = trim(fragment);
  if (!body.empty() && body.front() == '{') {
    const auto close = body.find('}');
    body = close == std::string::npos ? body.substr(1) : body.substr(1, close - 1);
  }
  std::vector<std::string> out;
  std::string cur;
  for (char c : body) {
    if (c == ',' || c == ';') {
      const std::string tok = trim(cur);
      if (!tok.empty()) out.push_back(tok);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  const std::string tok = trim(cur);
  if (!tok.empty()) out.push_back(tok);
  return out;
}

bool parse_one_item(const std::string& item, int line, ParseReport& report) {
  const std::string lower = to_lower(item);

  std::vector<MarkerHit> hits;
  for (Field f : {Field::Label, Field::Caption, Field::Keywords, Field::Bbox}) {
    if (auto hit = find_marker(lower, f)) hits.push_back(*hit);
  }
  std::sort(hits.begin(), hits.end(),
            [](const MarkerHit& a, const MarkerHit& b) { return a.marker_pos < b.marker_pos; });

  auto value_of = [&](Field f) -> std::optional<std::string> {
    for (std::size_t i = 0; i < hits.size(); ++i) {
      if (hits[i].field != f) continue;
      const std::size_t end = i + 1 < hits.size() ? hits[i + 1].marker_pos : item.size();
      std::string value = item.substr(hits[i].value_pos, end - hits[i].value_pos);
      // strip the separator run left before the next field
      while (!value.empty() &&
             (std::isspace(static_cast<unsigned char>(value.back())) || value.back() == ';')) {
        value.pop_back();
      }
      return trim(value);
    }
    return std::nullopt;
  };

  const auto label_text = value_of(Field::Label);
  if (!label_text) {
    report.warnings.push_back({line, "no risk label found"});
    return false;
  }
  const std::string label_lower = to_lower(*label_text);
  bool risky = false;
  if (label_lower.rfind("yes", 0) == 0) {
    risky = true;
  } else if (label_lower.rfind("no", 0) == 0) {
    risky = false;
  } else {
    report.warnings.push_back({line, "risk label is neither Yes nor No: '" + *label_text + "'"});
    return false;
  }

  RiskAssessment a;
  a.risky = risky;
  if (auto caption = value_of(Field::Caption)) a.risk_caption = *caption;

  if (auto kw = value_of(Field::Keywords)) {
    for (auto& tok : split_list_tokens(*kw)) {
      if (to_lower(tok) == "none") continue;
      if (std::find(a.keywords.begin(), a.keywords.end(), tok) == a.keywords.end()) {
        a.keywords.push_back(std::move(tok));
      }
    }
  }

  if (auto bb = value_of(Field::Bbox)) {
    const std::string bb_lower = to_lower(*bb);
    const bool declared_absent = bb_lower.rfind("none", 0) == 0 || bb_lower.rfind("absent", 0) == 0 ||
                                 bb_lower.rfind("null", 0) == 0 || bb_lower.rfind("n/a", 0) == 0;
    if (!declared_absent) {
      const auto open = bb->find('[');
      const auto close = bb->find(']');
      const std::string fragment =
          open != std::string::npos && close != std::string::npos && close > open
              ? bb->substr(open, close - open + 1)
              : *bb;
      try {
        a.bbox = parse_bbox(fragment);
      } catch (const std::invalid_argument& e) {
        report.warnings.push_back({line, std::string("bad bounding box: ") + e.what()});
      }
    }
  }

  report.assessments.push_back(std::move(a));
  return true;
}

// A line opening a numbered item: optional spaces, digits, then ')', '.', or ':'.
std::optional<std::size_t> item_body_offset(const std::string& line) {
  std::size_t i = 0;
  while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
  const std::size_t digits_start = i;
  while (i < line.size() && std::isdigit(static_cast<unsigned char>(line[i]))) ++i;
  if (i == digits_start || i >= line.size()) return std::nullopt;
  if (line[i] != ')' && line[i] != '.' && line[i] != ':') return std::nullopt;
  return i + 1;
}

}  // namespace

ParseReport parse_risk_output(std::string_view text) {
  ParseReport report;
  const std::string clean = strip_hats(text);

  std::vector<std::string> lines;
  {
    std::string cur;
    for (char c : clean) {
      if (c == '\n') {
        lines.push_back(cur);
        cur.clear();
      } else if (c != '\r') {
        cur.push_back(c);
      }
    }
    lines.push_back(cur);
  }

  struct Item {
    std::string body;
    int line;
  };
  std::vector<Item> items;
  for (std::size_t li = 0; li < lines.size(); ++li) {
    if (auto offset = item_body_offset(lines[li])) {
      items.push_back({lines[li].substr(*offset), static_cast<int>(li) + 1});
    } else if (!items.empty() && !trim(lines[li]).empty()) {
      items.back().body += " " + lines[li];  // continuation line
    }
  }

  if (items.empty()) {
    // tolerate a single unnumbered record
    if (!parse_one_item(clean, 1, report)) report.warnings.push_back({1, "no numbered items found"});
  } else {
    for (const auto& item : items) parse_one_item(item.body, item.line, report);
  }

  report.fatal = report.assessments.empty();
  return report;
}

BoundingBox parse_bbox(std::string_view fragment) {
  std::string body = trim(fragment);
  if (!body.empty() && body.front() == '[') {
    if (body.back() != ']') throw std::invalid_argument("unterminated '[' in bbox fragment");
    body = body.substr(1, body.size() - 2);
  }
  // optional "bbox:" prefix inside the brackets
  {
    const std::string lower = to_lower(body);
    const std::string prefix = "bbox";
    if (lower.rfind(prefix, 0) == 0) {
      std::size_t q = prefix.size();
      while (q < body.size() && std::isspace(static_cast<unsigned char>(body[q]))) ++q;
      if (q < body.size() && (body[q] == ':' || body[q] == '=')) {
        body = body.substr(q + 1);
      }
    }
  }

  std::vector<long long> values;
  std::string token;
  auto flush = [&]() {
    const std::string t = trim(token);
    token.clear();
    if (t.empty()) return;
    std::size_t pos = 0;
    long long v = 0;
    try {
      v = std::stoll(t, &pos);
    } catch (const std::exception&) {
      throw std::invalid_argument("non-numeric bbox token '" + t + "'");
    }
    if (pos != t.size()) throw std::invalid_argument("non-numeric bbox token '" + t + "'");
    values.push_back(v);
  };
  for (char c : body) {
    if (c == ',') {
      flush();
    } else {
      token.push_back(c);
    }
  }
  flush();

  if (values.size() != 4) {
    throw std::invalid_argument("expected 4 bbox integers, got " + std::to_string(values.size()));
  }
  double x0 = static_cast<double>(std::min(values[0], values[2]));
  double x1 = static_cast<double>(std::max(values[0], values[2]));
  double y0 = static_cast<double>(std::min(values[1], values[3]));
  double y1 = static_cast<double>(std::max(values[1], values[3]));
  x0 = std::max(0.0, x0);
  y0 = std::max(0.0, y0);
  x1 = std::max(0.0, x1);
  y1 = std::max(0.0, y1);
  if (x0 >= x1 || y0 >= y1) throw std::invalid_argument("degenerate bbox after reordering");
  return BoundingBox{x0, y0, x1, y1};
}

std::vector<std::string> parse_keyword_list(std::string_view fragment, const rules::RuleMap& map,
                                            std::vector<std::string>* dropped) {
  std::vector<std::string> out;
  for (const auto& tok : split_list_tokens(strip_hats(fragment))) {
    if (to_lower(tok) == "none") continue;
    if (auto canonical = map.normalize_keyword(tok)) {
      if (std::find(out.begin(), out.end(), *canonical) == out.end()) out.push_back(*canonical);
    } else if (dropped) {
      dropped->push_back(tok);
    }
  }
  return out;
}

namespace {

std::string sanitize_text(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  for (char c : text) {
    if (c == '\n' || c == '\r' || c == '\t') {
      out.push_back(' ');
    } else if (c == ';') {
      out.push_back(',');
    } else {
      out.push_back(c);
    }
  }
  return trim(out);
}

std::string sanitize_keyword(std::string_view kw) {
  std::string out;
  for (char c : kw) {
    if (c == ',' || c == ';' || c == '{' || c == '}' || c == '\n' || c == '\r') {
      out.push_back(' ');
    } else {
      out.push_back(c);
    }
  }
  // collapse doubled spaces introduced above
  std::string collapsed;
  for (char c : out) {
    if (c == ' ' && !collapsed.empty() && collapsed.back() == ' ') continue;
    collapsed.push_back(c);
  }
  return trim(collapsed);
}

}  // namespace

std::string render_assessment(const RiskAssessment& a, int index) {
  std::ostringstream out;
  out << index << ") r=" << (a.risky ? "Yes" : "No") << "; C_r: " << sanitize_text(a.risk_caption)
      << "; K={";
  bool first = true;
  for (const auto& kw : a.keywords) {
    const std::string clean = sanitize_keyword(kw);
    if (clean.empty()) continue;
    if (!first) out << ", ";
    out << clean;
    first = false;
  }
  out << "}; b=";
  if (a.bbox) {
    out << '[' << std::llround(a.bbox->x_min) << ", " << std::llround(a.bbox->y_min) << ", "
        << std::llround(a.bbox->x_max) << ", " << std::llround(a.bbox->y_max) << ']';
  } else {
    out << "none";
  }
  out << '.';
  return out.str();
}

std::string render_assessments(const std::vector<RiskAssessment>& list) {
  std::string out;
  for (std::size_t i = 0; i < list.size(); ++i) {
    if (i) out.push_back('\n');
    out += render_assessment(list[i], static_cast<int>(i) + 1);
  }
  return out;
}

}  // namespace drivesafe::risk
