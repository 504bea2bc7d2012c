#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "drivesafe/geometry.hpp"
#include "drivesafe/rule_engine.hpp"

namespace drivesafe::risk {

// One parsed per-object risk record: (r, C_r, K, b). Keywords are kept as
// parsed (trimmed, deduped, original order); vocabulary canonicalization is a
// separate step that needs a RuleMap.
struct RiskAssessment {
  bool risky = false;
  std::string risk_caption;
  std::vector<std::string> keywords;
  std::optional<BoundingBox> bbox;

  bool operator==(const RiskAssessment&) const = default;
};

struct ParseWarning {
  int line = 0;
  std::string message;
};

struct ParseReport {
  std::vector<RiskAssessment> assessments;
  std::vector<ParseWarning> warnings;
  bool fatal = false;  // true iff no item parsed
};

// Parses LLM completion text into numbered risk items. Unparseable items
// become warnings; the report is fatal only when nothing parses. Never
// throws, whatever the input bytes.
ParseReport parse_risk_output(std::string_view text);

// Accepts "[a, b, c, d]" and "[bbox: a, b, c, d]" with arbitrary spacing;
// coordinates are reordered so min < max per axis and clamped at 0. Throws
// std::invalid_argument on anything but exactly four integers or when the
// result would be degenerate.
BoundingBox parse_bbox(std::string_view fragment);

// Splits a "{a, b}" / bare keyword list, normalizes each token against the
// vocabulary, drops out-of-vocabulary tokens (reported via `dropped`).
// Returns canonical keywords, deduped, in first-seen order.
std::vector<std::string> parse_keyword_list(std::string_view fragment, const rules::RuleMap& map,
                                            std::vector<std::string>* dropped = nullptr);

// Canonical grammar serializer: "1) r=Yes; C_r: ...; K={...}; b=[...]."
// Captions/keywords are sanitized (newlines -> spaces, ';' -> ',') so the
// output always re-parses. Box coordinates render as integers.
std::string render_assessment(const RiskAssessment& a, int index);
std::string render_assessments(const std::vector<RiskAssessment>& list);

}  // namespace drivesafe::risk
