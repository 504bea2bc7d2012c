#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "drivesafe/geometry.hpp"
#include "drivesafe/llm_client.hpp"
#include "drivesafe/prompting.hpp"
#include "drivesafe/rule_engine.hpp"

namespace drivesafe::dataset {

enum class Split { Train, Test };

const char* to_string(Split s);
std::optional<Split> split_from(std::string_view s);

// One annotated clip. Keywords are canonicalized at load where the
// vocabulary matches; unmatched keywords are kept verbatim (the triplet
// exporter enforces canon there).
struct AnnotationRecord {
  std::string clip_id;
  Split split = Split::Train;
  std::string caption;  // ground-truth caption
  std::optional<BoundingBox> bbox;
  std::vector<std::string> keywords;
  std::optional<rules::SafetySuggestion> suggestion;
  std::string description;  // d_v, may be empty
  std::string cue_bundle;   // relative bundle directory, may be empty
};

// JSONL, one record per line (schema in docs/formats.md). Errors carry the
// offending line number; test records must have a suggestion.
std::vector<AnnotationRecord> load_annotations(const std::filesystem::path& path,
                                               const rules::RuleMap& map);
void save_annotations(const std::vector<AnnotationRecord>& records,
                      const std::filesystem::path& path);

struct PseudoLabelSummary {
  int labeled = 0;
  int skipped = 0;  // non-train, or keywords already present without force
  int errors = 0;
  std::vector<std::string> empty_clips;  // zero surviving keywords
  std::vector<std::pair<std::string, std::string>> failures;  // clip_id, error
};

// Fills gt_keywords (and a derived suggestion when absent) on train records
// via the pseudo-labeling prompt. Never touches test records; existing
// keywords survive unless force is set. Per-record LLM failures are
// collected and the batch continues.
PseudoLabelSummary pseudo_label(std::vector<AnnotationRecord>& records, llm::Client& client,
                                const rules::RuleMap& map, bool force, int max_in_flight,
                                const prompting::TemplateSet& templates = prompting::TemplateSet::builtin());

struct ExportSummary {
  int written = 0;
  std::vector<std::pair<std::string, std::string>> skipped;  // clip_id, reason
};

// caption-instruction-response triplets, one JSON object per line. The
// response is rendered by the risk grammar serializer and must re-parse
// with zero warnings (and canonical keywords) or the record is skipped.
ExportSummary export_finetune_triplets(const std::vector<AnnotationRecord>& records,
                                       const std::filesystem::path& out_path,
                                       const rules::RuleMap& map,
                                       const prompting::TemplateSet& templates = prompting::TemplateSet::builtin());

}  // namespace drivesafe::dataset
