#include "drivesafe/dataset.hpp"

#include <algorithm>
#include <fstream>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "drivesafe/risk_parser.hpp"

namespace drivesafe::dataset {

using json = nlohmann::json;

const char* to_string(Split s) { return s == Split::Train ? "train" : "test"; }

std::optional<Split> split_from(std::string_view s) {
  if (s == "train") return Split::Train;
  if (s == "test") return Split::Test;
  return std::nullopt;
}

namespace {

std::runtime_error line_error(const std::filesystem::path& path, int line, const std::string& what) {
  return std::runtime_error(path.string() + ":" + std::to_string(line) + ": " + what);
}

json record_to_json(const AnnotationRecord& r) {
  json j;
  j["clip_id"] = r.clip_id;
  j["split"] = to_string(r.split);
  j["caption"] = r.caption;
  if (r.bbox) {
    j["bbox"] = json::array({r.bbox->x_min, r.bbox->y_min, r.bbox->x_max, r.bbox->y_max});
  }
  if (!r.keywords.empty()) j["keywords"] = r.keywords;
  if (r.suggestion) j["suggestion"] = rules::to_token(*r.suggestion);
  if (!r.description.empty()) j["description"] = r.description;
  if (!r.cue_bundle.empty()) j["cue_bundle"] = r.cue_bundle;
  return j;
}

}  // namespace

std::vector<AnnotationRecord> load_annotations(const std::filesystem::path& path,
                                               const rules::RuleMap& map) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open annotations: " + path.string());

  std::vector<AnnotationRecord> records;
  std::unordered_set<std::string> seen_ids;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw line_error(path, line_no, std::string("malformed JSON: ") + e.what());
    }
    try {
      AnnotationRecord r;
      r.clip_id = j.at("clip_id").get<std::string>();
      const auto split = split_from(j.at("split").get<std::string>());
      if (!split) throw std::runtime_error("split must be 'train' or 'test'");
      r.split = *split;
      r.caption = j.at("caption").get<std::string>();
      if (j.contains("bbox") && !j.at("bbox").is_null()) {
        const auto& b = j.at("bbox");
        if (!b.is_array() || b.size() != 4) throw std::runtime_error("bbox must have 4 numbers");
        r.bbox = make_box(b[0].get<double>(), b[1].get<double>(), b[2].get<double>(), b[3].get<double>());
      }
      if (j.contains("keywords")) {
        for (const auto& kw : j.at("keywords")) {
          const std::string raw = kw.get<std::string>();
          const auto canonical = map.normalize_keyword(raw);
          const std::string value = canonical ? *canonical : raw;
          if (std::find(r.keywords.begin(), r.keywords.end(), value) == r.keywords.end()) {
            r.keywords.push_back(value);
          }
        }
      }
      if (j.contains("suggestion") && !j.at("suggestion").is_null()) {
        const std::string token = j.at("suggestion").get<std::string>();
        const auto s = rules::suggestion_from_token(token);
        if (!s) throw std::runtime_error("unknown suggestion '" + token + "'");
        r.suggestion = *s;
      }
      if (j.contains("description")) r.description = j.at("description").get<std::string>();
      if (j.contains("cue_bundle")) r.cue_bundle = j.at("cue_bundle").get<std::string>();

      if (r.split == Split::Test && !r.suggestion) {
        throw std::runtime_error("test record '" + r.clip_id + "' is missing a suggestion");
      }
      if (!seen_ids.insert(r.clip_id).second) {
        throw std::runtime_error("duplicate clip_id '" + r.clip_id + "'");
      }
      records.push_back(std::move(r));
    } catch (const json::exception& e) {
      throw line_error(path, line_no, e.what());
    } catch (const std::runtime_error& e) {
      throw line_error(path, line_no, e.what());
    } catch (const std::invalid_argument& e) {
      throw line_error(path, line_no, e.what());
    }
  }
  return records;
}

void save_annotations(const std::vector<AnnotationRecord>& records, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write annotations: " + path.string());
  for (const auto& r : records) {
    out << record_to_json(r).dump() << '\n';
  }
}

PseudoLabelSummary pseudo_label(std::vector<AnnotationRecord>& records, llm::Client& client,
                                const rules::RuleMap& map, bool force, int max_in_flight,
                                const prompting::TemplateSet& templates) {
  PseudoLabelSummary summary;

  std::vector<std::size_t> targets;
  std::vector<prompting::PromptMessages> prompts;
  for (std::size_t i = 0; i < records.size(); ++i) {
    auto& r = records[i];
    if (r.split != Split::Train || (!r.keywords.empty() && !force)) {
      ++summary.skipped;
      continue;
    }
    if (r.caption.empty()) {
      ++summary.errors;
      summary.failures.emplace_back(r.clip_id, "empty caption");
      continue;
    }
    targets.push_back(i);
    prompts.push_back(prompting::build_pseudolabel_prompt(r.caption, map, templates));
  }

  const auto results = llm::complete_batch(client, prompts, max_in_flight);
  for (std::size_t k = 0; k < targets.size(); ++k) {
    auto& r = records[targets[k]];
    const auto& res = results[k];
    if (!res.ok()) {
      ++summary.errors;
      summary.failures.emplace_back(r.clip_id, res.error.empty() ? to_string(res.status) : res.error);
      continue;
    }
    const auto keywords = risk::parse_keyword_list(res.text, map);
    if (keywords.empty()) {
      summary.empty_clips.push_back(r.clip_id);
    } else {
      r.keywords = keywords;
      if (!r.suggestion) r.suggestion = rules::map_keywords(map, keywords);
      ++summary.labeled;
    }
  }
  return summary;
}

ExportSummary export_finetune_triplets(const std::vector<AnnotationRecord>& records,
                                       const std::filesystem::path& out_path,
                                       const rules::RuleMap& map,
                                       const prompting::TemplateSet& templates) {
  std::ofstream out(out_path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write triplets: " + out_path.string());

  ExportSummary summary;
  for (const auto& r : records) {
    if (r.caption.empty()) {
      summary.skipped.emplace_back(r.clip_id, "empty caption");
      continue;
    }

    // vocabulary enforcement: every keyword must be canonical
    bool canonical = true;
    for (const auto& kw : r.keywords) {
      const auto normalized = map.normalize_keyword(kw);
      if (!normalized || *normalized != kw) {
        summary.skipped.emplace_back(r.clip_id, "keyword '" + kw + "' is not canonical");
        canonical = false;
        break;
      }
    }
    if (!canonical) continue;

    risk::RiskAssessment a;
    a.risky = !r.keywords.empty();
    a.risk_caption = r.caption;
    a.keywords = r.keywords;
    a.bbox = r.bbox;
    const std::string response = risk::render_assessment(a, 1);

    // round-trip check before writing
    const auto report = risk::parse_risk_output(response);
    if (report.fatal || !report.warnings.empty() || report.assessments.size() != 1 ||
        report.assessments[0] != a) {
      summary.skipped.emplace_back(r.clip_id, "response failed the round-trip check");
      continue;
    }

    json j;
    j["caption"] = r.caption;
    j["instruction"] = templates.risk_instruction;
    j["response"] = response;
    out << j.dump() << '\n';
    ++summary.written;
  }
  return summary;
}

}  // namespace drivesafe::dataset
