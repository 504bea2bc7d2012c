#include "drivesafe/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

#include <nlohmann/json.hpp>

#include "drivesafe/cue_io.hpp"
#include "toml_lite.hpp"

namespace drivesafe::pipeline {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

constexpr Stage kStageOrder[] = {Stage::Cues, Stage::Caption, Stage::Risk, Stage::Suggest, Stage::Eval};

json bbox_to_json(const BoundingBox& b) {
  return json::array({b.x_min, b.y_min, b.x_max, b.y_max});
}

BoundingBox bbox_from_json(const json& j) {
  return make_box(j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>());
}

json assessment_to_json(const risk::RiskAssessment& a) {
  json j;
  j["risky"] = a.risky;
  j["caption"] = a.risk_caption;
  j["keywords"] = a.keywords;
  j["bbox"] = a.bbox ? bbox_to_json(*a.bbox) : json(nullptr);
  return j;
}

risk::RiskAssessment assessment_from_json(const json& j) {
  risk::RiskAssessment a;
  a.risky = j.at("risky").get<bool>();
  a.risk_caption = j.at("caption").get<std::string>();
  for (const auto& kw : j.at("keywords")) a.keywords.push_back(kw.get<std::string>());
  if (!j.at("bbox").is_null()) a.bbox = bbox_from_json(j.at("bbox"));
  return a;
}

std::vector<json> read_jsonl(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::vector<json> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      out.push_back(json::parse(line));
    } catch (const json::parse_error& e) {
      throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

void write_jsonl(const std::vector<json>& rows, const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  for (const auto& row : rows) out << row.dump() << '\n';
}

json videorep_to_json(const cues::VideoRepresentation& rep) {
  json j;
  j["clip_id"] = rep.clip_id;
  j["description"] = rep.description;
  json frames = json::array();
  for (const auto& f : rep.frames) {
    json jf;
    jf["index"] = f.frame_index;
    jf["ego_dx"] = f.ego_dx;
    jf["ego_dy"] = f.ego_dy;
    jf["ego_lane"] = cues::to_string(f.ego_lane);
    json objects = json::array();
    for (const auto& o : f.objects) {
      objects.push_back({{"id", o.object_id},
                         {"category", o.category},
                         {"bbox", bbox_to_json(o.bbox)},
                         {"depth", o.depth_stat},
                         {"motion", cues::to_string(o.motion)},
                         {"lane", cues::to_string(o.lane)}});
    }
    jf["objects"] = objects;
    frames.push_back(std::move(jf));
  }
  j["frames"] = frames;
  return j;
}

cues::VideoRepresentation videorep_from_json(const json& j) {
  cues::VideoRepresentation rep;
  rep.clip_id = j.at("clip_id").get<std::string>();
  rep.description = j.at("description").get<std::string>();
  for (const auto& jf : j.at("frames")) {
    cues::FrameCues f;
    f.frame_index = jf.at("index").get<int>();
    f.ego_dx = jf.at("ego_dx").get<double>();
    f.ego_dy = jf.at("ego_dy").get<double>();
    f.ego_lane = cues::ego_lane_position_from(jf.at("ego_lane").get<std::string>())
                     .value_or(cues::EgoLanePosition::Unknown);
    for (const auto& jo : jf.at("objects")) {
      cues::ObjectObservation o;
      o.object_id = jo.at("id").get<std::string>();
      o.category = jo.at("category").get<std::string>();
      o.bbox = bbox_from_json(jo.at("bbox"));
      o.depth_stat = jo.at("depth").get<double>();
      o.motion = cues::motion_label_from(jo.at("motion").get<std::string>())
                     .value_or(cues::MotionLabel::Static);
      o.lane = cues::lane_relation_from(jo.at("lane").get<std::string>())
                   .value_or(cues::LaneRelation::Unknown);
      f.objects.push_back(std::move(o));
    }
    rep.frames.push_back(std::move(f));
  }
  return rep;
}

// cue-less fallback: one empty frame carrying just the description
cues::VideoRepresentation bare_representation(const dataset::AnnotationRecord& record) {
  cues::VideoRepresentation rep;
  rep.clip_id = record.clip_id;
  rep.description = record.description;
  rep.frames.push_back(cues::FrameCues{});
  return rep;
}

struct StagePaths {
  fs::path videorep, captions, risk, predictions, metrics_json, metrics_txt;
};

StagePaths stage_paths(const fs::path& out_dir) {
  return {out_dir / "videorep.jsonl", out_dir / "captions.jsonl",  out_dir / "risk.jsonl",
          out_dir / "predictions.jsonl", out_dir / "metrics.json", out_dir / "metrics.txt"};
}

bool is_remote(const llm::LlmEndpoint& endpoint) {
  return endpoint.base_url.rfind("mock://", 0) != 0;
}

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream out;
  out << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return out.str();
}

}  // namespace

const char* to_string(Stage s) {
  switch (s) {
    case Stage::Cues: return "cues";
    case Stage::Caption: return "caption";
    case Stage::Risk: return "risk";
    case Stage::Suggest: return "suggest";
    default: return "eval";
  }
}

std::optional<Stage> stage_from(std::string_view s) {
  for (Stage stage : kStageOrder) {
    if (s == to_string(stage)) return stage;
  }
  return std::nullopt;
}

void RunConfig::validate() const {
  if (stages.empty()) throw std::invalid_argument("no stages selected");
  std::vector<int> indices;
  for (Stage s : stages) {
    const auto it = std::find(std::begin(kStageOrder), std::end(kStageOrder), s);
    indices.push_back(static_cast<int>(it - std::begin(kStageOrder)));
  }
  std::vector<int> sorted = indices;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
    throw std::invalid_argument("duplicate stage");
  }
  for (std::size_t i = 1; i < sorted.size(); ++i) {
    if (sorted[i] != sorted[i - 1] + 1) {
      throw std::invalid_argument("stages must form a contiguous chain of the pipeline order");
    }
  }
  if (sorted != indices) throw std::invalid_argument("stages must be listed in pipeline order");
  if (max_fatal_rate < 0.0 || max_fatal_rate > 1.0) {
    throw std::invalid_argument("max_fatal_rate must lie in [0, 1]");
  }
  if (max_in_flight < 1) throw std::invalid_argument("max_in_flight must be >= 1");
  if (flow_stride < 1) throw std::invalid_argument("flow_stride must be >= 1");
  prompt.validate();
  endpoint.validate();
  if (judge) judge->validate();
}

RunConfig load_config(const fs::path& path) {
  const toml_lite::Table table = toml_lite::parse_file(path);
  RunConfig cfg;

  auto get_string = [&](const std::string& key, std::string fallback = "") {
    auto it = table.find(key);
    if (it == table.end()) return fallback;
    if (it->second.kind != toml_lite::Value::Kind::String) {
      throw std::runtime_error(path.string() + ": '" + key + "' must be a string");
    }
    return it->second.str;
  };
  auto get_number = [&](const std::string& key, double fallback) {
    auto it = table.find(key);
    if (it == table.end()) return fallback;
    if (it->second.kind != toml_lite::Value::Kind::Number) {
      throw std::runtime_error(path.string() + ": '" + key + "' must be a number");
    }
    return it->second.number;
  };
  auto get_bool = [&](const std::string& key, bool fallback) {
    auto it = table.find(key);
    if (it == table.end()) return fallback;
    if (it->second.kind != toml_lite::Value::Kind::Boolean) {
      throw std::runtime_error(path.string() + ": '" + key + "' must be a boolean");
    }
    return it->second.boolean;
  };

  cfg.endpoint.base_url = get_string("endpoint.base_url");
  cfg.endpoint.model_name = get_string("endpoint.model");
  cfg.endpoint.api_key = get_string("endpoint.api_key");
  cfg.endpoint.timeout_seconds = get_number("endpoint.timeout_seconds", cfg.endpoint.timeout_seconds);
  cfg.endpoint.max_retries = static_cast<int>(get_number("endpoint.max_retries", cfg.endpoint.max_retries));
  cfg.endpoint.temperature = get_number("endpoint.temperature", cfg.endpoint.temperature);
  cfg.endpoint.max_tokens = static_cast<int>(get_number("endpoint.max_tokens", cfg.endpoint.max_tokens));
  cfg.endpoint.retry_base_seconds =
      get_number("endpoint.retry_base_seconds", cfg.endpoint.retry_base_seconds);
  cfg.endpoint.apply_env();

  if (table.count("judge.base_url")) {
    llm::LlmEndpoint judge = cfg.endpoint;
    judge.base_url = get_string("judge.base_url");
    judge.model_name = get_string("judge.model", cfg.endpoint.model_name);
    judge.api_key = get_string("judge.api_key", cfg.endpoint.api_key);
    cfg.judge = judge;
  }

  cfg.prompt.max_objects_per_frame =
      static_cast<int>(get_number("prompt.max_objects_per_frame", cfg.prompt.max_objects_per_frame));
  const std::string sampling = get_string("prompt.frame_sampling", "first_mid_last");
  if (sampling == "all") {
    cfg.prompt.sampling = prompting::FrameSampling::All;
  } else if (sampling == "every_k") {
    cfg.prompt.sampling = prompting::FrameSampling::EveryK;
  } else if (sampling == "first_mid_last") {
    cfg.prompt.sampling = prompting::FrameSampling::FirstMidLast;
  } else {
    throw std::runtime_error(path.string() + ": unknown frame_sampling '" + sampling + "'");
  }
  cfg.prompt.every_k = static_cast<int>(get_number("prompt.every_k", cfg.prompt.every_k));
  cfg.prompt.include_spatial = get_bool("prompt.include_spatial", true);
  cfg.prompt.include_motion = get_bool("prompt.include_motion", true);
  cfg.prompt.include_depth = get_bool("prompt.include_depth", true);
  cfg.prompt.max_chars =
      static_cast<std::size_t>(get_number("prompt.max_chars", static_cast<double>(cfg.prompt.max_chars)));

  cfg.flow.pyramid_levels = static_cast<int>(get_number("flow.pyramid_levels", cfg.flow.pyramid_levels));
  cfg.flow.pyr_scale = get_number("flow.pyr_scale", cfg.flow.pyr_scale);
  cfg.flow.window_size = static_cast<int>(get_number("flow.window_size", cfg.flow.window_size));
  cfg.flow.iterations = static_cast<int>(get_number("flow.iterations", cfg.flow.iterations));
  cfg.flow.poly_n = static_cast<int>(get_number("flow.poly_n", cfg.flow.poly_n));
  cfg.flow.poly_sigma = get_number("flow.poly_sigma", cfg.flow.poly_sigma);
  cfg.flow_stride = static_cast<int>(get_number("run.flow_stride", cfg.flow_stride));

  cfg.annotations_path = get_string("run.annotations");
  cfg.cues_root = get_string("run.cues_dir");
  cfg.out_dir = get_string("run.out_dir", "out");
  cfg.rules_path = get_string("run.rules", "data/rules/drama_rules.tsv");
  cfg.prompt_dir = get_string("run.prompt_dir");
  cfg.seed = static_cast<std::uint64_t>(get_number("run.seed", 0));
  cfg.max_fatal_rate = get_number("run.max_fatal_rate", cfg.max_fatal_rate);
  cfg.max_in_flight = static_cast<int>(get_number("run.max_in_flight", cfg.max_in_flight));

  if (auto it = table.find("run.stages"); it != table.end()) {
    if (it->second.kind != toml_lite::Value::Kind::Array) {
      throw std::runtime_error(path.string() + ": 'run.stages' must be an array");
    }
    cfg.stages.clear();
    for (const auto& v : it->second.array) {
      const auto stage = stage_from(v.str);
      if (v.kind != toml_lite::Value::Kind::String || !stage) {
        throw std::runtime_error(path.string() + ": unknown stage in run.stages");
      }
      cfg.stages.push_back(*stage);
    }
  }
  if (auto it = table.find("run.thresholds"); it != table.end()) {
    if (it->second.kind != toml_lite::Value::Kind::Array) {
      throw std::runtime_error(path.string() + ": 'run.thresholds' must be an array");
    }
    cfg.thresholds.clear();
    for (const auto& v : it->second.array) cfg.thresholds.push_back(v.number);
  }
  return cfg;
}

std::optional<std::size_t> select_primary_index(const std::vector<risk::RiskAssessment>& assessments,
                                                const rules::RuleMap& map) {
  std::optional<std::size_t> best;
  int best_rank = rules::priority_rank(rules::SafetySuggestion::NA) + 1;
  double best_area = -1.0;
  for (std::size_t i = 0; i < assessments.size(); ++i) {
    const auto& a = assessments[i];
    if (!a.risky) continue;
    std::vector<std::string> canonical;
    for (const auto& kw : a.keywords) {
      if (auto c = map.normalize_keyword(kw)) {
        if (std::find(canonical.begin(), canonical.end(), *c) == canonical.end()) {
          canonical.push_back(*c);
        }
      }
    }
    const int rank = rules::priority_rank(rules::map_keywords(map, canonical));
    const double area = a.bbox ? a.bbox->area() : 0.0;
    if (!best || rank < best_rank || (rank == best_rank && area > best_area)) {
      best = i;
      best_rank = rank;
      best_area = area;
    }
  }
  return best;
}

std::optional<risk::RiskAssessment> select_primary_assessment(
    const std::vector<risk::RiskAssessment>& assessments, const rules::RuleMap& map) {
  const auto idx = select_primary_index(assessments, map);
  if (!idx) return std::nullopt;
  return assessments[*idx];
}

metrics::MetricReport evaluate_predictions(const fs::path& predictions_path,
                                           const std::vector<dataset::AnnotationRecord>& annotations,
                                           const std::vector<double>& thresholds,
                                           llm::Client* judge) {
  struct Prediction {
    std::string caption;
    std::optional<BoundingBox> bbox;
    rules::SafetySuggestion suggestion = rules::SafetySuggestion::NA;
  };
  std::map<std::string, Prediction> by_clip;
  for (const auto& row : read_jsonl(predictions_path)) {
    Prediction p;
    p.caption = row.at("caption").get<std::string>();
    const auto& selected = row.at("selected");
    if (!selected.is_null()) {
      const auto assessments = row.at("assessments");
      const auto idx = selected.get<std::size_t>();
      if (idx >= assessments.size()) throw std::runtime_error("selected index out of range");
      const auto a = assessment_from_json(assessments[idx]);
      p.bbox = a.bbox;
    }
    const auto suggestion = rules::suggestion_from_token(row.at("suggestion").get<std::string>());
    if (!suggestion) throw std::runtime_error("unknown suggestion token in predictions");
    p.suggestion = *suggestion;
    by_clip[row.at("clip_id").get<std::string>()] = std::move(p);
  }

  std::vector<metrics::TokenSequence> candidates;
  std::vector<std::vector<metrics::TokenSequence>> references;
  std::vector<std::optional<BoundingBox>> pred_boxes;
  std::vector<BoundingBox> gt_boxes;
  std::vector<rules::SafetySuggestion> pred_suggestions, gt_suggestions;
  std::vector<std::pair<std::string, std::string>> clair_pairs;  // candidate, reference

  metrics::MetricReport report;
  for (const auto& record : annotations) {
    const auto it = by_clip.find(record.clip_id);
    if (it == by_clip.end()) continue;
    const Prediction& p = it->second;
    ++report.n_clips;

    candidates.push_back(metrics::tokenize(p.caption));
    references.push_back({metrics::tokenize(record.caption)});
    clair_pairs.emplace_back(p.caption, record.caption);

    if (record.bbox) {
      pred_boxes.push_back(p.bbox);
      gt_boxes.push_back(*record.bbox);
    }
    if (record.suggestion) {
      pred_suggestions.push_back(p.suggestion);
      gt_suggestions.push_back(*record.suggestion);
    }
  }
  if (report.n_clips == 0) throw std::runtime_error("no overlapping clips between predictions and annotations");

  const auto caption_scores = metrics::evaluate_captions(candidates, references);
  report.bleu1 = caption_scores.bleu1;
  report.bleu4 = caption_scores.bleu4;
  report.meteor = caption_scores.meteor;
  report.rouge_l = caption_scores.rouge_l;
  report.cider = caption_scores.cider;

  if (judge) {
    double total = 0.0;
    for (const auto& [cand, ref] : clair_pairs) total += metrics::clair(cand, ref, *judge);
    report.clair = total / static_cast<double>(clair_pairs.size());
  }

  if (!gt_boxes.empty()) {
    const auto grounding = metrics::grounding_metrics(pred_boxes, gt_boxes, thresholds);
    report.mean_iou_all = grounding.mean_iou_all;
    report.mean_iou_matched = grounding.mean_iou_matched;
    report.acc_at = grounding.acc_at;
    report.n_grounded = gt_boxes.size();
  }
  if (!gt_suggestions.empty()) {
    const auto suggestion = metrics::suggestion_metrics(pred_suggestions, gt_suggestions);
    report.suggestion_accuracy = suggestion.accuracy;
    report.suggestion_f1_weighted = suggestion.f1_weighted;
    report.n_suggestion_scored = suggestion.n_scored;
  }
  return report;
}

namespace {

struct RunContext {
  const RunConfig& cfg;
  StagePaths paths;
  rules::RuleMap map;
  prompting::TemplateSet templates;
  std::vector<dataset::AnnotationRecord> annotations;
  std::unique_ptr<llm::Client> client;

  bool enabled(Stage s) const {
    return std::find(cfg.stages.begin(), cfg.stages.end(), s) != cfg.stages.end();
  }
  bool should_run(Stage s, const fs::path& output) const {
    if (!enabled(s)) return false;
    return cfg.force || !fs::exists(output);
  }
};

void run_cues_stage(RunContext& ctx) {
  std::vector<json> rows;
  for (const auto& record : ctx.annotations) {
    cues::VideoRepresentation rep;
    if (!record.cue_bundle.empty()) {
      const fs::path dir = ctx.cfg.cues_root / record.cue_bundle;
      rep = cues::extract_cues(cues::load_cue_bundle(dir), ctx.cfg.flow, ctx.cfg.flow_stride);
      rep.description = record.description;
    } else {
      rep = bare_representation(record);
    }
    rows.push_back(videorep_to_json(rep));
  }
  write_jsonl(rows, ctx.paths.videorep);
}

void run_caption_stage(RunContext& ctx) {
  std::map<std::string, cues::VideoRepresentation> reps;
  if (fs::exists(ctx.paths.videorep)) {
    for (const auto& row : read_jsonl(ctx.paths.videorep)) {
      auto rep = videorep_from_json(row);
      reps.emplace(rep.clip_id, std::move(rep));
    }
  }

  std::vector<prompting::PromptMessages> prompts;
  for (const auto& record : ctx.annotations) {
    const auto it = reps.find(record.clip_id);
    const cues::VideoRepresentation rep = it != reps.end() ? it->second : bare_representation(record);
    prompts.push_back(prompting::build_caption_prompt(rep, ctx.cfg.prompt, ctx.templates));
  }

  const auto results = llm::complete_batch(*ctx.client, prompts, ctx.cfg.max_in_flight);
  std::size_t failures = 0;
  std::string first_error;
  std::vector<json> rows;
  for (std::size_t i = 0; i < results.size(); ++i) {
    json row;
    row["clip_id"] = ctx.annotations[i].clip_id;
    if (results[i].ok()) {
      row["caption"] = results[i].text;
    } else {
      row["caption"] = "";
      row["error"] = results[i].error.empty() ? llm::to_string(results[i].status) : results[i].error;
      if (failures++ == 0) first_error = row["error"].get<std::string>();
    }
    rows.push_back(std::move(row));
  }
  write_jsonl(rows, ctx.paths.captions);
  if (!results.empty() && failures == results.size()) {
    throw std::runtime_error("caption stage: endpoint unreachable (" + first_error + ")");
  }
}

void run_risk_stage(RunContext& ctx) {
  const auto caption_rows = read_jsonl(ctx.paths.captions);

  std::vector<prompting::PromptMessages> prompts;
  std::vector<std::size_t> targets;
  for (std::size_t i = 0; i < caption_rows.size(); ++i) {
    const std::string caption = caption_rows[i].at("caption").get<std::string>();
    if (!caption.empty()) {
      prompts.push_back(prompting::build_risk_prompt(caption, ctx.templates));
      targets.push_back(i);
    }
  }
  const auto results = llm::complete_batch(*ctx.client, prompts, ctx.cfg.max_in_flight);

  std::vector<json> rows(caption_rows.size());
  std::size_t fatal_count = 0;
  for (std::size_t i = 0; i < caption_rows.size(); ++i) {
    rows[i]["clip_id"] = caption_rows[i].at("clip_id");
    rows[i]["raw"] = "";
    rows[i]["fatal"] = true;
    rows[i]["warnings"] = json::array();
    rows[i]["assessments"] = json::array();
  }
  for (std::size_t k = 0; k < targets.size(); ++k) {
    auto& row = rows[targets[k]];
    const auto& res = results[k];
    if (!res.ok()) {
      row["warnings"].push_back({{"line", 0}, {"message", "llm error: " + res.error}});
      continue;
    }
    row["raw"] = res.text;
    const auto report = risk::parse_risk_output(res.text);
    row["fatal"] = report.fatal;
    for (const auto& w : report.warnings) {
      row["warnings"].push_back({{"line", w.line}, {"message", w.message}});
    }
    for (const auto& a : report.assessments) row["assessments"].push_back(assessment_to_json(a));
  }
  for (const auto& row : rows) {
    if (row.at("fatal").get<bool>()) ++fatal_count;
  }
  write_jsonl(rows, ctx.paths.risk);

  const double fatal_rate =
      rows.empty() ? 0.0 : static_cast<double>(fatal_count) / static_cast<double>(rows.size());
  if (fatal_rate > ctx.cfg.max_fatal_rate) {
    std::ostringstream msg;
    msg << "risk stage: fatal parse rate " << fatal_rate << " exceeds budget " << ctx.cfg.max_fatal_rate
        << " (" << fatal_count << "/" << rows.size() << " clips)";
    throw std::runtime_error(msg.str());
  }
}

void run_suggest_stage(RunContext& ctx) {
  const auto caption_rows = read_jsonl(ctx.paths.captions);
  std::map<std::string, std::string> captions;
  for (const auto& row : caption_rows) {
    captions[row.at("clip_id").get<std::string>()] = row.at("caption").get<std::string>();
  }

  // stage-composition equality requires provenance independent of which
  // stages this particular invocation ran; timestamps only for remote runs
  json provenance;
  provenance["model"] = ctx.cfg.endpoint.model_name;
  provenance["seed"] = ctx.cfg.seed;
  if (is_remote(ctx.cfg.endpoint)) provenance["timestamp"] = utc_timestamp();

  std::vector<json> rows;
  for (const auto& risk_row : read_jsonl(ctx.paths.risk)) {
    std::vector<risk::RiskAssessment> assessments;
    for (const auto& ja : risk_row.at("assessments")) assessments.push_back(assessment_from_json(ja));

    const auto idx = select_primary_index(assessments, ctx.map);
    rules::SafetySuggestion suggestion = rules::SafetySuggestion::NA;
    if (idx) {
      std::vector<std::string> canonical;
      for (const auto& kw : assessments[*idx].keywords) {
        if (auto c = ctx.map.normalize_keyword(kw)) {
          if (std::find(canonical.begin(), canonical.end(), *c) == canonical.end()) {
            canonical.push_back(*c);
          }
        }
      }
      suggestion = rules::map_keywords(ctx.map, canonical);
    }

    const std::string clip_id = risk_row.at("clip_id").get<std::string>();
    json row;
    row["clip_id"] = clip_id;
    row["caption"] = captions.count(clip_id) ? captions[clip_id] : "";
    row["assessments"] = risk_row.at("assessments");
    row["selected"] = idx ? json(*idx) : json(nullptr);
    row["suggestion"] = rules::to_token(suggestion);
    row["provenance"] = provenance;
    rows.push_back(std::move(row));
  }
  write_jsonl(rows, ctx.paths.predictions);
}

}  // namespace

RunResult run(const RunConfig& config) {
  config.validate();

  rules::RuleMap map = rules::load_rule_map(config.rules_path);
  auto annotations = dataset::load_annotations(config.annotations_path, map);
  RunContext ctx{config,
                 stage_paths(config.out_dir),
                 std::move(map),
                 config.prompt_dir.empty() ? prompting::TemplateSet::builtin()
                                           : prompting::TemplateSet::load(config.prompt_dir),
                 std::move(annotations),
                 nullptr};
  fs::create_directories(config.out_dir);

  const bool needs_llm = ctx.enabled(Stage::Caption) || ctx.enabled(Stage::Risk);
  if (needs_llm) ctx.client = llm::make_client(config.endpoint);

  if (ctx.should_run(Stage::Cues, ctx.paths.videorep)) run_cues_stage(ctx);
  if (ctx.should_run(Stage::Caption, ctx.paths.captions)) run_caption_stage(ctx);
  if (ctx.should_run(Stage::Risk, ctx.paths.risk)) run_risk_stage(ctx);
  if (ctx.should_run(Stage::Suggest, ctx.paths.predictions)) run_suggest_stage(ctx);

  RunResult result;
  result.predictions_path = ctx.paths.predictions;
  if (ctx.enabled(Stage::Eval)) {
    std::unique_ptr<llm::Client> judge;
    if (config.judge) judge = llm::make_client(*config.judge);
    const auto report = evaluate_predictions(ctx.paths.predictions, ctx.annotations,
                                             config.thresholds, judge.get());
    std::ofstream json_out(ctx.paths.metrics_json, std::ios::binary);
    json_out << report.to_json().dump(2) << '\n';
    std::ofstream txt_out(ctx.paths.metrics_txt, std::ios::binary);
    txt_out << report.to_table();
    result.report = report;
  }
  return result;
}

}  // namespace drivesafe::pipeline
