#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "drivesafe/cues.hpp"
#include "drivesafe/dataset.hpp"
#include "drivesafe/llm_client.hpp"
#include "drivesafe/metrics.hpp"
#include "drivesafe/prompting.hpp"
#include "drivesafe/risk_parser.hpp"
#include "drivesafe/rule_engine.hpp"

namespace drivesafe::pipeline {

enum class Stage { Cues, Caption, Risk, Suggest, Eval };

const char* to_string(Stage s);
std::optional<Stage> stage_from(std::string_view s);

struct RunConfig {
  llm::LlmEndpoint endpoint;
  std::optional<llm::LlmEndpoint> judge;  // CLAIR judge; omitted -> no CLAIR
  prompting::PromptConfig prompt;
  cues::FlowParams flow;
  int flow_stride = 1;

  std::filesystem::path annotations_path;
  std::filesystem::path cues_root;   // cue bundle directories live under here
  std::filesystem::path out_dir;
  std::filesystem::path rules_path;
  std::filesystem::path prompt_dir;  // empty -> built-in templates

  std::vector<Stage> stages{Stage::Cues, Stage::Caption, Stage::Risk, Stage::Suggest, Stage::Eval};
  std::vector<double> thresholds{0.1, 0.2, 0.3, 0.4, 0.5};
  std::uint64_t seed = 0;
  double max_fatal_rate = 0.1;
  int max_in_flight = 4;
  bool force = false;

  // stages must be a contiguous slice of the canonical order
  void validate() const;
};

// Parses the TOML-subset config file (docs/formats.md); endpoint fields fall
// back to the DRIVESAFE_LLM_* environment variables.
RunConfig load_config(const std::filesystem::path& path);

struct RunResult {
  std::optional<metrics::MetricReport> report;  // present when eval ran
  std::filesystem::path predictions_path;
};

// Executes the configured stages, writing one JSONL artifact per stage under
// out_dir (videorep/captions/risk/predictions + metrics.json). Stages whose
// output already exists are skipped unless force is set. Throws
// std::runtime_error on the first fatal condition.
RunResult run(const RunConfig& config);

// Reduces multi-object assessments to the one driving the benchmark label:
// highest rule-priority category among risky items, ties broken by larger
// bbox area, then first occurrence.
std::optional<std::size_t> select_primary_index(const std::vector<risk::RiskAssessment>& assessments,
                                                const rules::RuleMap& map);
std::optional<risk::RiskAssessment> select_primary_assessment(
    const std::vector<risk::RiskAssessment>& assessments, const rules::RuleMap& map);

// Scores a predictions file against annotations; judge enables CLAIR.
metrics::MetricReport evaluate_predictions(const std::filesystem::path& predictions_path,
                                           const std::vector<dataset::AnnotationRecord>& annotations,
                                           const std::vector<double>& thresholds,
                                           llm::Client* judge = nullptr);

}  // namespace drivesafe::pipeline
