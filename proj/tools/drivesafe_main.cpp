#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "drivesafe/dataset.hpp"
#include "drivesafe/pipeline.hpp"

namespace {

int cmd_run(const std::string& config_path, const std::vector<std::string>& stage_names, bool force,
            const std::string& prompt_dir) {
  drivesafe::pipeline::RunConfig config = drivesafe::pipeline::load_config(config_path);
  if (!stage_names.empty()) {
    config.stages.clear();
    for (const auto& name : stage_names) {
      const auto stage = drivesafe::pipeline::stage_from(name);
      if (!stage) {
        std::cerr << "unknown stage '" << name << "'\n";
        return 2;
      }
      config.stages.push_back(*stage);
    }
  }
  config.force = force;
  if (!prompt_dir.empty()) config.prompt_dir = prompt_dir;

  const auto result = drivesafe::pipeline::run(config);
  if (result.report) {
    std::cout << result.report->to_table();
    std::cout << "report: " << (config.out_dir / "metrics.json").string() << "\n";
  }
  std::cout << "predictions: " << result.predictions_path.string() << "\n";
  return 0;
}

int cmd_eval(const std::string& pred_path, const std::string& gt_path, const std::string& rules_path,
             const std::vector<double>& thresholds) {
  const auto map = drivesafe::rules::load_rule_map(rules_path);
  const auto annotations = drivesafe::dataset::load_annotations(gt_path, map);
  const auto report =
      drivesafe::pipeline::evaluate_predictions(pred_path, annotations, thresholds, nullptr);
  std::cout << report.to_table();
  std::cout << report.to_json().dump(2) << "\n";
  return 0;
}

int cmd_pseudo_label(const std::string& annotations_path, const std::string& out_path,
                     const std::string& rules_path, bool force, int max_in_flight,
                     const std::string& endpoint_url, const std::string& model) {
  const auto map = drivesafe::rules::load_rule_map(rules_path);
  auto records = drivesafe::dataset::load_annotations(annotations_path, map);

  drivesafe::llm::LlmEndpoint endpoint;
  endpoint.base_url = endpoint_url;
  endpoint.model_name = model;
  endpoint.apply_env();
  endpoint.validate();
  const auto client = drivesafe::llm::make_client(endpoint);

  const auto summary = drivesafe::dataset::pseudo_label(records, *client, map, force, max_in_flight);
  drivesafe::dataset::save_annotations(records, out_path);

  std::cout << "labeled: " << summary.labeled << ", skipped: " << summary.skipped
            << ", errors: " << summary.errors << ", empty: " << summary.empty_clips.size() << "\n";
  for (const auto& clip : summary.empty_clips) {
    std::cerr << "no keywords survived for clip " << clip << "\n";
  }
  for (const auto& [clip, error] : summary.failures) {
    std::cerr << "clip " << clip << ": " << error << "\n";
  }
  return summary.errors == 0 ? 0 : 1;
}

int cmd_export_triplets(const std::string& annotations_path, const std::string& out_path,
                        const std::string& rules_path, const std::string& split) {
  const auto map = drivesafe::rules::load_rule_map(rules_path);
  auto records = drivesafe::dataset::load_annotations(annotations_path, map);
  if (!split.empty()) {
    const auto wanted = drivesafe::dataset::split_from(split);
    if (!wanted) {
      std::cerr << "unknown split '" << split << "'\n";
      return 2;
    }
    std::erase_if(records, [&](const auto& r) { return r.split != *wanted; });
  }
  const auto summary = drivesafe::dataset::export_finetune_triplets(records, out_path, map);
  std::cout << "written: " << summary.written << ", skipped: " << summary.skipped.size() << "\n";
  for (const auto& [clip, reason] : summary.skipped) {
    std::cerr << "skipped clip " << clip << ": " << reason << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"DriveSafe caption, risk-assessment, and safety-suggestion pipeline"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> stage_names;
  std::string run_prompt_dir;
  bool force = false;
  auto* run_cmd = app.add_subcommand("run", "Run the pipeline stages from a config file");
  run_cmd->add_option("--config", config_path, "Run configuration (TOML)")->required();
  run_cmd->add_option("--stages", stage_names, "Stage subset, comma separated")->delimiter(',');
  run_cmd->add_option("--prompt-dir", run_prompt_dir, "Directory of prompt template overrides");
  run_cmd->add_flag("--force", force, "Recompute stages whose outputs already exist");

  std::string pred_path, gt_path;
  std::string rules_path = "data/rules/drama_rules.tsv";
  std::vector<double> thresholds{0.1, 0.2, 0.3, 0.4, 0.5};
  auto* eval_cmd = app.add_subcommand("eval", "Score a predictions file against annotations");
  eval_cmd->add_option("--pred", pred_path, "Predictions JSONL")->required();
  eval_cmd->add_option("--gt", gt_path, "Annotations JSONL")->required();
  eval_cmd->add_option("--rules", rules_path, "Rule map file");
  eval_cmd->add_option("--thresholds", thresholds, "IoU thresholds")->delimiter(',');

  std::string pl_annotations, pl_out, pl_endpoint, pl_model;
  std::string pl_rules = "data/rules/drama_rules.tsv";
  bool pl_force = false;
  int pl_in_flight = 4;
  auto* pl_cmd = app.add_subcommand("pseudo-label", "LLM keyword labeling of train captions");
  pl_cmd->add_option("--annotations", pl_annotations, "Annotations JSONL")->required();
  pl_cmd->add_option("--out", pl_out, "Output annotations JSONL")->required();
  pl_cmd->add_option("--rules", pl_rules, "Rule map file");
  pl_cmd->add_option("--endpoint", pl_endpoint, "Chat-completion base URL (or DRIVESAFE_LLM_URL)");
  pl_cmd->add_option("--model", pl_model, "Model name (or DRIVESAFE_LLM_MODEL)");
  pl_cmd->add_flag("--force", pl_force, "Overwrite existing keywords");
  pl_cmd->add_option("--max-in-flight", pl_in_flight, "Concurrent LLM requests");

  std::string tr_annotations, tr_out, tr_split;
  std::string tr_rules = "data/rules/drama_rules.tsv";
  auto* tr_cmd = app.add_subcommand("export-triplets", "Export caption-instruction-response triplets");
  tr_cmd->add_option("--annotations", tr_annotations, "Annotations JSONL")->required();
  tr_cmd->add_option("--out", tr_out, "Output triplets JSONL")->required();
  tr_cmd->add_option("--rules", tr_rules, "Rule map file");
  tr_cmd->add_option("--split", tr_split, "Restrict to one split (train or test)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run_cmd->parsed()) return cmd_run(config_path, stage_names, force, run_prompt_dir);
    if (eval_cmd->parsed()) return cmd_eval(pred_path, gt_path, rules_path, thresholds);
    if (pl_cmd->parsed()) {
      return cmd_pseudo_label(pl_annotations, pl_out, pl_rules, pl_force, pl_in_flight, pl_endpoint, pl_model);
    }
    if (tr_cmd->parsed()) return cmd_export_triplets(tr_annotations, tr_out, tr_rules, tr_split);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
