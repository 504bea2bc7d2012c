#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "drivesafe/cues.hpp"
#include "drivesafe/rule_engine.hpp"

namespace drivesafe::prompting {

enum class Role { System, User };

struct Message {
  Role role = Role::System;
  std::string text;

  bool operator==(const Message&) const = default;
};

struct PromptMessages {
  std::vector<Message> messages;

  std::size_t total_chars() const {
    std::size_t n = 0;
    for (const auto& m : messages) n += m.text.size();
    return n;
  }

  bool operator==(const PromptMessages&) const = default;
};

enum class FrameSampling { All, EveryK, FirstMidLast };

struct PromptConfig {
  int max_objects_per_frame = 8;
  FrameSampling sampling = FrameSampling::FirstMidLast;
  int every_k = 1;
  bool include_spatial = true;  // S_t
  bool include_motion = true;   // M_t
  bool include_depth = true;    // D_t
  std::size_t max_chars = 16000;

  void validate() const;
};

// Plain-text templates with {name} placeholders. Defaults are compiled in
// and mirrored under prompts/; a prompt directory overrides per file.
struct TemplateSet {
  std::string caption_system;
  std::string caption_user;      // {cue_sections} {description}
  std::string risk_system;
  std::string risk_user;         // {caption} {instruction}
  std::string risk_instruction;  // the fixed output-format instruction
  std::string pseudolabel_system;
  std::string pseudolabel_user;  // {keywords} {caption}
  std::string judge_system;
  std::string judge_user;        // {candidate} {reference}

  static const TemplateSet& builtin();
  static TemplateSet load(const std::filesystem::path& dir);
};

// P(X_v): the structured caption prompt. Disabled cue sections are omitted
// entirely; objects are truncated per frame to the nearest (largest
// depth_stat) max_objects_per_frame. Throws when the rendered prompt
// exceeds cfg.max_chars, reporting the measured size.
PromptMessages build_caption_prompt(const cues::VideoRepresentation& x, const PromptConfig& cfg,
                                    const TemplateSet& templates = TemplateSet::builtin());

// The risk-assessment prompt over a generated caption C_v.
PromptMessages build_risk_prompt(std::string_view caption,
                                 const TemplateSet& templates = TemplateSet::builtin());

// Keyword pseudo-labeling prompt enumerating the closed vocabulary.
PromptMessages build_pseudolabel_prompt(std::string_view gt_caption, const rules::RuleMap& map,
                                        const TemplateSet& templates = TemplateSet::builtin());

// Caption-similarity judge prompt (0-100 scale).
PromptMessages build_judge_prompt(std::string_view candidate, std::string_view reference,
                                  const TemplateSet& templates = TemplateSet::builtin());

}  // namespace drivesafe::prompting
