#include "drivesafe/prompting.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

namespace drivesafe::prompting {

namespace {

const char* kCaptionSystem =
    "You are an expert driving scene summarizer. Analyze multimodal driving data and produce a "
    "concise, geometry-aware summary.";

const char* kCaptionUser =
    "Given the multimodal inputs for a driving video:\n"
    "\n"
    "{cue_sections}"
    "Video description (d_v): {description}\n"
    "\n"
    "Generate a structured natural language summary that includes:\n"
    "1. Ego vehicle maneuvers (lane changes, turns, stability)\n"
    "2. Behavior of surrounding agents (approaching, overtaking, falling behind)\n"
    "3. Lane position and road context\n"
    "4. Bounding boxes, depth, and motion cues for key objects\n"
    "\n"
    "The output should be a clear paragraph suitable for downstream reasoning tasks.";

const char* kRiskSystem =
    "You are a risk-aware driving scene analyst. Given a caption C_v with object tags and bounding "
    "boxes, analyze risks, explain them, and suggest safety-aware actions.\n"
    "\n"
    "Inputs:\n"
    "Caption (C_v)\n"
    "\n"
    "Outputs (per object):\n"
    "1) Risk label r=Yes or No\n"
    "2) Risk caption (C_r)\n"
    "3) Risk-related keywords (K)\n"
    "4) Object Localization - Bounding box (b)\n"
    "\n"
    "Reasoning should be accurate, structured, and safety-focused.\n"
    "\n"
    "Example Input C_v:\n"
    "\"A cyclist [bbox: 612, 350, 720, 480] is crossing from the left; a red car [bbox: 1000, 400, "
    "1200, 550] is stopped in the ego lane.\"\n"
    "\n"
    "Example Output:\n"
    "1) r=Yes; C_r: cyclist crossing may intersect ego path; K={Cyclist, Crossing}; b=[612, 350, "
    "720, 480].\n"
    "2) r=Yes; C_r: red car stopped in ego lane blocks motion; K={Stopped vehicle}; b=[1000, 400, "
    "1200, 550].";

const char* kRiskUser = "Caption (C_v): {caption}\n\n{instruction}";

const char* kRiskInstruction =
    "Analyze each object mentioned in the caption and output one numbered line per object in the "
    "exact format: N) r=Yes or No; C_r: <one-line risk explanation>; K={<comma-separated "
    "risk-related keywords>}; b=[x_min, y_min, x_max, y_max] or b=none.";

const char* kPseudolabelSystem =
    "You are a driving risk annotation assistant. You label driving-scene captions with "
    "risk-related keywords drawn from a fixed vocabulary.";

const char* kPseudolabelUser =
    "Allowed keywords:\n"
    "{keywords}\n"
    "\n"
    "Caption: {caption}\n"
    "\n"
    "Reply with a comma-separated list of keywords from the allowed list that describe the risky "
    "objects or behaviors in the caption. Reply with none if no keyword applies.";

const char* kJudgeSystem = "You are an impartial judge of caption quality for driving scenes.";

const char* kJudgeUser =
    "Reference caption: {reference}\n"
    "Candidate caption: {candidate}\n"
    "\n"
    "On a scale of 0 to 100, how semantically similar is the candidate caption to the reference? "
    "Reply with the integer score followed by a one-line reason.";

// Replaces every occurrence of the exact token "{key}".
void substitute(std::string& text, std::string_view key, std::string_view value) {
  const std::string token = "{" + std::string(key) + "}";
  std::size_t pos = 0;
  while ((pos = text.find(token, pos)) != std::string::npos) {
    text.replace(pos, token.size(), value);
    pos += value.size();
  }
}

std::string format_fixed(double v, int digits) {
  std::ostringstream out;
  out.setf(std::ios::fixed);
  out.precision(digits);
  out << v;
  return out.str();
}

std::vector<std::size_t> sample_frames(std::size_t n, const PromptConfig& cfg) {
  std::set<std::size_t> picked;
  switch (cfg.sampling) {
    case FrameSampling::All:
      for (std::size_t i = 0; i < n; ++i) picked.insert(i);
      break;
    case FrameSampling::EveryK:
      for (std::size_t i = 0; i < n; i += static_cast<std::size_t>(cfg.every_k)) picked.insert(i);
      break;
    case FrameSampling::FirstMidLast:
      picked.insert(0);
      picked.insert(n / 2);
      picked.insert(n - 1);
      break;
  }
  return {picked.begin(), picked.end()};
}

std::string render_bbox(const BoundingBox& b) {
  std::ostringstream out;
  out << "[bbox: " << std::llround(b.x_min) << ", " << std::llround(b.y_min) << ", "
      << std::llround(b.x_max) << ", " << std::llround(b.y_max) << ']';
  return out.str();
}

std::optional<std::string> read_template_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return std::nullopt;
  std::ostringstream buf;
  buf << in.rdbuf();
  std::string text = buf.str();
  while (!text.empty() && (text.back() == '\n' || text.back() == '\r')) text.pop_back();
  return text;
}

}  // namespace

void PromptConfig::validate() const {
  if (max_objects_per_frame < 1) throw std::invalid_argument("max_objects_per_frame must be >= 1");
  if (every_k < 1) throw std::invalid_argument("every_k must be >= 1");
  if (max_chars == 0) throw std::invalid_argument("max_chars must be positive");
}

const TemplateSet& TemplateSet::builtin() {
  static const TemplateSet t{
      kCaptionSystem,     kCaptionUser,     kRiskSystem,  kRiskUser, kRiskInstruction,
      kPseudolabelSystem, kPseudolabelUser, kJudgeSystem, kJudgeUser,
  };
  return t;
}

TemplateSet TemplateSet::load(const std::filesystem::path& dir) {
  TemplateSet t = builtin();
  struct Slot {
    const char* file;
    std::string TemplateSet::* member;
  };
  static const Slot slots[] = {
      {"caption_system.txt", &TemplateSet::caption_system},
      {"caption_user.txt", &TemplateSet::caption_user},
      {"risk_system.txt", &TemplateSet::risk_system},
      {"risk_user.txt", &TemplateSet::risk_user},
      {"risk_instruction.txt", &TemplateSet::risk_instruction},
      {"pseudolabel_system.txt", &TemplateSet::pseudolabel_system},
      {"pseudolabel_user.txt", &TemplateSet::pseudolabel_user},
      {"judge_system.txt", &TemplateSet::judge_system},
      {"judge_user.txt", &TemplateSet::judge_user},
  };
  for (const auto& slot : slots) {
    if (auto text = read_template_file(dir / slot.file)) t.*slot.member = std::move(*text);
  }
  return t;
}

PromptMessages build_caption_prompt(const cues::VideoRepresentation& x, const PromptConfig& cfg,
                                    const TemplateSet& templates) {
  cfg.validate();
  if (x.frames.empty()) throw std::invalid_argument("video representation has no frames");

  const std::vector<std::size_t> sampled = sample_frames(x.frames.size(), cfg);
  const bool any_cue = cfg.include_spatial || cfg.include_motion || cfg.include_depth;

  std::ostringstream sections;
  if (cfg.include_spatial) {
    sections << "Spatial context (S_t):\n";
    for (std::size_t i : sampled) {
      const auto& f = x.frames[i];
      sections << "- frame " << f.frame_index << ": ego lane position=" << cues::to_string(f.ego_lane)
               << "\n";
    }
  }
  if (cfg.include_motion) {
    sections << "Motion dynamics (M_t):\n";
    for (std::size_t i : sampled) {
      const auto& f = x.frames[i];
      sections << "- frame " << f.frame_index << ": ego motion=(" << format_fixed(f.ego_dx, 2) << ", "
               << format_fixed(f.ego_dy, 2) << ") px/frame\n";
    }
  }
  if (cfg.include_depth) {
    sections << "Depth context (D_t):\n"
             << "- object depth below is relative proximity in [0, 1]; 1.00 = nearest\n";
  }
  if (any_cue) {
    bool any_object = false;
    std::ostringstream objects;
    for (std::size_t i : sampled) {
      const auto& f = x.frames[i];
      std::vector<const cues::ObjectObservation*> sorted;
      sorted.reserve(f.objects.size());
      for (const auto& o : f.objects) sorted.push_back(&o);
      std::stable_sort(sorted.begin(), sorted.end(),
                       [](const auto* a, const auto* b) { return a->depth_stat > b->depth_stat; });
      if (sorted.size() > static_cast<std::size_t>(cfg.max_objects_per_frame)) {
        sorted.resize(static_cast<std::size_t>(cfg.max_objects_per_frame));
      }
      for (const auto* o : sorted) {
        any_object = true;
        objects << "- frame " << f.frame_index << ": obj " << o->object_id << " (" << o->category
                << ") " << render_bbox(o->bbox);
        if (cfg.include_depth) objects << " depth=" << format_fixed(o->depth_stat, 2);
        if (cfg.include_motion) objects << " motion=" << cues::to_string(o->motion);
        if (cfg.include_spatial) objects << " lane=" << cues::to_string(o->lane);
        objects << "\n";
      }
    }
    if (any_object) sections << "Key objects:\n" << objects.str();
  }

  std::string user = templates.caption_user;
  substitute(user, "cue_sections", sections.str());
  substitute(user, "description", x.description);

  PromptMessages out;
  out.messages.push_back({Role::System, templates.caption_system});
  out.messages.push_back({Role::User, std::move(user)});
  if (out.total_chars() > cfg.max_chars) {
    throw std::runtime_error("caption prompt exceeds character budget: " +
                             std::to_string(out.total_chars()) + " > " +
                             std::to_string(cfg.max_chars));
  }
  return out;
}

PromptMessages build_risk_prompt(std::string_view caption, const TemplateSet& templates) {
  if (caption.empty()) throw std::invalid_argument("risk prompt needs a non-empty caption");
  std::string user = templates.risk_user;
  substitute(user, "caption", caption);
  substitute(user, "instruction", templates.risk_instruction);

  PromptMessages out;
  out.messages.push_back({Role::System, templates.risk_system});
  out.messages.push_back({Role::User, std::move(user)});
  return out;
}

PromptMessages build_pseudolabel_prompt(std::string_view gt_caption, const rules::RuleMap& map,
                                        const TemplateSet& templates) {
  if (gt_caption.empty()) throw std::invalid_argument("pseudo-label prompt needs a non-empty caption");
  if (map.empty()) throw std::invalid_argument("pseudo-label prompt needs a non-empty rule map");

  std::ostringstream keywords;
  bool first = true;
  for (const auto& kw : map.keywords()) {
    if (!first) keywords << '\n';
    keywords << "- " << kw;
    first = false;
  }
  std::string user = templates.pseudolabel_user;
  substitute(user, "keywords", keywords.str());
  substitute(user, "caption", gt_caption);

  PromptMessages out;
  out.messages.push_back({Role::System, templates.pseudolabel_system});
  out.messages.push_back({Role::User, std::move(user)});
  return out;
}

PromptMessages build_judge_prompt(std::string_view candidate, std::string_view reference,
                                  const TemplateSet& templates) {
  std::string user = templates.judge_user;
  substitute(user, "candidate", candidate);
  substitute(user, "reference", reference);

  PromptMessages out;
  out.messages.push_back({Role::System, templates.judge_system});
  out.messages.push_back({Role::User, std::move(user)});
  return out;
}

}  // namespace drivesafe::prompting
