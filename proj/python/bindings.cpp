#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "drivesafe/cues.hpp"
#include "drivesafe/llm_client.hpp"
#include "drivesafe/metrics.hpp"
#include "drivesafe/pipeline.hpp"
#include "drivesafe/prompting.hpp"
#include "drivesafe/risk_parser.hpp"
#include "drivesafe/rule_engine.hpp"

namespace py = pybind11;
using namespace drivesafe;

namespace {

using MessageList = std::vector<std::pair<std::string, std::string>>;

prompting::PromptMessages to_messages(const MessageList& raw) {
  prompting::PromptMessages out;
  for (const auto& [role, text] : raw) {
    if (role != "system" && role != "user") {
      throw std::invalid_argument("message role must be 'system' or 'user'");
    }
    out.messages.push_back({role == "system" ? prompting::Role::System : prompting::Role::User, text});
  }
  return out;
}

MessageList from_messages(const prompting::PromptMessages& prompt) {
  MessageList out;
  for (const auto& m : prompt.messages) {
    out.emplace_back(m.role == prompting::Role::System ? "system" : "user", m.text);
  }
  return out;
}

cues::GrayFrame frame_from_array(const py::array_t<float, py::array::c_style | py::array::forcecast>& arr) {
  if (arr.ndim() != 2) throw std::invalid_argument("frame must be a 2-D array");
  cues::GrayFrame frame;
  frame.height = static_cast<int>(arr.shape(0));
  frame.width = static_cast<int>(arr.shape(1));
  frame.pixels.assign(arr.data(), arr.data() + arr.size());
  return frame;
}

py::tuple flow_to_arrays(const cues::FlowField& flow) {
  py::array_t<float> dx({flow.height, flow.width});
  py::array_t<float> dy({flow.height, flow.width});
  std::copy(flow.dx.begin(), flow.dx.end(), dx.mutable_data());
  std::copy(flow.dy.begin(), flow.dy.end(), dy.mutable_data());
  return py::make_tuple(dx, dy);
}

}  // namespace

PYBIND11_MODULE(_drivesafe, m) {
  m.doc() = "Driving-scene captioning, risk assessment, and safety-suggestion toolkit";

  // ---- geometry
  py::class_<BoundingBox>(m, "BoundingBox")
      .def(py::init([](double x_min, double y_min, double x_max, double y_max) {
             return make_box(x_min, y_min, x_max, y_max);
           }),
           py::arg("x_min"), py::arg("y_min"), py::arg("x_max"), py::arg("y_max"))
      .def_readonly("x_min", &BoundingBox::x_min)
      .def_readonly("y_min", &BoundingBox::y_min)
      .def_readonly("x_max", &BoundingBox::x_max)
      .def_readonly("y_max", &BoundingBox::y_max)
      .def("area", &BoundingBox::area)
      .def("__eq__", [](const BoundingBox& a, const BoundingBox& b) { return a == b; })
      .def("__repr__", [](const BoundingBox& b) {
        return "BoundingBox(" + std::to_string(b.x_min) + ", " + std::to_string(b.y_min) + ", " +
               std::to_string(b.x_max) + ", " + std::to_string(b.y_max) + ")";
      });

  // ---- rule engine
  py::enum_<rules::SafetySuggestion>(m, "SafetySuggestion")
      .value("MUST_STOP", rules::SafetySuggestion::MustStop)
      .value("YIELD", rules::SafetySuggestion::Yield)
      .value("SLOW_DOWN", rules::SafetySuggestion::SlowDown)
      .value("CAREFULLY_MANEUVER", rules::SafetySuggestion::CarefullyManeuver)
      .value("BE_AWARE_CAUTIOUS", rules::SafetySuggestion::BeAwareCautious)
      .value("FOLLOW_VEHICLE_AHEAD", rules::SafetySuggestion::FollowVehicleAhead)
      .value("START_MOVING", rules::SafetySuggestion::StartMoving)
      .value("NA", rules::SafetySuggestion::NA);

  py::class_<rules::RuleMap>(m, "RuleMap")
      .def("__len__", &rules::RuleMap::size)
      .def("keywords", &rules::RuleMap::keywords)
      .def("normalize_keyword",
           [](const rules::RuleMap& map, const std::string& raw) { return map.normalize_keyword(raw); })
      .def("category_of",
           [](const rules::RuleMap& map, const std::string& kw) { return map.category_of(kw); })
      .def("instance_count",
           [](const rules::RuleMap& map, const std::string& kw) { return map.instance_count(kw); });

  m.def("load_rule_map", &rules::load_rule_map, py::arg("path"));
  m.def(
      "map_keywords",
      [](const rules::RuleMap& map, const std::vector<std::string>& keywords) {
        return rules::map_keywords(map, keywords);
      },
      py::arg("rule_map"), py::arg("canonical_keywords"));
  m.def("suggestion_token", [](rules::SafetySuggestion s) { return std::string(rules::to_token(s)); });
  m.def("suggestion_display_name",
        [](rules::SafetySuggestion s) { return std::string(rules::display_name(s)); });

  // ---- risk parser
  py::class_<risk::RiskAssessment>(m, "RiskAssessment")
      .def(py::init<>())
      .def_readwrite("risky", &risk::RiskAssessment::risky)
      .def_readwrite("risk_caption", &risk::RiskAssessment::risk_caption)
      .def_readwrite("keywords", &risk::RiskAssessment::keywords)
      .def_readwrite("bbox", &risk::RiskAssessment::bbox)
      .def("__eq__",
           [](const risk::RiskAssessment& a, const risk::RiskAssessment& b) { return a == b; });

  py::class_<risk::ParseWarning>(m, "ParseWarning")
      .def_readonly("line", &risk::ParseWarning::line)
      .def_readonly("message", &risk::ParseWarning::message);

  py::class_<risk::ParseReport>(m, "ParseReport")
      .def_readonly("assessments", &risk::ParseReport::assessments)
      .def_readonly("warnings", &risk::ParseReport::warnings)
      .def_readonly("fatal", &risk::ParseReport::fatal);

  m.def("parse_risk_output", &risk::parse_risk_output, py::arg("text"));
  m.def("parse_bbox", &risk::parse_bbox, py::arg("fragment"));
  m.def(
      "parse_keyword_list",
      [](const std::string& fragment, const rules::RuleMap& map) {
        std::vector<std::string> dropped;
        auto kept = risk::parse_keyword_list(fragment, map, &dropped);
        return py::make_tuple(kept, dropped);
      },
      py::arg("fragment"), py::arg("rule_map"));
  m.def("render_assessment", &risk::render_assessment, py::arg("assessment"), py::arg("index") = 1);
  m.def("render_assessments", &risk::render_assessments, py::arg("assessments"));

  // ---- metrics
  m.def("tokenize", [](const std::string& text) { return metrics::tokenize(text); }, py::arg("text"));
  m.def("porter_stem", [](const std::string& word) { return metrics::porter_stem(word); },
        py::arg("word"));
  m.def("corpus_bleu", &metrics::corpus_bleu, py::arg("candidates"), py::arg("references"),
        py::arg("max_n"));
  m.def("rouge_l", &metrics::rouge_l, py::arg("candidate"), py::arg("references"));
  m.def("meteor", &metrics::meteor, py::arg("candidate"), py::arg("references"));
  m.def(
      "cider",
      [](const std::vector<metrics::TokenSequence>& cands,
         const std::vector<std::vector<metrics::TokenSequence>>& refs) {
        return metrics::cider(cands, refs);
      },
      py::arg("candidates"), py::arg("references"));
  m.def("iou", &metrics::iou, py::arg("a"), py::arg("b"));

  py::class_<metrics::GroundingResult>(m, "GroundingResult")
      .def_readonly("mean_iou_all", &metrics::GroundingResult::mean_iou_all)
      .def_readonly("mean_iou_matched", &metrics::GroundingResult::mean_iou_matched)
      .def_readonly("n_matched", &metrics::GroundingResult::n_matched)
      .def_readonly("acc_at", &metrics::GroundingResult::acc_at);
  m.def("grounding_metrics", &metrics::grounding_metrics, py::arg("predictions"),
        py::arg("ground_truths"),
        py::arg("thresholds") = std::vector<double>{0.1, 0.2, 0.3, 0.4, 0.5});

  py::class_<metrics::SuggestionResult>(m, "SuggestionResult")
      .def_readonly("accuracy", &metrics::SuggestionResult::accuracy)
      .def_readonly("f1_weighted", &metrics::SuggestionResult::f1_weighted)
      .def_readonly("n_scored", &metrics::SuggestionResult::n_scored);
  m.def("suggestion_metrics", &metrics::suggestion_metrics, py::arg("predictions"),
        py::arg("ground_truths"));

  // ---- cues
  py::enum_<cues::MotionLabel>(m, "MotionLabel")
      .value("APPROACHING", cues::MotionLabel::Approaching)
      .value("RECEDING", cues::MotionLabel::Receding)
      .value("LATERAL_LEFT", cues::MotionLabel::LateralLeft)
      .value("LATERAL_RIGHT", cues::MotionLabel::LateralRight)
      .value("STATIC", cues::MotionLabel::Static);

  py::enum_<cues::LaneRelation>(m, "LaneRelation")
      .value("EGO_LANE", cues::LaneRelation::EgoLane)
      .value("ADJACENT_LEFT", cues::LaneRelation::AdjacentLeft)
      .value("ADJACENT_RIGHT", cues::LaneRelation::AdjacentRight)
      .value("OFF_ROAD", cues::LaneRelation::OffRoad)
      .value("UNKNOWN", cues::LaneRelation::Unknown);

  py::enum_<cues::EgoLanePosition>(m, "EgoLanePosition")
      .value("LEFT", cues::EgoLanePosition::Left)
      .value("CENTER", cues::EgoLanePosition::Center)
      .value("RIGHT", cues::EgoLanePosition::Right)
      .value("UNKNOWN", cues::EgoLanePosition::Unknown);

  py::class_<cues::FlowParams>(m, "FlowParams")
      .def(py::init<>())
      .def_readwrite("pyramid_levels", &cues::FlowParams::pyramid_levels)
      .def_readwrite("pyr_scale", &cues::FlowParams::pyr_scale)
      .def_readwrite("window_size", &cues::FlowParams::window_size)
      .def_readwrite("iterations", &cues::FlowParams::iterations)
      .def_readwrite("poly_n", &cues::FlowParams::poly_n)
      .def_readwrite("poly_sigma", &cues::FlowParams::poly_sigma);

  m.def(
      "compute_dense_flow",
      [](const py::array_t<float, py::array::c_style | py::array::forcecast>& prev,
         const py::array_t<float, py::array::c_style | py::array::forcecast>& next,
         const cues::FlowParams& params) {
        return flow_to_arrays(cues::compute_dense_flow(frame_from_array(prev), frame_from_array(next),
                                                       params));
      },
      py::arg("prev"), py::arg("next"), py::arg("params") = cues::FlowParams{},
      "Dense prev->next flow over [0, 1] luminance arrays; returns (dx, dy).");

  py::class_<cues::ObjectObservation>(m, "ObjectObservation")
      .def(py::init<>())
      .def_readwrite("object_id", &cues::ObjectObservation::object_id)
      .def_readwrite("category", &cues::ObjectObservation::category)
      .def_readwrite("bbox", &cues::ObjectObservation::bbox)
      .def_readwrite("depth_stat", &cues::ObjectObservation::depth_stat)
      .def_readwrite("motion", &cues::ObjectObservation::motion)
      .def_readwrite("lane", &cues::ObjectObservation::lane);

  py::class_<cues::FrameCues>(m, "FrameCues")
      .def(py::init<>())
      .def_readwrite("frame_index", &cues::FrameCues::frame_index)
      .def_readwrite("objects", &cues::FrameCues::objects)
      .def_readwrite("ego_dx", &cues::FrameCues::ego_dx)
      .def_readwrite("ego_dy", &cues::FrameCues::ego_dy)
      .def_readwrite("ego_lane", &cues::FrameCues::ego_lane);

  py::class_<cues::VideoRepresentation>(m, "VideoRepresentation")
      .def(py::init<>())
      .def_readwrite("clip_id", &cues::VideoRepresentation::clip_id)
      .def_readwrite("frames", &cues::VideoRepresentation::frames)
      .def_readwrite("description", &cues::VideoRepresentation::description);

  // ---- prompting
  py::enum_<prompting::FrameSampling>(m, "FrameSampling")
      .value("ALL", prompting::FrameSampling::All)
      .value("EVERY_K", prompting::FrameSampling::EveryK)
      .value("FIRST_MID_LAST", prompting::FrameSampling::FirstMidLast);

  py::class_<prompting::PromptConfig>(m, "PromptConfig")
      .def(py::init<>())
      .def_readwrite("max_objects_per_frame", &prompting::PromptConfig::max_objects_per_frame)
      .def_readwrite("sampling", &prompting::PromptConfig::sampling)
      .def_readwrite("every_k", &prompting::PromptConfig::every_k)
      .def_readwrite("include_spatial", &prompting::PromptConfig::include_spatial)
      .def_readwrite("include_motion", &prompting::PromptConfig::include_motion)
      .def_readwrite("include_depth", &prompting::PromptConfig::include_depth)
      .def_readwrite("max_chars", &prompting::PromptConfig::max_chars);

  m.def(
      "build_caption_prompt",
      [](const cues::VideoRepresentation& rep, const prompting::PromptConfig& cfg) {
        return from_messages(prompting::build_caption_prompt(rep, cfg));
      },
      py::arg("video"), py::arg("config") = prompting::PromptConfig{});
  m.def(
      "build_risk_prompt",
      [](const std::string& caption) { return from_messages(prompting::build_risk_prompt(caption)); },
      py::arg("caption"));
  m.def(
      "build_pseudolabel_prompt",
      [](const std::string& caption, const rules::RuleMap& map) {
        return from_messages(prompting::build_pseudolabel_prompt(caption, map));
      },
      py::arg("caption"), py::arg("rule_map"));

  // ---- llm client (mock + remote)
  py::class_<llm::CompletionResult>(m, "CompletionResult")
      .def_readonly("text", &llm::CompletionResult::text)
      .def_readonly("prompt_tokens", &llm::CompletionResult::prompt_tokens)
      .def_readonly("completion_tokens", &llm::CompletionResult::completion_tokens)
      .def_readonly("error", &llm::CompletionResult::error)
      .def_readonly("attempts", &llm::CompletionResult::attempts)
      .def_property_readonly("ok", &llm::CompletionResult::ok)
      .def_property_readonly("status",
                             [](const llm::CompletionResult& r) { return std::string(llm::to_string(r.status)); });

  py::class_<llm::LlmEndpoint>(m, "LlmEndpoint")
      .def(py::init<>())
      .def_readwrite("base_url", &llm::LlmEndpoint::base_url)
      .def_readwrite("model_name", &llm::LlmEndpoint::model_name)
      .def_readwrite("api_key", &llm::LlmEndpoint::api_key)
      .def_readwrite("timeout_seconds", &llm::LlmEndpoint::timeout_seconds)
      .def_readwrite("max_retries", &llm::LlmEndpoint::max_retries)
      .def_readwrite("temperature", &llm::LlmEndpoint::temperature)
      .def_readwrite("max_tokens", &llm::LlmEndpoint::max_tokens)
      .def_readwrite("retry_base_seconds", &llm::LlmEndpoint::retry_base_seconds)
      .def("apply_env", &llm::LlmEndpoint::apply_env);

  py::class_<llm::Client>(m, "Client")
      .def(
          "complete",
          [](llm::Client& client, const MessageList& messages) {
            return client.complete(to_messages(messages));
          },
          py::arg("messages"));
  m.def("make_client", &llm::make_client, py::arg("endpoint"), py::keep_alive<0, 1>());
  m.def(
      "complete_batch",
      [](llm::Client& client, const std::vector<MessageList>& prompts, int max_in_flight) {
        std::vector<prompting::PromptMessages> converted;
        converted.reserve(prompts.size());
        for (const auto& p : prompts) converted.push_back(to_messages(p));
        py::gil_scoped_release release;
        return llm::complete_batch(client, converted, max_in_flight);
      },
      py::arg("client"), py::arg("prompts"), py::arg("max_in_flight") = 4);
  m.def(
      "prompt_hash_hex",
      [](const MessageList& messages) { return llm::prompt_hash_hex(to_messages(messages)); },
      py::arg("messages"));

  // ---- pipeline selection helper
  m.def(
      "select_primary_assessment",
      [](const std::vector<risk::RiskAssessment>& assessments, const rules::RuleMap& map) {
        return pipeline::select_primary_assessment(assessments, map);
      },
      py::arg("assessments"), py::arg("rule_map"));
}
