#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "drivesafe/geometry.hpp"

namespace drivesafe::cues {

// Single-channel luminance frame, values in [0, 1], row-major.
struct GrayFrame {
  int width = 0;
  int height = 0;
  std::vector<float> pixels;

  float at(int x, int y) const { return pixels[static_cast<std::size_t>(y) * width + x]; }
  float& at(int x, int y) { return pixels[static_cast<std::size_t>(y) * width + x]; }
  void validate() const;
};

// Per-pixel displacement in pixels/frame, planar dx/dy, row-major.
struct FlowField {
  int width = 0;
  int height = 0;
  std::vector<float> dx;
  std::vector<float> dy;

  float dx_at(int x, int y) const { return dx[static_cast<std::size_t>(y) * width + x]; }
  float dy_at(int x, int y) const { return dy[static_cast<std::size_t>(y) * width + x]; }
};

// Drivable-area and lane masks; may overlap.
struct SegmentationMasks {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> drivable;
  std::vector<std::uint8_t> lane;

  bool drivable_at(int x, int y) const { return drivable[static_cast<std::size_t>(y) * width + x] != 0; }
};

// Relative depth in [0, 1], 1 = nearest to the ego vehicle.
struct DepthMap {
  int width = 0;
  int height = 0;
  std::vector<float> values;

  float at(int x, int y) const { return values[static_cast<std::size_t>(y) * width + x]; }
  void validate() const;
};

enum class MotionLabel { Approaching, Receding, LateralLeft, LateralRight, Static };
enum class LaneRelation { EgoLane, AdjacentLeft, AdjacentRight, OffRoad, Unknown };
enum class EgoLanePosition { Left, Center, Right, Unknown };

const char* to_string(MotionLabel v);
const char* to_string(LaneRelation v);
const char* to_string(EgoLanePosition v);
std::optional<MotionLabel> motion_label_from(std::string_view s);
std::optional<LaneRelation> lane_relation_from(std::string_view s);
std::optional<EgoLanePosition> ego_lane_position_from(std::string_view s);

struct ObjectObservation {
  std::string object_id;
  std::string category;
  BoundingBox bbox;
  double depth_stat = 0.0;  // relative depth in [0, 1]
  MotionLabel motion = MotionLabel::Static;
  LaneRelation lane = LaneRelation::Unknown;
};

struct FrameCues {
  int frame_index = 0;
  std::vector<ObjectObservation> objects;
  double ego_dx = 0.0;  // pixels/frame
  double ego_dy = 0.0;
  EgoLanePosition ego_lane = EgoLanePosition::Unknown;
};

// X_v: per-frame cues plus the video-level description d_v.
struct VideoRepresentation {
  std::string clip_id;
  std::vector<FrameCues> frames;  // ordered by frame_index
  std::string description;
};

// Two-frame polynomial-expansion flow parameters; the defaults are the
// published algorithm's canonical ones.
struct FlowParams {
  int pyramid_levels = 3;
  double pyr_scale = 0.5;
  int window_size = 15;
  int iterations = 3;
  int poly_n = 5;
  double poly_sigma = 1.1;
};

// Motion classification thresholds (documented, unit-tested heuristics):
// depth change per frame above this decides Approaching/Receding...
inline constexpr double kDepthDeltaThreshold = 0.02;
// ...otherwise ego-compensated |dx| above this decides LateralLeft/Right.
inline constexpr double kLateralFlowThreshold = 4.0;

// Dense prev->next displacement. Deterministic for fixed params. Throws on
// dimension mismatch or a frame smaller than the window.
FlowField compute_dense_flow(const GrayFrame& prev, const GrayFrame& next,
                             const FlowParams& params = {});

// Component-wise median of the flow over drivable pixels; (0, 0) when the
// mask is empty. Even counts take the lower median.
std::pair<double, double> estimate_ego_motion(const FlowField& flow, const SegmentationMasks& masks);

// Classifies object motion from the depth delta (when available) and the
// ego-compensated median flow inside the bbox.
MotionLabel summarize_object_motion(const FlowField& flow, const BoundingBox& bbox,
                                    std::pair<double, double> ego_motion, double depth_now,
                                    std::optional<double> depth_prev);

// Median relative depth inside the bbox.
double aggregate_object_depth(const DepthMap& depth, const BoundingBox& bbox);

// Footprint (bottom 20% of the bbox) vs. the middle-third ego corridor and
// the drivable mask; Unknown when the masks are empty.
LaneRelation infer_lane_relation(const SegmentationMasks& masks, const BoundingBox& bbox);

}  // namespace drivesafe::cues
