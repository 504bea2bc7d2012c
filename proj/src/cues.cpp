#include "drivesafe/cues.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace drivesafe::cues {

namespace {

struct PixelRect {
  int x0, y0, x1, y1;  // half-open
  bool empty() const { return x0 >= x1 || y0 >= y1; }
};

PixelRect rasterize(const BoundingBox& bbox, int width, int height) {
  PixelRect r;
  r.x0 = std::max(0, static_cast<int>(std::floor(bbox.x_min)));
  r.y0 = std::max(0, static_cast<int>(std::floor(bbox.y_min)));
  r.x1 = std::min(width, static_cast<int>(std::ceil(bbox.x_max)));
  r.y1 = std::min(height, static_cast<int>(std::ceil(bbox.y_max)));
  return r;
}

// lower median: element at index floor((n-1)/2) of the sorted values
double lower_median(std::vector<double>& values) {
  const std::size_t k = (values.size() - 1) / 2;
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(k), values.end());
  return values[k];
}

}  // namespace

void GrayFrame::validate() const {
  if (width < 8 || height < 8) throw std::invalid_argument("frame must be at least 8x8");
  if (pixels.size() != static_cast<std::size_t>(width) * height) {
    throw std::invalid_argument("frame pixel count does not match dimensions");
  }
  for (float v : pixels) {
    if (!std::isfinite(v) || v < 0.0f || v > 1.0f) {
      throw std::invalid_argument("frame pixels must be finite and in [0, 1]");
    }
  }
}

void DepthMap::validate() const {
  if (values.size() != static_cast<std::size_t>(width) * height) {
    throw std::invalid_argument("depth value count does not match dimensions");
  }
  for (float v : values) {
    if (!std::isfinite(v) || v < 0.0f || v > 1.0f) {
      throw std::invalid_argument("depth values must be finite and in [0, 1]");
    }
  }
}

const char* to_string(MotionLabel v) {
  switch (v) {
    case MotionLabel::Approaching: return "Approaching";
    case MotionLabel::Receding: return "Receding";
    case MotionLabel::LateralLeft: return "LateralLeft";
    case MotionLabel::LateralRight: return "LateralRight";
    default: return "Static";
  }
}

const char* to_string(LaneRelation v) {
  switch (v) {
    case LaneRelation::EgoLane: return "EgoLane";
    case LaneRelation::AdjacentLeft: return "AdjacentLeft";
    case LaneRelation::AdjacentRight: return "AdjacentRight";
    case LaneRelation::OffRoad: return "OffRoad";
    default: return "Unknown";
  }
}

const char* to_string(EgoLanePosition v) {
  switch (v) {
    case EgoLanePosition::Left: return "Left";
    case EgoLanePosition::Center: return "Center";
    case EgoLanePosition::Right: return "Right";
    default: return "Unknown";
  }
}

std::optional<MotionLabel> motion_label_from(std::string_view s) {
  for (auto v : {MotionLabel::Approaching, MotionLabel::Receding, MotionLabel::LateralLeft,
                 MotionLabel::LateralRight, MotionLabel::Static}) {
    if (s == to_string(v)) return v;
  }
  return std::nullopt;
}

std::optional<LaneRelation> lane_relation_from(std::string_view s) {
  for (auto v : {LaneRelation::EgoLane, LaneRelation::AdjacentLeft, LaneRelation::AdjacentRight,
                 LaneRelation::OffRoad, LaneRelation::Unknown}) {
    if (s == to_string(v)) return v;
  }
  return std::nullopt;
}

std::optional<EgoLanePosition> ego_lane_position_from(std::string_view s) {
  for (auto v : {EgoLanePosition::Left, EgoLanePosition::Center, EgoLanePosition::Right,
                 EgoLanePosition::Unknown}) {
    if (s == to_string(v)) return v;
  }
  return std::nullopt;
}

std::pair<double, double> estimate_ego_motion(const FlowField& flow, const SegmentationMasks& masks) {
  if (flow.width != masks.width || flow.height != masks.height) {
    throw std::invalid_argument("ego motion: flow/mask dimension mismatch");
  }
  std::vector<double> xs, ys;
  for (int y = 0; y < flow.height; ++y) {
    for (int x = 0; x < flow.width; ++x) {
      if (masks.drivable_at(x, y)) {
        xs.push_back(flow.dx_at(x, y));
        ys.push_back(flow.dy_at(x, y));
      }
    }
  }
  if (xs.empty()) return {0.0, 0.0};
  return {lower_median(xs), lower_median(ys)};
}

MotionLabel summarize_object_motion(const FlowField& flow, const BoundingBox& bbox,
                                    std::pair<double, double> ego_motion, double depth_now,
                                    std::optional<double> depth_prev) {
  const PixelRect r = rasterize(bbox, flow.width, flow.height);
  if (r.empty()) throw std::invalid_argument("object motion: bbox has no pixels inside the flow field");

  if (depth_prev) {
    const double delta = depth_now - *depth_prev;
    if (std::abs(delta) > kDepthDeltaThreshold) {
      return delta > 0.0 ? MotionLabel::Approaching : MotionLabel::Receding;
    }
  }

  std::vector<double> xs;
  xs.reserve(static_cast<std::size_t>(r.x1 - r.x0) * static_cast<std::size_t>(r.y1 - r.y0));
  for (int y = r.y0; y < r.y1; ++y) {
    for (int x = r.x0; x < r.x1; ++x) xs.push_back(flow.dx_at(x, y));
  }
  const double rel_dx = lower_median(xs) - ego_motion.first;
  if (std::abs(rel_dx) > kLateralFlowThreshold) {
    return rel_dx < 0.0 ? MotionLabel::LateralLeft : MotionLabel::LateralRight;
  }
  return MotionLabel::Static;
}

double aggregate_object_depth(const DepthMap& depth, const BoundingBox& bbox) {
  const PixelRect r = rasterize(bbox, depth.width, depth.height);
  if (r.empty()) throw std::invalid_argument("object depth: bbox has no pixels inside the depth map");
  std::vector<double> values;
  values.reserve(static_cast<std::size_t>(r.x1 - r.x0) * static_cast<std::size_t>(r.y1 - r.y0));
  for (int y = r.y0; y < r.y1; ++y) {
    for (int x = r.x0; x < r.x1; ++x) values.push_back(depth.at(x, y));
  }
  return lower_median(values);
}

LaneRelation infer_lane_relation(const SegmentationMasks& masks, const BoundingBox& bbox) {
  const PixelRect full = rasterize(bbox, masks.width, masks.height);
  if (full.empty()) throw std::invalid_argument("lane relation: bbox has no pixels inside the masks");

  bool any_true = false;
  for (std::size_t i = 0; i < masks.drivable.size() && !any_true; ++i) {
    any_true = masks.drivable[i] != 0 || masks.lane[i] != 0;
  }
  if (!any_true) return LaneRelation::Unknown;

  // footprint: bottom 20% band of the bbox
  BoundingBox foot = bbox;
  foot.y_min = bbox.y_max - 0.2 * bbox.height();
  const PixelRect fr = rasterize(foot, masks.width, masks.height);
  if (fr.empty()) return LaneRelation::OffRoad;

  // ego corridor: middle third of the frame width
  const double corridor_lo = masks.width / 2.0 - masks.width / 6.0;
  const double corridor_hi = masks.width / 2.0 + masks.width / 6.0;

  bool on_drivable = false;
  bool in_corridor_on_drivable = false;
  for (int y = fr.y0; y < fr.y1; ++y) {
    for (int x = fr.x0; x < fr.x1; ++x) {
      if (!masks.drivable_at(x, y)) continue;
      on_drivable = true;
      const double cx = x + 0.5;
      if (cx >= corridor_lo && cx <= corridor_hi) in_corridor_on_drivable = true;
    }
  }
  if (in_corridor_on_drivable) return LaneRelation::EgoLane;
  if (!on_drivable) return LaneRelation::OffRoad;
  const double center_x = 0.5 * (bbox.x_min + bbox.x_max);
  return center_x < masks.width / 2.0 ? LaneRelation::AdjacentLeft : LaneRelation::AdjacentRight;
}

}  // namespace drivesafe::cues
