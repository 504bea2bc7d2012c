#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "drivesafe/cues.hpp"

namespace drivesafe::cues {

// Raw per-clip inputs as stored on disk: a cues.json header next to PGM
// frames/masks and float32 flow/depth arrays. Field names in docs/formats.md.
struct DetectionInput {
  std::string object_id;
  std::string category;
  BoundingBox bbox;
};

struct FrameBundle {
  int index = 0;
  std::optional<GrayFrame> frame;
  std::optional<FlowField> flow;
  std::optional<SegmentationMasks> masks;
  std::optional<DepthMap> depth;
  std::vector<DetectionInput> detections;
};

struct CueBundle {
  std::string clip_id;
  int width = 0;
  int height = 0;
  std::vector<FrameBundle> frames;
};

CueBundle load_cue_bundle(const std::filesystem::path& dir);
void save_cue_bundle(const CueBundle& bundle, const std::filesystem::path& dir);

// Runs the cue operations over a loaded bundle: flow (precomputed or
// computed from frames at `stride`), ego motion, per-object depth, motion
// labels, and lane relations. The description field is left empty.
VideoRepresentation extract_cues(const CueBundle& bundle, const FlowParams& params = {},
                                 int stride = 1);

// Binary PGM (P5, maxval 255). Frames map to [0, 1]; masks treat nonzero
// as true.
GrayFrame load_pgm(const std::filesystem::path& path);
void save_pgm(const GrayFrame& frame, const std::filesystem::path& path);
std::vector<std::uint8_t> load_mask_pgm(const std::filesystem::path& path, int& width, int& height);
void save_mask_pgm(const std::vector<std::uint8_t>& mask, int width, int height,
                   const std::filesystem::path& path);

// Little-endian float32 arrays, row-major, no padding.
std::vector<float> load_f32(const std::filesystem::path& path, std::size_t expected_count);
void save_f32(const std::vector<float>& values, const std::filesystem::path& path);

}  // namespace drivesafe::cues
