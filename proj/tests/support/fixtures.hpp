#pragma once

// Shared synthetic inputs: multi-scale sinusoid textures for flow tests and
// a fully authored 3-clip end-to-end fixture (cue bundles, annotations, mock
// LLM fixtures, run config).

#include <atomic>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "drivesafe/cue_io.hpp"
#include "drivesafe/cues.hpp"

namespace testsupport {

namespace fs = std::filesystem;

// True when fn() throws a std::exception whose message contains needle.
template <typename F>
bool throws_containing(F&& fn, const std::string& needle) {
  try {
    fn();
  } catch (const std::exception& e) {
    return std::string(e.what()).find(needle) != std::string::npos;
  }
  return false;
}

// Self-cleaning unique directory under the system temp dir.
struct TempDir {
  fs::path path;

  explicit TempDir(const std::string& tag) {
    static std::atomic<unsigned> counter{0};
    path = fs::temp_directory_path() /
           ("drivesafe_" + tag + "_" +
            std::to_string(std::chrono::steady_clock::now().time_since_epoch().count()) + "_" +
            std::to_string(counter++));
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
};

// Smooth texture with structure at several scales; shifting the offsets by
// (sx, sy) displaces the image content by exactly that amount.
inline drivesafe::cues::GrayFrame make_texture_frame(int width, int height, unsigned seed,
                                                     double shift_x = 0.0, double shift_y = 0.0) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> angle(0.0, 2.0 * M_PI);
  struct Wave {
    double ux, uy, phase;
  };
  const double wavelengths[] = {9.7, 17.3, 31.9};
  std::vector<Wave> waves;
  for (double lambda : wavelengths) {
    const double theta = angle(rng);
    waves.push_back({std::cos(theta) / lambda, std::sin(theta) / lambda, angle(rng)});
  }

  drivesafe::cues::GrayFrame frame;
  frame.width = width;
  frame.height = height;
  frame.pixels.resize(static_cast<std::size_t>(width) * height);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      double v = 0.0;
      for (const auto& w : waves) {
        v += std::sin(2.0 * M_PI * ((x - shift_x) * w.ux + (y - shift_y) * w.uy) + w.phase);
      }
      frame.at(x, y) = static_cast<float>(0.5 + v / 6.0);
    }
  }
  return frame;
}

struct E2eClip {
  std::string clip_id;
  std::string description;   // d_v (appears only in caption prompts)
  std::string caption;       // mock caption == ground-truth caption
  std::string caption_hook;  // substring unique to the caption
  std::string dv_hook;       // substring unique to d_v
  std::string risk_output;
  std::vector<int> bbox;
  std::string suggestion_token;
};

inline std::vector<E2eClip> e2e_clips() {
  return {
      {"clip_a",
       "a car has come to a halt in front",
       "A silver sedan is stopped in the ego lane ahead of the ego vehicle.",
       "stopped in the ego lane ahead",
       "come to a halt in front",
       "1) r=Yes; C_r: the stopped sedan blocks the ego lane; K={Stopped vehicle}; "
       "b=[40, 52, 88, 90].",
       {40, 52, 88, 90},
       "must_stop"},
      {"clip_b",
       "a person on a bicycle is near the road edge",
       "A cyclist rides along the right edge near the crosswalk area.",
       "rides along the right edge",
       "person on a bicycle",
       "1) r=Yes; C_r: the cyclist may swerve into the ego path; K={Cyclist}; b=[10, 40, 34, 78].",
       {10, 40, 34, 78},
       "slow_down"},
      {"clip_c",
       "vehicles are coming from the opposite direction",
       "Oncoming traffic approaches while the ego vehicle waits to turn left.",
       "waits to turn left",
       "coming from the opposite direction",
       "1) r=Yes; C_r: oncoming traffic has the right of way; K={Oncoming traffic}; "
       "b=[50, 30, 90, 60].",
       {50, 30, 90, 60},
       "yield"},
  };
}

inline void write_e2e_cue_bundle(const fs::path& dir, const E2eClip& clip, unsigned seed) {
  using namespace drivesafe::cues;
  const int size = 96;
  CueBundle bundle;
  bundle.clip_id = clip.clip_id;
  bundle.width = size;
  bundle.height = size;

  for (int t = 0; t < 2; ++t) {
    FrameBundle fb;
    fb.index = t;
    fb.frame = make_texture_frame(size, size, seed);  // static scene: zero flow

    SegmentationMasks masks;
    masks.width = size;
    masks.height = size;
    masks.drivable.assign(static_cast<std::size_t>(size) * size, 0);
    masks.lane.assign(static_cast<std::size_t>(size) * size, 0);
    for (int y = size / 2; y < size; ++y) {
      for (int x = 0; x < size; ++x) masks.drivable[static_cast<std::size_t>(y) * size + x] = 1;
    }
    for (int y = size / 2; y < size; ++y) masks.lane[static_cast<std::size_t>(y) * size + size / 3] = 1;
    fb.masks = masks;

    DepthMap depth;
    depth.width = size;
    depth.height = size;
    depth.values.assign(static_cast<std::size_t>(size) * size, 0.6f);
    fb.depth = depth;

    DetectionInput det;
    det.object_id = "obj1";
    det.category = "vehicle";
    det.bbox = drivesafe::make_box(clip.bbox[0], clip.bbox[1], clip.bbox[2], clip.bbox[3]);
    fb.detections.push_back(det);

    bundle.frames.push_back(std::move(fb));
  }
  save_cue_bundle(bundle, dir);
}

// Lays out annotations.jsonl, cue bundles, mock fixtures, and a run config
// under `dir`. Returns the config path. `rules_path` should point at the
// repository rule file.
inline fs::path make_e2e_fixture(const fs::path& dir, const fs::path& rules_path,
                                 const fs::path& out_dir) {
  fs::create_directories(dir / "cues");
  const auto clips = e2e_clips();

  {
    std::ofstream ann(dir / "annotations.jsonl", std::ios::binary);
    for (const auto& clip : clips) {
      nlohmann::json j;
      j["clip_id"] = clip.clip_id;
      j["split"] = "test";
      j["caption"] = clip.caption;
      j["bbox"] = clip.bbox;
      j["suggestion"] = clip.suggestion_token;
      j["description"] = clip.description;
      j["cue_bundle"] = clip.clip_id;
      ann << j.dump() << "\n";
    }
  }

  unsigned seed = 7;
  for (const auto& clip : clips) {
    write_e2e_cue_bundle(dir / "cues" / clip.clip_id, clip, seed++);
  }

  {
    nlohmann::json fixtures;
    fixtures["default"] = "";
    nlohmann::json contains = nlohmann::json::array();
    for (const auto& clip : clips) {  // risk rules first: keyed on caption text
      contains.push_back({{"substring", clip.caption_hook}, {"text", clip.risk_output}});
    }
    for (const auto& clip : clips) {
      contains.push_back({{"substring", clip.dv_hook}, {"text", clip.caption}});
    }
    fixtures["contains"] = contains;
    std::ofstream out(dir / "fixtures.json", std::ios::binary);
    out << fixtures.dump(2) << "\n";
  }

  const fs::path config_path = dir / "config.toml";
  {
    std::ofstream cfg(config_path, std::ios::binary);
    cfg << "[endpoint]\n"
        << "base_url = \"mock://" << (dir / "fixtures.json").string() << "\"\n"
        << "model = \"mock-model\"\n"
        << "max_retries = 1\n"
        << "\n[run]\n"
        << "annotations = \"" << (dir / "annotations.jsonl").string() << "\"\n"
        << "cues_dir = \"" << (dir / "cues").string() << "\"\n"
        << "out_dir = \"" << out_dir.string() << "\"\n"
        << "rules = \"" << rules_path.string() << "\"\n"
        << "max_in_flight = 2\n";
  }
  return config_path;
}

inline std::string read_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::string out((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return out;
}

}  // namespace testsupport
