#include "drivesafe/cue_io.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace drivesafe::cues {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << content;
}

// PGM header token reader that skips '#' comments.
struct PgmHeader {
  int width = 0;
  int height = 0;
  int maxval = 0;
  std::size_t data_offset = 0;
};

PgmHeader parse_pgm_header(const std::string& raw, const fs::path& path) {
  if (raw.size() < 2 || raw[0] != 'P' || raw[1] != '5') {
    throw std::runtime_error(path.string() + ": not a binary PGM (P5)");
  }
  std::size_t pos = 2;
  auto next_int = [&]() {
    while (pos < raw.size()) {
      const char c = raw[pos];
      if (c == '#') {
        while (pos < raw.size() && raw[pos] != '\n') ++pos;
      } else if (std::isspace(static_cast<unsigned char>(c))) {
        ++pos;
      } else {
        break;
      }
    }
    int value = 0;
    bool any = false;
    while (pos < raw.size() && std::isdigit(static_cast<unsigned char>(raw[pos]))) {
      value = value * 10 + (raw[pos] - '0');
      any = true;
      ++pos;
    }
    if (!any) throw std::runtime_error(path.string() + ": malformed PGM header");
    return value;
  };
  PgmHeader h;
  h.width = next_int();
  h.height = next_int();
  h.maxval = next_int();
  if (h.maxval != 255) throw std::runtime_error(path.string() + ": PGM maxval must be 255");
  ++pos;  // single whitespace after maxval
  h.data_offset = pos;
  const std::size_t need = static_cast<std::size_t>(h.width) * h.height;
  if (raw.size() - pos < need) throw std::runtime_error(path.string() + ": truncated PGM data");
  return h;
}

json bbox_to_json(const BoundingBox& b) {
  return json::array({b.x_min, b.y_min, b.x_max, b.y_max});
}

BoundingBox bbox_from_json(const json& j) {
  if (!j.is_array() || j.size() != 4) throw std::runtime_error("bbox must be a 4-element array");
  return make_box(j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>());
}

std::string frame_file_name(const char* stem, int index, const char* ext) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%s_%04d.%s", stem, index, ext);
  return buf;
}

}  // namespace

GrayFrame load_pgm(const fs::path& path) {
  const std::string raw = read_file(path);
  const PgmHeader h = parse_pgm_header(raw, path);
  GrayFrame frame;
  frame.width = h.width;
  frame.height = h.height;
  frame.pixels.resize(static_cast<std::size_t>(h.width) * h.height);
  for (std::size_t i = 0; i < frame.pixels.size(); ++i) {
    frame.pixels[i] = static_cast<float>(static_cast<unsigned char>(raw[h.data_offset + i])) / 255.0f;
  }
  return frame;
}

void save_pgm(const GrayFrame& frame, const fs::path& path) {
  std::string out = "P5\n" + std::to_string(frame.width) + " " + std::to_string(frame.height) + "\n255\n";
  out.reserve(out.size() + frame.pixels.size());
  for (float v : frame.pixels) {
    const float clamped = std::clamp(v, 0.0f, 1.0f);
    out.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(clamped * 255.0f))));
  }
  write_file(path, out);
}

std::vector<std::uint8_t> load_mask_pgm(const fs::path& path, int& width, int& height) {
  const std::string raw = read_file(path);
  const PgmHeader h = parse_pgm_header(raw, path);
  width = h.width;
  height = h.height;
  std::vector<std::uint8_t> mask(static_cast<std::size_t>(h.width) * h.height);
  for (std::size_t i = 0; i < mask.size(); ++i) {
    mask[i] = raw[h.data_offset + i] != 0 ? 1 : 0;
  }
  return mask;
}

void save_mask_pgm(const std::vector<std::uint8_t>& mask, int width, int height, const fs::path& path) {
  if (mask.size() != static_cast<std::size_t>(width) * height) {
    throw std::invalid_argument("mask size does not match dimensions");
  }
  std::string out = "P5\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n";
  out.reserve(out.size() + mask.size());
  for (std::uint8_t v : mask) out.push_back(static_cast<char>(v ? 255 : 0));
  write_file(path, out);
}

std::vector<float> load_f32(const fs::path& path, std::size_t expected_count) {
  const std::string raw = read_file(path);
  if (raw.size() != expected_count * 4) {
    throw std::runtime_error(path.string() + ": expected " + std::to_string(expected_count * 4) +
                             " bytes, got " + std::to_string(raw.size()));
  }
  std::vector<float> out(expected_count);
  for (std::size_t i = 0; i < expected_count; ++i) {
    const auto* p = reinterpret_cast<const unsigned char*>(raw.data() + i * 4);
    const std::uint32_t bits = static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
                               (static_cast<std::uint32_t>(p[2]) << 16) |
                               (static_cast<std::uint32_t>(p[3]) << 24);
    float v;
    std::memcpy(&v, &bits, 4);
    out[i] = v;
  }
  return out;
}

void save_f32(const std::vector<float>& values, const fs::path& path) {
  std::string out;
  out.resize(values.size() * 4);
  for (std::size_t i = 0; i < values.size(); ++i) {
    std::uint32_t bits;
    std::memcpy(&bits, &values[i], 4);
    out[i * 4 + 0] = static_cast<char>(bits & 0xFF);
    out[i * 4 + 1] = static_cast<char>((bits >> 8) & 0xFF);
    out[i * 4 + 2] = static_cast<char>((bits >> 16) & 0xFF);
    out[i * 4 + 3] = static_cast<char>((bits >> 24) & 0xFF);
  }
  write_file(path, out);
}

CueBundle load_cue_bundle(const fs::path& dir) {
  const fs::path header_path = dir / "cues.json";
  json header;
  try {
    header = json::parse(read_file(header_path));
  } catch (const json::parse_error& e) {
    throw std::runtime_error(header_path.string() + ": " + e.what());
  }

  CueBundle bundle;
  bundle.clip_id = header.at("clip_id").get<std::string>();
  bundle.width = header.at("width").get<int>();
  bundle.height = header.at("height").get<int>();
  const std::size_t n_pixels = static_cast<std::size_t>(bundle.width) * bundle.height;

  for (const auto& jf : header.at("frames")) {
    FrameBundle fb;
    fb.index = jf.at("index").get<int>();

    if (jf.contains("frame")) {
      fb.frame = load_pgm(dir / jf.at("frame").get<std::string>());
      if (fb.frame->width != bundle.width || fb.frame->height != bundle.height) {
        throw std::runtime_error(bundle.clip_id + ": frame dimensions disagree with header");
      }
    }
    if (jf.contains("flow")) {
      const auto raw = load_f32(dir / jf.at("flow").get<std::string>(), n_pixels * 2);
      FlowField flow;
      flow.width = bundle.width;
      flow.height = bundle.height;
      flow.dx.resize(n_pixels);
      flow.dy.resize(n_pixels);
      for (std::size_t i = 0; i < n_pixels; ++i) {
        flow.dx[i] = raw[i * 2];
        flow.dy[i] = raw[i * 2 + 1];
      }
      fb.flow = std::move(flow);
    }
    if (jf.contains("depth")) {
      DepthMap depth;
      depth.width = bundle.width;
      depth.height = bundle.height;
      depth.values = load_f32(dir / jf.at("depth").get<std::string>(), n_pixels);
      depth.validate();
      fb.depth = std::move(depth);
    }
    if (jf.contains("drivable_mask") || jf.contains("lane_mask")) {
      SegmentationMasks masks;
      masks.width = bundle.width;
      masks.height = bundle.height;
      masks.drivable.assign(n_pixels, 0);
      masks.lane.assign(n_pixels, 0);
      int w = 0, h = 0;
      if (jf.contains("drivable_mask")) {
        masks.drivable = load_mask_pgm(dir / jf.at("drivable_mask").get<std::string>(), w, h);
        if (w != bundle.width || h != bundle.height) {
          throw std::runtime_error(bundle.clip_id + ": drivable mask dimensions disagree with header");
        }
      }
      if (jf.contains("lane_mask")) {
        masks.lane = load_mask_pgm(dir / jf.at("lane_mask").get<std::string>(), w, h);
        if (w != bundle.width || h != bundle.height) {
          throw std::runtime_error(bundle.clip_id + ": lane mask dimensions disagree with header");
        }
      }
      fb.masks = std::move(masks);
    }
    if (jf.contains("objects")) {
      for (const auto& jo : jf.at("objects")) {
        DetectionInput det;
        det.object_id = jo.at("id").get<std::string>();
        det.category = jo.at("category").get<std::string>();
        det.bbox = bbox_from_json(jo.at("bbox"));
        fb.detections.push_back(std::move(det));
      }
    }
    bundle.frames.push_back(std::move(fb));
  }

  std::sort(bundle.frames.begin(), bundle.frames.end(),
            [](const FrameBundle& a, const FrameBundle& b) { return a.index < b.index; });
  for (std::size_t i = 1; i < bundle.frames.size(); ++i) {
    if (bundle.frames[i].index == bundle.frames[i - 1].index) {
      throw std::runtime_error(bundle.clip_id + ": duplicate frame index " +
                               std::to_string(bundle.frames[i].index));
    }
  }
  return bundle;
}

void save_cue_bundle(const CueBundle& bundle, const fs::path& dir) {
  fs::create_directories(dir);
  json header;
  header["clip_id"] = bundle.clip_id;
  header["width"] = bundle.width;
  header["height"] = bundle.height;
  json frames = json::array();
  const std::size_t n_pixels = static_cast<std::size_t>(bundle.width) * bundle.height;

  for (const auto& fb : bundle.frames) {
    json jf;
    jf["index"] = fb.index;
    if (fb.frame) {
      const std::string name = frame_file_name("frame", fb.index, "pgm");
      save_pgm(*fb.frame, dir / name);
      jf["frame"] = name;
    }
    if (fb.flow) {
      std::vector<float> raw(n_pixels * 2);
      for (std::size_t i = 0; i < n_pixels; ++i) {
        raw[i * 2] = fb.flow->dx[i];
        raw[i * 2 + 1] = fb.flow->dy[i];
      }
      const std::string name = frame_file_name("flow", fb.index, "f32");
      save_f32(raw, dir / name);
      jf["flow"] = name;
    }
    if (fb.depth) {
      const std::string name = frame_file_name("depth", fb.index, "f32");
      save_f32(fb.depth->values, dir / name);
      jf["depth"] = name;
    }
    if (fb.masks) {
      const std::string dname = frame_file_name("drivable", fb.index, "pgm");
      const std::string lname = frame_file_name("lane", fb.index, "pgm");
      save_mask_pgm(fb.masks->drivable, bundle.width, bundle.height, dir / dname);
      save_mask_pgm(fb.masks->lane, bundle.width, bundle.height, dir / lname);
      jf["drivable_mask"] = dname;
      jf["lane_mask"] = lname;
    }
    if (!fb.detections.empty()) {
      json objects = json::array();
      for (const auto& det : fb.detections) {
        objects.push_back({{"id", det.object_id}, {"category", det.category}, {"bbox", bbox_to_json(det.bbox)}});
      }
      jf["objects"] = objects;
    }
    frames.push_back(std::move(jf));
  }
  header["frames"] = frames;
  write_file(dir / "cues.json", header.dump(2) + "\n");
}

VideoRepresentation extract_cues(const CueBundle& bundle, const FlowParams& params, int stride) {
  if (bundle.frames.empty()) throw std::invalid_argument(bundle.clip_id + ": bundle has no frames");
  if (stride < 1) throw std::invalid_argument("stride must be >= 1");

  const std::size_t n_pixels = static_cast<std::size_t>(bundle.width) * bundle.height;

  auto empty_masks = [&]() {
    SegmentationMasks m;
    m.width = bundle.width;
    m.height = bundle.height;
    m.drivable.assign(n_pixels, 0);
    m.lane.assign(n_pixels, 0);
    return m;
  };
  auto zero_flow = [&]() {
    FlowField f;
    f.width = bundle.width;
    f.height = bundle.height;
    f.dx.assign(n_pixels, 0.0f);
    f.dy.assign(n_pixels, 0.0f);
    return f;
  };

  VideoRepresentation rep;
  rep.clip_id = bundle.clip_id;

  for (std::size_t t = 0; t < bundle.frames.size(); ++t) {
    const FrameBundle& fb = bundle.frames[t];
    const SegmentationMasks masks = fb.masks ? *fb.masks : empty_masks();

    FlowField flow;
    if (fb.flow) {
      flow = *fb.flow;
    } else if (t >= static_cast<std::size_t>(stride) && fb.frame &&
               bundle.frames[t - static_cast<std::size_t>(stride)].frame) {
      flow = compute_dense_flow(*bundle.frames[t - static_cast<std::size_t>(stride)].frame, *fb.frame,
                                params);
    } else {
      flow = zero_flow();
    }

    FrameCues cues;
    cues.frame_index = fb.index;
    const auto ego = estimate_ego_motion(flow, masks);
    cues.ego_dx = ego.first;
    cues.ego_dy = ego.second;

    // ego lane position from the drivable-mask centroid (thirds of the frame)
    double cx_sum = 0.0;
    std::size_t n_drivable = 0;
    for (int y = 0; y < masks.height; ++y) {
      for (int x = 0; x < masks.width; ++x) {
        if (masks.drivable_at(x, y)) {
          cx_sum += x + 0.5;
          ++n_drivable;
        }
      }
    }
    if (n_drivable == 0) {
      cues.ego_lane = EgoLanePosition::Unknown;
    } else {
      const double cx = cx_sum / static_cast<double>(n_drivable);
      if (cx < bundle.width / 3.0) {
        cues.ego_lane = EgoLanePosition::Left;
      } else if (cx > 2.0 * bundle.width / 3.0) {
        cues.ego_lane = EgoLanePosition::Right;
      } else {
        cues.ego_lane = EgoLanePosition::Center;
      }
    }

    const FrameCues* prev =
        t >= static_cast<std::size_t>(stride) ? &rep.frames[t - static_cast<std::size_t>(stride)] : nullptr;
    for (const auto& det : fb.detections) {
      ObjectObservation obs;
      obs.object_id = det.object_id;
      obs.category = det.category;
      obs.bbox = det.bbox;
      obs.depth_stat = fb.depth ? aggregate_object_depth(*fb.depth, det.bbox) : 0.0;
      obs.lane = infer_lane_relation(masks, det.bbox);

      std::optional<double> depth_prev;
      if (prev && !det.object_id.empty()) {
        for (const auto& po : prev->objects) {
          if (po.object_id == det.object_id) {
            depth_prev = po.depth_stat;
            break;
          }
        }
      }
      obs.motion = summarize_object_motion(flow, det.bbox, ego, obs.depth_stat, depth_prev);
      cues.objects.push_back(std::move(obs));
    }
    rep.frames.push_back(std::move(cues));
  }
  return rep;
}

}  // namespace drivesafe::cues
