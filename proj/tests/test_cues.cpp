#include <cmath>
#include <random>

#include "doctest.h"

#include "drivesafe/cue_io.hpp"
#include "drivesafe/cues.hpp"
#include "support/fixtures.hpp"
#include "support/oracles.hpp"

using namespace drivesafe;
using namespace drivesafe::cues;
namespace fs = std::filesystem;

namespace {

double interior_median_dx(const FlowField& flow, int margin) {
  std::vector<double> values;
  for (int y = margin; y < flow.height - margin; ++y) {
    for (int x = margin; x < flow.width - margin; ++x) values.push_back(flow.dx_at(x, y));
  }
  return oracle::median_sorted(values);
}

double interior_median_dy(const FlowField& flow, int margin) {
  std::vector<double> values;
  for (int y = margin; y < flow.height - margin; ++y) {
    for (int x = margin; x < flow.width - margin; ++x) values.push_back(flow.dy_at(x, y));
  }
  return oracle::median_sorted(values);
}

FlowField constant_flow(int w, int h, float dx, float dy) {
  FlowField f;
  f.width = w;
  f.height = h;
  f.dx.assign(static_cast<std::size_t>(w) * h, dx);
  f.dy.assign(static_cast<std::size_t>(w) * h, dy);
  return f;
}

SegmentationMasks full_drivable(int w, int h) {
  SegmentationMasks m;
  m.width = w;
  m.height = h;
  m.drivable.assign(static_cast<std::size_t>(w) * h, 1);
  m.lane.assign(static_cast<std::size_t>(w) * h, 0);
  return m;
}

}  // namespace

TEST_CASE("identical frames give zero flow everywhere") {
  const auto frame = testsupport::make_texture_frame(96, 96, 5);
  const auto flow = compute_dense_flow(frame, frame);
  float max_mag = 0.0f;
  for (std::size_t i = 0; i < flow.dx.size(); ++i) {
    max_mag = std::max(max_mag, std::abs(flow.dx[i]));
    max_mag = std::max(max_mag, std::abs(flow.dy[i]));
  }
  CHECK(max_mag <= 1e-6f);
}

TEST_CASE("one-pixel right shift recovers dx near 1") {
  const auto prev = testsupport::make_texture_frame(128, 128, 21);
  const auto next = testsupport::make_texture_frame(128, 128, 21, 1.0, 0.0);
  const auto flow = compute_dense_flow(prev, next);
  const double mdx = interior_median_dx(flow, 16);
  const double mdy = interior_median_dy(flow, 16);
  CHECK(mdx >= 0.8);
  CHECK(mdx <= 1.2);
  CHECK(std::abs(mdy) <= 0.2);
}

TEST_CASE("two-pixel downward shift recovers dy near 2") {
  const auto prev = testsupport::make_texture_frame(128, 128, 33);
  const auto next = testsupport::make_texture_frame(128, 128, 33, 0.0, 2.0);
  const auto flow = compute_dense_flow(prev, next);
  const double mdy = interior_median_dy(flow, 16);
  CHECK(mdy >= 1.6);
  CHECK(mdy <= 2.4);
}

TEST_CASE("flow input validation") {
  const auto a = testsupport::make_texture_frame(64, 64, 1);
  const auto b = testsupport::make_texture_frame(96, 96, 1);
  CHECK_THROWS_AS(compute_dense_flow(a, b), std::invalid_argument);

  const auto tiny = testsupport::make_texture_frame(10, 10, 1);
  CHECK(testsupport::throws_containing([&] { compute_dense_flow(tiny, tiny); },
                                       "too small for window"));

  FlowParams bad;
  bad.window_size = 14;
  CHECK_THROWS_AS(compute_dense_flow(a, a, bad), std::invalid_argument);
  bad = {};
  bad.pyr_scale = 1.5;
  CHECK_THROWS_AS(compute_dense_flow(a, a, bad), std::invalid_argument);
}

TEST_CASE("flow is deterministic for fixed params") {
  const auto prev = testsupport::make_texture_frame(96, 96, 8);
  const auto next = testsupport::make_texture_frame(96, 96, 8, 0.7, -0.4);
  const auto f1 = compute_dense_flow(prev, next);
  const auto f2 = compute_dense_flow(prev, next);
  CHECK(f1.dx == f2.dx);
  CHECK(f1.dy == f2.dy);
}

TEST_CASE("ego motion median over the drivable mask") {
  SUBCASE("uniform flow, full mask") {
    const auto flow = constant_flow(32, 32, 1.0f, 0.0f);
    const auto ego = estimate_ego_motion(flow, full_drivable(32, 32));
    CHECK(ego.first == doctest::Approx(1.0));
    CHECK(ego.second == doctest::Approx(0.0));
  }

  SUBCASE("empty mask degrades to zero") {
    const auto flow = constant_flow(32, 32, 5.0f, 5.0f);
    SegmentationMasks empty = full_drivable(32, 32);
    std::fill(empty.drivable.begin(), empty.drivable.end(), 0);
    const auto ego = estimate_ego_motion(flow, empty);
    CHECK(ego.first == 0.0);
    CHECK(ego.second == 0.0);
  }

  SUBCASE("even count takes the lower median") {
    FlowField flow = constant_flow(2, 1, 0.0f, 0.0f);
    flow.dx = {2.0f, 4.0f};
    SegmentationMasks m = full_drivable(2, 1);
    const auto ego = estimate_ego_motion(flow, m);
    CHECK(ego.first == doctest::Approx(2.0));
  }

  SUBCASE("matches a brute-force median over mask pixels") {
    std::mt19937 rng(17);
    FlowField flow = constant_flow(20, 20, 0.0f, 0.0f);
    SegmentationMasks m = full_drivable(20, 20);
    std::vector<double> xs, ys;
    for (std::size_t i = 0; i < flow.dx.size(); ++i) {
      flow.dx[i] = static_cast<float>(rng() % 100) / 10.0f;
      flow.dy[i] = static_cast<float>(rng() % 100) / 10.0f;
      m.drivable[i] = rng() % 2;
      if (m.drivable[i]) {
        xs.push_back(flow.dx[i]);
        ys.push_back(flow.dy[i]);
      }
    }
    const auto ego = estimate_ego_motion(flow, m);
    CHECK(ego.first == doctest::Approx(oracle::median_sorted(xs)));
    CHECK(ego.second == doctest::Approx(oracle::median_sorted(ys)));
  }

  SUBCASE("dimension mismatch throws") {
    CHECK_THROWS_AS(estimate_ego_motion(constant_flow(8, 8, 0, 0), full_drivable(9, 9)),
                    std::invalid_argument);
  }
}

TEST_CASE("object motion classification") {
  const auto bbox = make_box(8, 8, 24, 24);

  SUBCASE("object flow equals ego flow, depth unchanged -> Static") {
    const auto flow = constant_flow(32, 32, 3.0f, 0.0f);
    CHECK(summarize_object_motion(flow, bbox, {3.0, 0.0}, 0.5, 0.5) == MotionLabel::Static);
  }

  SUBCASE("depth delta forces Approaching / Receding") {
    const auto flow = constant_flow(32, 32, 0.0f, 0.0f);
    CHECK(summarize_object_motion(flow, bbox, {0, 0}, 0.6, 0.5) == MotionLabel::Approaching);
    CHECK(summarize_object_motion(flow, bbox, {0, 0}, 0.4, 0.5) == MotionLabel::Receding);
    // below the 0.02 threshold: falls through to the lateral rule
    CHECK(summarize_object_motion(flow, bbox, {0, 0}, 0.51, 0.5) == MotionLabel::Static);
  }

  SUBCASE("lateral threshold on ego-compensated median flow") {
    const auto left = constant_flow(32, 32, -6.0f, 0.0f);
    CHECK(summarize_object_motion(left, bbox, {0, 0}, 0.5, std::nullopt) == MotionLabel::LateralLeft);
    const auto right = constant_flow(32, 32, 6.0f, 0.0f);
    CHECK(summarize_object_motion(right, bbox, {0, 0}, 0.5, std::nullopt) == MotionLabel::LateralRight);
    const auto mild = constant_flow(32, 32, 2.0f, 0.0f);
    CHECK(summarize_object_motion(mild, bbox, {0, 0}, 0.5, std::nullopt) == MotionLabel::Static);
  }

  SUBCASE("invariant to adding a constant to flow and ego motion") {
    std::mt19937 rng(4);
    FlowField flow = constant_flow(32, 32, 0.0f, 0.0f);
    for (std::size_t i = 0; i < flow.dx.size(); ++i) {
      flow.dx[i] = static_cast<float>(static_cast<int>(rng() % 17) - 8);
      flow.dy[i] = static_cast<float>(static_cast<int>(rng() % 17) - 8);
    }
    const auto base = summarize_object_motion(flow, bbox, {1.0, -2.0}, 0.5, 0.48);
    FlowField shifted = flow;
    for (std::size_t i = 0; i < shifted.dx.size(); ++i) {
      shifted.dx[i] += 11.0f;
      shifted.dy[i] -= 7.0f;
    }
    CHECK(summarize_object_motion(shifted, bbox, {12.0, -9.0}, 0.5, 0.48) == base);
  }

  SUBCASE("bbox outside the field throws") {
    const auto flow = constant_flow(16, 16, 0.0f, 0.0f);
    CHECK_THROWS_AS(summarize_object_motion(flow, make_box(20, 20, 30, 30), {0, 0}, 0.5, std::nullopt),
                    std::invalid_argument);
  }
}

TEST_CASE("object depth aggregation") {
  SUBCASE("constant map") {
    DepthMap depth{8, 8, std::vector<float>(64, 0.5f)};
    CHECK(aggregate_object_depth(depth, make_box(1, 1, 5, 5)) == doctest::Approx(0.5));
  }

  SUBCASE("odd-count median") {
    DepthMap depth{3, 1, {0.1f, 0.2f, 0.9f}};
    CHECK(aggregate_object_depth(depth, make_box(0, 0, 3, 1)) == doctest::Approx(0.2));
  }

  SUBCASE("random patch equals the sort-based oracle and stays within range") {
    std::mt19937 rng(9);
    DepthMap depth{20, 20, {}};
    depth.values.resize(400);
    for (auto& v : depth.values) v = static_cast<float>(rng() % 1000) / 999.0f;
    const auto box = make_box(3, 4, 17, 15);
    const double med = aggregate_object_depth(depth, box);
    std::vector<double> inside;
    for (int y = 4; y < 15; ++y) {
      for (int x = 3; x < 17; ++x) inside.push_back(depth.at(x, y));
    }
    CHECK(med == doctest::Approx(oracle::median_sorted(inside)));
    CHECK(med >= *std::min_element(inside.begin(), inside.end()));
    CHECK(med <= *std::max_element(inside.begin(), inside.end()));
  }

  SUBCASE("degenerate bbox throws") {
    DepthMap depth{8, 8, std::vector<float>(64, 0.5f)};
    CHECK_THROWS_AS(aggregate_object_depth(depth, make_box(10, 10, 12, 12)), std::invalid_argument);
  }
}

TEST_CASE("lane relation inference") {
  const int size = 90;
  auto masks = full_drivable(size, size);

  SUBCASE("bbox at the image midline over drivable pixels -> EgoLane") {
    CHECK(infer_lane_relation(masks, make_box(40, 40, 55, 60)) == LaneRelation::EgoLane);
  }

  SUBCASE("left / right adjacency outside the corridor") {
    CHECK(infer_lane_relation(masks, make_box(0, 40, 12, 60)) == LaneRelation::AdjacentLeft);
    CHECK(infer_lane_relation(masks, make_box(78, 40, 89, 60)) == LaneRelation::AdjacentRight);
  }

  SUBCASE("footprint off the drivable mask -> OffRoad") {
    auto m = masks;
    std::fill(m.drivable.begin(), m.drivable.end(), 0);
    for (int y = 60; y < size; ++y) {
      for (int x = 0; x < size; ++x) m.drivable[static_cast<std::size_t>(y) * size + x] = 1;
    }
    // bbox high in the image, footprint above the drivable region
    CHECK(infer_lane_relation(m, make_box(40, 5, 55, 25)) == LaneRelation::OffRoad);
  }

  SUBCASE("all-false masks -> Unknown") {
    auto m = masks;
    std::fill(m.drivable.begin(), m.drivable.end(), 0);
    CHECK(infer_lane_relation(m, make_box(40, 40, 55, 60)) == LaneRelation::Unknown);
  }

  SUBCASE("degenerate bbox throws") {
    CHECK_THROWS_AS(infer_lane_relation(masks, make_box(200, 200, 220, 220)), std::invalid_argument);
  }

  SUBCASE("deterministic and total over a grid of boxes") {
    for (int x = 0; x < size - 10; x += 7) {
      for (int y = 0; y < size - 10; y += 7) {
        const auto box = make_box(x, y, x + 9, y + 9);
        const auto first = infer_lane_relation(masks, box);
        CHECK(infer_lane_relation(masks, box) == first);
      }
    }
  }
}

TEST_CASE("frame validation") {
  GrayFrame frame;
  frame.width = 4;
  frame.height = 4;
  frame.pixels.assign(16, 0.5f);
  CHECK_THROWS_AS(frame.validate(), std::invalid_argument);  // below the 8x8 minimum

  frame = testsupport::make_texture_frame(16, 16, 2);
  frame.pixels[3] = 1.5f;
  CHECK_THROWS_AS(frame.validate(), std::invalid_argument);
}

TEST_CASE("pgm and f32 round trips") {
  testsupport::TempDir tmp("cueio");

  const auto frame = testsupport::make_texture_frame(32, 24, 77);
  save_pgm(frame, tmp.path / "frame.pgm");
  const auto loaded = load_pgm(tmp.path / "frame.pgm");
  CHECK(loaded.width == 32);
  CHECK(loaded.height == 24);
  for (std::size_t i = 0; i < frame.pixels.size(); ++i) {
    CHECK(std::abs(loaded.pixels[i] - frame.pixels[i]) <= 0.5f / 255.0f + 1e-6f);
  }

  std::vector<float> values = {0.0f, 1.5f, -2.25f, 3.14159f};
  save_f32(values, tmp.path / "v.f32");
  CHECK(load_f32(tmp.path / "v.f32", 4) == values);
  CHECK_THROWS_AS(load_f32(tmp.path / "v.f32", 5), std::runtime_error);

  std::vector<std::uint8_t> mask = {1, 0, 1, 0, 0, 1};
  save_mask_pgm(mask, 3, 2, tmp.path / "m.pgm");
  int w = 0, h = 0;
  CHECK(load_mask_pgm(tmp.path / "m.pgm", w, h) == mask);
  CHECK(w == 3);
  CHECK(h == 2);
}

TEST_CASE("cue bundle round trip and extraction") {
  testsupport::TempDir tmp("bundle");
  testsupport::write_e2e_cue_bundle(tmp.path / "clip", testsupport::e2e_clips()[0], 3);

  const auto bundle = load_cue_bundle(tmp.path / "clip");
  CHECK(bundle.clip_id == "clip_a");
  CHECK(bundle.width == 96);
  REQUIRE(bundle.frames.size() == 2);
  REQUIRE(bundle.frames[0].masks.has_value());
  REQUIRE(bundle.frames[0].depth.has_value());
  REQUIRE(bundle.frames[0].frame.has_value());
  CHECK(bundle.frames[0].detections.size() == 1);

  const auto rep = extract_cues(bundle);
  REQUIRE(rep.frames.size() == 2);
  CHECK(rep.clip_id == "clip_a");
  REQUIRE(rep.frames[1].objects.size() == 1);
  const auto& obj = rep.frames[1].objects[0];
  CHECK(obj.depth_stat == doctest::Approx(0.6).epsilon(0.01));
  CHECK(obj.motion == MotionLabel::Static);       // static scene
  CHECK(obj.lane == LaneRelation::EgoLane);       // bbox spans the corridor
  CHECK(rep.frames[1].ego_dx == doctest::Approx(0.0).epsilon(1e-3));
  CHECK(rep.frames[1].ego_lane == EgoLanePosition::Center);
}

TEST_CASE("extraction uses precomputed flow when frames are absent") {
  testsupport::TempDir tmp("precomp");
  CueBundle bundle;
  bundle.clip_id = "p";
  bundle.width = 32;
  bundle.height = 32;
  for (int t = 0; t < 2; ++t) {
    FrameBundle fb;
    fb.index = t;
    FlowField flow = constant_flow(32, 32, 6.0f, 0.0f);
    fb.flow = flow;
    SegmentationMasks m = full_drivable(32, 32);
    fb.masks = m;
    DetectionInput det{"o", "vehicle", make_box(4, 20, 16, 30)};
    fb.detections.push_back(det);
    bundle.frames.push_back(std::move(fb));
  }
  save_cue_bundle(bundle, tmp.path / "p");
  const auto rep = extract_cues(load_cue_bundle(tmp.path / "p"));
  // object flow matches ego flow, so relative motion stays Static
  CHECK(rep.frames[1].objects[0].motion == MotionLabel::Static);
  CHECK(rep.frames[1].ego_dx == doctest::Approx(6.0));
}
