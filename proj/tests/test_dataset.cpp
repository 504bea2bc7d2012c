#include <fstream>

#include "doctest.h"

#include "drivesafe/dataset.hpp"
#include "drivesafe/risk_parser.hpp"
#include "support/fixtures.hpp"

using namespace drivesafe;
using dataset::AnnotationRecord;
using dataset::Split;
namespace fs = std::filesystem;

namespace {

const rules::RuleMap& shipped_map() {
  static const rules::RuleMap map =
      rules::load_rule_map(fs::path(DRIVESAFE_REPO_DIR) / "data" / "rules" / "drama_rules.tsv");
  return map;
}

fs::path write_lines(const fs::path& path, const std::vector<std::string>& lines) {
  std::ofstream out(path, std::ios::binary);
  for (const auto& line : lines) out << line << "\n";
  return path;
}

fs::path write_fixture_client(const fs::path& dir, const std::string& default_reply) {
  const auto path = dir / "fixtures.json";
  std::ofstream out(path);
  out << nlohmann::json{{"default", default_reply}}.dump();
  return path;
}

}  // namespace

TEST_CASE("load_annotations parses a valid three-line file") {
  testsupport::TempDir tmp("ann");
  const auto path = write_lines(
      tmp.path / "a.jsonl",
      {R"({"clip_id": "c1", "split": "test", "caption": "a car stops", "bbox": [1, 2, 30, 40], "suggestion": "must_stop", "keywords": ["Stopped vehicle"]})",
       R"({"clip_id": "c2", "split": "train", "caption": "cyclist ahead", "description": "a bike"})",
       R"({"clip_id": "c3", "split": "test", "caption": "clear", "suggestion": "na", "cue_bundle": "c3"})"});
  const auto records = dataset::load_annotations(path, shipped_map());
  REQUIRE(records.size() == 3);
  CHECK(records[0].split == Split::Test);
  CHECK(records[0].bbox == make_box(1, 2, 30, 40));
  CHECK(records[0].suggestion == rules::SafetySuggestion::MustStop);
  CHECK(records[1].split == Split::Train);
  CHECK(records[1].description == "a bike");
  CHECK(records[2].cue_bundle == "c3");
}

TEST_CASE("load_annotations error paths carry line numbers") {
  testsupport::TempDir tmp("annerr");

  SUBCASE("test record without suggestion") {
    const auto path = write_lines(tmp.path / "x.jsonl",
                                  {R"({"clip_id": "ok", "split": "test", "caption": "a", "suggestion": "yield"})",
                                   R"({"clip_id": "bad", "split": "test", "caption": "b"})"});
    CHECK(testsupport::throws_containing([&] { dataset::load_annotations(path, shipped_map()); },
                                         ":2:"));
  }

  SUBCASE("malformed JSON line") {
    const auto path = write_lines(tmp.path / "x.jsonl", {R"({"clip_id": "ok)"});
    CHECK(testsupport::throws_containing([&] { dataset::load_annotations(path, shipped_map()); },
                                         "malformed JSON"));
  }

  SUBCASE("duplicate clip id") {
    const auto path = write_lines(tmp.path / "x.jsonl",
                                  {R"({"clip_id": "c", "split": "train", "caption": "a"})",
                                   R"({"clip_id": "c", "split": "train", "caption": "b"})"});
    CHECK(testsupport::throws_containing([&] { dataset::load_annotations(path, shipped_map()); },
                                         "duplicate clip_id"));
  }

  SUBCASE("unknown split") {
    const auto path =
        write_lines(tmp.path / "x.jsonl", {R"({"clip_id": "c", "split": "dev", "caption": "a"})"});
    CHECK_THROWS_AS(dataset::load_annotations(path, shipped_map()), std::runtime_error);
  }
}

TEST_CASE("keywords normalize on load; unmatched keywords survive verbatim") {
  testsupport::TempDir tmp("annkw");
  const auto path = write_lines(
      tmp.path / "a.jsonl",
      {R"({"clip_id": "c1", "split": "train", "caption": "x", "keywords": ["stopped vehicles", "Crossing"]})"});
  const auto records = dataset::load_annotations(path, shipped_map());
  CHECK(records[0].keywords == std::vector<std::string>{"Stopped vehicle", "Crossing"});
}

TEST_CASE("save -> load -> save is byte stable") {
  testsupport::TempDir tmp("stable");
  const auto path = write_lines(
      tmp.path / "a.jsonl",
      {R"({"clip_id": "c1", "split": "test", "caption": "a car stops", "bbox": [1, 2, 30, 40], "suggestion": "must_stop"})",
       R"({"clip_id": "c2", "split": "train", "caption": "cyclist ahead"})"});
  const auto records = dataset::load_annotations(path, shipped_map());
  dataset::save_annotations(records, tmp.path / "b.jsonl");
  const auto reloaded = dataset::load_annotations(tmp.path / "b.jsonl", shipped_map());
  dataset::save_annotations(reloaded, tmp.path / "c.jsonl");
  CHECK(testsupport::read_bytes(tmp.path / "b.jsonl") == testsupport::read_bytes(tmp.path / "c.jsonl"));
  REQUIRE(reloaded.size() == records.size());
  CHECK(reloaded[0].bbox == records[0].bbox);
}

TEST_CASE("pseudo_label fills keywords and derives suggestions on train records") {
  testsupport::TempDir tmp("pl");
  std::vector<AnnotationRecord> records;
  AnnotationRecord train;
  train.clip_id = "t1";
  train.split = Split::Train;
  train.caption = "a car waits at a red light behind stopped traffic";
  records.push_back(train);
  AnnotationRecord test;
  test.clip_id = "t2";
  test.split = Split::Test;
  test.caption = "something";
  test.suggestion = rules::SafetySuggestion::Yield;
  records.push_back(test);

  llm::MockClient client(write_fixture_client(tmp.path, "Stopped vehicle, Traffic light red"));
  const auto summary = dataset::pseudo_label(records, client, shipped_map(), false, 2);

  CHECK(summary.labeled == 1);
  CHECK(summary.skipped == 1);  // the test record
  CHECK(records[0].keywords ==
        std::vector<std::string>{"Stopped vehicle", "Traffic light red"});
  CHECK(records[0].suggestion == rules::SafetySuggestion::MustStop);
  CHECK(records[1].keywords.empty());  // test record untouched
}

TEST_CASE("pseudo_label flags records whose reply is out of vocabulary") {
  testsupport::TempDir tmp("plempty");
  std::vector<AnnotationRecord> records;
  AnnotationRecord r;
  r.clip_id = "t1";
  r.split = Split::Train;
  r.caption = "the road is clear";
  records.push_back(r);

  llm::MockClient client(write_fixture_client(tmp.path, "flying saucer, warp drive"));
  const auto summary = dataset::pseudo_label(records, client, shipped_map(), false, 1);
  CHECK(summary.labeled == 0);
  CHECK(summary.empty_clips == std::vector<std::string>{"t1"});
  CHECK(records[0].keywords.empty());
}

TEST_CASE("pseudo_label honors existing keywords unless forced") {
  testsupport::TempDir tmp("plforce");
  std::vector<AnnotationRecord> records;
  AnnotationRecord r;
  r.clip_id = "t1";
  r.split = Split::Train;
  r.caption = "heavy traffic ahead";
  r.keywords = {"Cyclist"};
  records.push_back(r);

  llm::MockClient client(write_fixture_client(tmp.path, "Heavy traffic"));
  auto summary = dataset::pseudo_label(records, client, shipped_map(), false, 1);
  CHECK(summary.skipped == 1);
  CHECK(records[0].keywords == std::vector<std::string>{"Cyclist"});

  summary = dataset::pseudo_label(records, client, shipped_map(), true, 1);
  CHECK(summary.labeled == 1);
  CHECK(records[0].keywords == std::vector<std::string>{"Heavy traffic"});
}

TEST_CASE("export rejects non-canonical keywords") {
  testsupport::TempDir tmp("exp");
  AnnotationRecord r;
  r.clip_id = "c";
  r.split = Split::Train;
  r.caption = "a cyclist is crossing from the left";
  r.keywords = {"Cyclist", "Crossing"};  // "Crossing" is out of vocabulary
  const auto summary =
      dataset::export_finetune_triplets({r}, tmp.path / "t.jsonl", shipped_map());
  CHECK(summary.written == 0);
  REQUIRE(summary.skipped.size() == 1);
  CHECK(summary.skipped[0].second.find("Crossing") != std::string::npos);
}

TEST_CASE("export writes parseable triplets with the example bbox") {
  testsupport::TempDir tmp("exp2");
  AnnotationRecord r;
  r.clip_id = "c";
  r.split = Split::Train;
  r.caption = "a cyclist is crossing from the left";
  r.keywords = {"Cyclist"};
  r.bbox = make_box(612, 350, 720, 480);
  const auto summary =
      dataset::export_finetune_triplets({r}, tmp.path / "t.jsonl", shipped_map());
  CHECK(summary.written == 1);

  std::ifstream in(tmp.path / "t.jsonl");
  std::string line;
  REQUIRE(std::getline(in, line));
  const auto j = nlohmann::json::parse(line);
  CHECK(j.at("caption") == r.caption);
  CHECK(j.at("instruction").get<std::string>().find("r=Yes or No") != std::string::npos);
  const std::string response = j.at("response").get<std::string>();
  CHECK(response.find("=[612, 350, 720, 480]") != std::string::npos);

  const auto parsed = risk::parse_risk_output(response);
  CHECK_FALSE(parsed.fatal);
  CHECK(parsed.warnings.empty());
  REQUIRE(parsed.assessments.size() == 1);
  CHECK(parsed.assessments[0].keywords == std::vector<std::string>{"Cyclist"});
  CHECK(parsed.assessments[0].bbox == r.bbox);
}

TEST_CASE("export of an empty record list creates an empty file") {
  testsupport::TempDir tmp("exp3");
  const auto summary = dataset::export_finetune_triplets({}, tmp.path / "t.jsonl", shipped_map());
  CHECK(summary.written == 0);
  CHECK(fs::exists(tmp.path / "t.jsonl"));
  CHECK(fs::file_size(tmp.path / "t.jsonl") == 0);
}

TEST_CASE("every exported triplet response re-parses with zero warnings") {
  testsupport::TempDir tmp("exp4");
  std::vector<AnnotationRecord> records;
  const auto vocabulary = shipped_map().keywords();
  for (std::size_t i = 0; i < vocabulary.size(); ++i) {
    AnnotationRecord r;
    r.clip_id = "c" + std::to_string(i);
    r.split = Split::Train;
    r.caption = "scene mentioning " + vocabulary[i];
    r.keywords = {vocabulary[i]};
    if (i % 2 == 0) r.bbox = make_box(10 + i, 20, 60 + i, 90);
    records.push_back(r);
  }
  const auto summary =
      dataset::export_finetune_triplets(records, tmp.path / "t.jsonl", shipped_map());
  CHECK(summary.written == static_cast<int>(records.size()));
  CHECK(summary.skipped.empty());

  std::ifstream in(tmp.path / "t.jsonl");
  std::string line;
  int count = 0;
  while (std::getline(in, line)) {
    const auto j = nlohmann::json::parse(line);
    const auto parsed = risk::parse_risk_output(j.at("response").get<std::string>());
    CHECK_FALSE(parsed.fatal);
    CHECK(parsed.warnings.empty());
    ++count;
  }
  CHECK(count == summary.written);
}
