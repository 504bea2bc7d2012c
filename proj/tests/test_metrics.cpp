#include <cmath>
#include <fstream>
#include <random>

#include "doctest.h"

#include "drivesafe/llm_client.hpp"
#include "drivesafe/metrics.hpp"
#include "support/fixtures.hpp"
#include "support/oracles.hpp"

using namespace drivesafe;
using metrics::TokenSequence;
namespace fs = std::filesystem;

namespace {

TokenSequence tok(const std::string& s) { return metrics::tokenize(s); }

// small in-test corpus with varying overlap
struct Corpus {
  std::vector<TokenSequence> cands;
  std::vector<std::vector<TokenSequence>> refs;
};

Corpus small_corpus() {
  Corpus c;
  auto add = [&](const std::string& cand, std::vector<std::string> refs) {
    c.cands.push_back(tok(cand));
    std::vector<TokenSequence> r;
    for (const auto& s : refs) r.push_back(tok(s));
    c.refs.push_back(std::move(r));
  };
  add("a silver sedan is stopped in the ego lane", {"a silver sedan is stopped in the ego lane"});
  add("the cyclist crosses from the left side", {"a cyclist is crossing from the left"});
  add("heavy traffic slows all lanes ahead", {"traffic congestion slows the road ahead",
                                              "heavy traffic builds up ahead"});
  add("a pedestrian waits at the crosswalk", {"a pedestrian stands near the crosswalk"});
  add("nothing unusual on an empty road", {"the truck merges onto the highway"});
  return c;
}

}  // namespace

TEST_CASE("tokenize") {
  CHECK(tok("A red car, stopped.") == TokenSequence{"a", "red", "car", "stopped"});
  CHECK(tok("") == TokenSequence{});
  CHECK(tok("bbox 612") == TokenSequence{"bbox", "612"});
  CHECK(tok("lane-change!") == TokenSequence{"lane", "change"});
}

TEST_CASE("porter stemmer golden pairs") {
  CHECK(metrics::porter_stem("cars") == "car");
  CHECK(metrics::porter_stem("caresses") == "caress");
  CHECK(metrics::porter_stem("ponies") == "poni");
  CHECK(metrics::porter_stem("crossing") == "cross");
  CHECK(metrics::porter_stem("stopped") == "stop");
  CHECK(metrics::porter_stem("relational") == "relat");
  CHECK(metrics::porter_stem("adjustable") == "adjust");
  CHECK(metrics::porter_stem("happy") == "happi");
  CHECK(metrics::porter_stem("sky") == "sky");
  CHECK(metrics::porter_stem("612") == "612");
  CHECK(metrics::porter_stem("be") == "be");
}

TEST_CASE("bleu hand anchors") {
  // [the, cat] vs [the, the, cat]: clipped unigrams 2/2, BP = exp(1 - 3/2)
  const double b1 = metrics::corpus_bleu({tok("the cat")}, {{tok("the the cat")}}, 1);
  CHECK(b1 == doctest::Approx(0.6065306597126334).epsilon(1e-9));

  CHECK(metrics::corpus_bleu({tok("a b c d e")}, {{tok("a b c d e")}}, 1) == doctest::Approx(1.0));
  CHECK(metrics::corpus_bleu({tok("a b c d e")}, {{tok("a b c d e")}}, 4) == doctest::Approx(1.0));

  // zero 4-gram overlap, no smoothing
  CHECK(metrics::corpus_bleu({tok("a b c d")}, {{tok("a x b y c z d")}}, 4) == 0.0);

  // empty candidate
  CHECK(metrics::corpus_bleu({TokenSequence{}}, {{tok("a b")}}, 1) == 0.0);
}

TEST_CASE("sentence bleu diagnostic smoothing") {
  // smoothed variant is positive where the corpus score would be zero
  CHECK(metrics::sentence_bleu_smoothed(tok("a b c d"), {tok("a x b y c z d")}, 4) > 0.0);
  CHECK(metrics::sentence_bleu_smoothed(tok("a b c d"), {tok("a b c d")}, 4) == doctest::Approx(1.0));
}

TEST_CASE("rouge_l anchors") {
  CHECK(metrics::rouge_l(tok("a b c d"), {tok("a b c d")}) == doctest::Approx(1.0));
  CHECK(metrics::rouge_l(tok("a b c d"), {tok("a c b d")}) == doctest::Approx(0.75).epsilon(1e-9));
  CHECK(metrics::rouge_l(tok("a b"), {tok("x y")}) == 0.0);
  CHECK(metrics::rouge_l(TokenSequence{}, {tok("x")}) == 0.0);
}

TEST_CASE("meteor anchors") {
  // identical length-2: matches 2, 1 chunk, penalty 0.5 * (1/2)^3
  CHECK(metrics::meteor(tok("red car"), {tok("red car")}) == doctest::Approx(0.9375).epsilon(1e-9));
  // identical length-4
  const double n4 = 1.0 - 0.5 * std::pow(0.25, 3.0);
  CHECK(metrics::meteor(tok("a b c d"), {tok("a b c d")}) == doctest::Approx(n4).epsilon(1e-9));
  CHECK(metrics::meteor(tok("a b"), {tok("x y")}) == 0.0);
  // stem match: cars ~ car; single match in single-token pair
  CHECK(metrics::meteor(tok("cars"), {tok("car")}) == doctest::Approx(0.5).epsilon(1e-9));
}

TEST_CASE("cider identity and empties") {
  std::vector<TokenSequence> cands = {tok("a silver sedan is stopped ahead"),
                                      tok("completely different words here now")};
  std::vector<std::vector<TokenSequence>> refs = {{tok("a silver sedan is stopped ahead")},
                                                  {tok("the cyclist crosses the street quickly")}};
  bool warned = true;
  const auto scores = metrics::cider(cands, refs, &warned);
  CHECK_FALSE(warned);
  REQUIRE(scores.size() == 2);
  CHECK(scores[0] == doctest::Approx(10.0).epsilon(1e-9));

  // all-empty candidates score zero
  const auto zero = metrics::cider({TokenSequence{}, TokenSequence{}}, refs);
  CHECK(zero[0] == 0.0);
  CHECK(zero[1] == 0.0);

  // single-clip corpus warns about degenerate IDF
  metrics::cider({cands[0]}, {refs[0]}, &warned);
  CHECK(warned);
}

TEST_CASE("caption metrics match the brute-force oracles on a small corpus") {
  const Corpus c = small_corpus();

  CHECK(metrics::corpus_bleu(c.cands, c.refs, 1) ==
        doctest::Approx(oracle::corpus_bleu(c.cands, c.refs, 1)).epsilon(1e-12));
  CHECK(metrics::corpus_bleu(c.cands, c.refs, 4) ==
        doctest::Approx(oracle::corpus_bleu(c.cands, c.refs, 4)).epsilon(1e-12));

  for (std::size_t i = 0; i < c.cands.size(); ++i) {
    CHECK(metrics::rouge_l(c.cands[i], c.refs[i]) ==
          doctest::Approx(oracle::rouge_l_pair(c.cands[i], c.refs[i])).epsilon(1e-12));
    CHECK(metrics::meteor(c.cands[i], c.refs[i]) ==
          doctest::Approx(oracle::meteor_pair(c.cands[i], c.refs[i])).epsilon(1e-12));
  }

  const auto impl_cider = metrics::cider(c.cands, c.refs);
  const auto oracle_cider = oracle::cider_scores(c.cands, c.refs);
  REQUIRE(impl_cider.size() == oracle_cider.size());
  for (std::size_t i = 0; i < impl_cider.size(); ++i) {
    CHECK(impl_cider[i] == doctest::Approx(oracle_cider[i]).epsilon(1e-12));
  }
}

TEST_CASE("iou") {
  const auto a = make_box(0, 0, 10, 10);
  CHECK(metrics::iou(a, a) == doctest::Approx(1.0));
  CHECK(metrics::iou(a, make_box(20, 20, 30, 30)) == 0.0);
  CHECK(metrics::iou(a, make_box(5, 0, 15, 10)) == doctest::Approx(1.0 / 3.0).epsilon(1e-9));

  std::mt19937 rng(11);
  std::uniform_real_distribution<double> coord(0.0, 100.0);
  for (int i = 0; i < 200; ++i) {
    const auto bx = make_box(coord(rng), coord(rng), 101 + coord(rng), 101 + coord(rng));
    const auto by = make_box(coord(rng), coord(rng), 101 + coord(rng), 101 + coord(rng));
    CHECK(metrics::iou(bx, by) == doctest::Approx(metrics::iou(by, bx)).epsilon(1e-12));
    // common integer translation
    const BoundingBox tx{bx.x_min + 7, bx.y_min + 3, bx.x_max + 7, bx.y_max + 3};
    const BoundingBox ty{by.x_min + 7, by.y_min + 3, by.x_max + 7, by.y_max + 3};
    CHECK(metrics::iou(tx, ty) == doctest::Approx(metrics::iou(bx, by)).epsilon(1e-9));
    CHECK(metrics::iou(bx, by) >= 0.0);
    CHECK(metrics::iou(bx, by) <= 1.0);
  }
}

TEST_CASE("grounding metrics") {
  const std::vector<double> taus{0.1, 0.2, 0.3, 0.4, 0.5};

  SUBCASE("all exact") {
    std::vector<std::optional<BoundingBox>> preds;
    std::vector<BoundingBox> gts;
    for (int i = 0; i < 4; ++i) {
      const auto b = make_box(i * 10, 0, i * 10 + 5, 5);
      preds.push_back(b);
      gts.push_back(b);
    }
    const auto g = metrics::grounding_metrics(preds, gts, taus);
    CHECK(g.mean_iou_all == doctest::Approx(1.0));
    CHECK(g.acc_at.at(0.5) == doctest::Approx(1.0));
  }

  SUBCASE("inflation fixture: one exact match, nine absent") {
    std::vector<std::optional<BoundingBox>> preds(10);
    std::vector<BoundingBox> gts;
    for (int i = 0; i < 10; ++i) gts.push_back(make_box(0, 0, 10, 10));
    preds[0] = gts[0];
    const auto g = metrics::grounding_metrics(preds, gts, taus);
    CHECK(g.mean_iou_all == doctest::Approx(0.1).epsilon(1e-12));
    CHECK(g.mean_iou_matched == doctest::Approx(1.0));
    CHECK(g.acc_at.at(0.5) == doctest::Approx(0.1).epsilon(1e-12));
    CHECK(g.n_matched == 1);
  }

  SUBCASE("random set equals the oracle and Acc@tau is non-increasing") {
    std::mt19937 rng(3);
    std::uniform_real_distribution<double> coord(0.0, 50.0);
    std::vector<std::optional<BoundingBox>> preds;
    std::vector<BoundingBox> gts;
    for (int i = 0; i < 200; ++i) {
      gts.push_back(make_box(coord(rng), coord(rng), 51 + coord(rng), 51 + coord(rng)));
      if (rng() % 5 == 0) {
        preds.push_back(std::nullopt);
      } else {
        preds.push_back(make_box(coord(rng), coord(rng), 51 + coord(rng), 51 + coord(rng)));
      }
    }
    const auto g = metrics::grounding_metrics(preds, gts, taus);
    const auto o = oracle::grounding(preds, gts, taus);
    CHECK(g.mean_iou_all == o.mean_all);
    CHECK(g.mean_iou_matched == o.mean_matched);
    double prev = 1.0;
    for (double tau : taus) {
      CHECK(g.acc_at.at(tau) == o.acc.at(tau));
      CHECK(g.acc_at.at(tau) <= prev);
      prev = g.acc_at.at(tau);
    }
    CHECK(g.mean_iou_matched >= g.mean_iou_all);
  }

  SUBCASE("length mismatch throws") {
    CHECK_THROWS_AS(metrics::grounding_metrics({std::nullopt}, {}, taus), std::invalid_argument);
  }
}

TEST_CASE("suggestion metrics") {
  using rules::SafetySuggestion;
  const auto S = SafetySuggestion::SlowDown;
  const auto M = SafetySuggestion::MustStop;
  const auto Y = SafetySuggestion::Yield;
  const auto NA = SafetySuggestion::NA;

  SUBCASE("identity over all classes") {
    std::vector<SafetySuggestion> all;
    for (int c = 0; c < 8; ++c) all.push_back(static_cast<SafetySuggestion>(c));
    std::vector<SafetySuggestion> gts = all;
    gts.resize(7);  // drop NA ground truth (excluded anyway)
    std::vector<SafetySuggestion> preds(gts);
    const auto r = metrics::suggestion_metrics(preds, gts);
    CHECK(r.accuracy == doctest::Approx(1.0));
    CHECK(r.f1_weighted == doctest::Approx(1.0));
  }

  SUBCASE("two-class toy confusion matrix") {
    // per class: TP=1, FP=1, FN=1 -> P=R=F1=0.5; accuracy 2/4
    const std::vector<SafetySuggestion> gts{M, M, S, S};
    const std::vector<SafetySuggestion> preds{M, S, M, S};
    const auto r = metrics::suggestion_metrics(preds, gts);
    CHECK(r.accuracy == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(r.f1_weighted == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(r.f1_weighted == doctest::Approx(oracle::weighted_f1(preds, gts)).epsilon(1e-12));
  }

  SUBCASE("NA ground truth excluded before scoring") {
    const std::vector<SafetySuggestion> gts{M, NA, NA, S};
    const std::vector<SafetySuggestion> preds{M, Y, M, S};
    const auto r = metrics::suggestion_metrics(preds, gts);
    CHECK(r.n_scored == 2);
    CHECK(r.accuracy == doctest::Approx(1.0));
  }

  SUBCASE("accuracy can exceed weighted F1 under imbalance") {
    std::vector<SafetySuggestion> gts, preds;
    for (int i = 0; i < 6; ++i) {
      gts.push_back(S);
      preds.push_back(S);
    }
    gts.insert(gts.end(), {M, Y, SafetySuggestion::CarefullyManeuver, SafetySuggestion::StartMoving});
    preds.insert(preds.end(), {S, S, S, S});
    const auto r = metrics::suggestion_metrics(preds, gts);
    CHECK(r.accuracy == doctest::Approx(0.6).epsilon(1e-12));
    CHECK(r.f1_weighted == doctest::Approx(0.45).epsilon(1e-12));
    CHECK(r.accuracy > r.f1_weighted);
  }

  SUBCASE("errors") {
    CHECK_THROWS_AS(metrics::suggestion_metrics({M}, {M, S}), std::invalid_argument);
    CHECK_THROWS_AS(metrics::suggestion_metrics({M}, {NA}), std::invalid_argument);
  }
}

TEST_CASE("clair parses the first integer of the judge reply") {
  testsupport::TempDir tmp("clair");
  auto write_fixture = [&](const std::string& reply) {
    const auto path = tmp.path / "judge.json";
    std::ofstream out(path);
    out << nlohmann::json{{"default", reply}}.dump();
    out.close();
    return path;
  };

  {
    llm::MockClient judge(write_fixture("100"));
    CHECK(metrics::clair("a car", "a car", judge) == doctest::Approx(100.0));
  }
  {
    llm::MockClient judge(write_fixture("score: 73 because the captions broadly agree"));
    CHECK(metrics::clair("a car", "a red car", judge) == doctest::Approx(73.0));
  }
  {
    llm::MockClient judge(write_fixture("they are quite similar overall"));
    CHECK_THROWS_AS(metrics::clair("a", "b", judge), metrics::MalformedJudgeReply);
  }
}

TEST_CASE("metric report JSON round trip and table render") {
  metrics::MetricReport r;
  r.bleu1 = 0.6447;
  r.bleu4 = 0.6038;
  r.meteor = 0.6478;
  r.rouge_l = 0.8085;
  r.cider = 3.27;
  r.clair = 58.93;
  r.mean_iou_all = 0.598;
  r.mean_iou_matched = 0.61;
  r.acc_at = {{0.1, 0.91}, {0.5, 0.748}};
  r.n_grounded = 100;
  r.suggestion_accuracy = 0.5285;
  r.suggestion_f1_weighted = 0.3715;
  r.n_suggestion_scored = 100;
  r.n_clips = 100;

  const auto j = r.to_json();
  const auto back = metrics::MetricReport::from_json(j);
  CHECK(back.bleu4 == doctest::Approx(r.bleu4));
  CHECK(back.clair.has_value());
  CHECK(*back.clair == doctest::Approx(*r.clair));
  CHECK(back.acc_at.at(0.5) == doctest::Approx(0.748));

  const std::string table = r.to_table();
  CHECK(table.find("60.38") != std::string::npos);  // B4 rendered x100
  CHECK(table.find("3.27") != std::string::npos);   // CIDEr on its own scale
  CHECK(table.find("Acc@0.5") != std::string::npos);
}
