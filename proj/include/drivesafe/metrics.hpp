#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "drivesafe/geometry.hpp"
#include "drivesafe/rule_engine.hpp"

namespace drivesafe::llm {
class Client;
}

namespace drivesafe::metrics {

using TokenSequence = std::vector<std::string>;

// Lowercase, split on non-alphanumeric runs; digits survive as tokens.
TokenSequence tokenize(std::string_view text);

// Classic Porter stemmer (the METEOR stem-match stage).
std::string porter_stem(std::string_view word);

// Corpus-level BLEU: clipped n-gram counts summed over all pairs before
// dividing, uniform weights, brevity penalty against the closest reference
// length (ties -> shorter). No smoothing: any zero n-gram precision gives 0.
double corpus_bleu(const std::vector<TokenSequence>& candidates,
                   const std::vector<std::vector<TokenSequence>>& references, int max_n);

// Per-sentence diagnostic variant, add-one smoothed for n > 1.
double sentence_bleu_smoothed(const TokenSequence& candidate,
                              const std::vector<TokenSequence>& references, int max_n);

// LCS F-measure with beta = 1.2, max over references.
double rouge_l(const TokenSequence& candidate, const std::vector<TokenSequence>& references);

// Exact + Porter-stem unigram alignment ("METEOR-lite": no synonym stage),
// alpha = 0.9, beta = 3, gamma = 0.5, max over references.
double meteor(const TokenSequence& candidate, const std::vector<TokenSequence>& references);

// TF-IDF n-gram cosine similarity, n = 1..4, Gaussian length penalty
// sigma = 6, scaled by 10. IDF comes from the reference corpus, so this is a
// corpus-level call; returns the per-clip scores (corpus score = mean).
// Fewer than 2 clips leaves the IDF degenerate; `warned` reports that.
std::vector<double> cider(const std::vector<TokenSequence>& candidates,
                          const std::vector<std::vector<TokenSequence>>& references,
                          bool* warned = nullptr);

double iou(const BoundingBox& a, const BoundingBox& b);

struct GroundingResult {
  double mean_iou_all = 0.0;      // absent prediction counts as IoU 0
  double mean_iou_matched = 0.0;  // absent predictions excluded; 0 when none present
  std::size_t n_matched = 0;
  std::map<double, double> acc_at;  // threshold -> fraction with IoU >= threshold
};

GroundingResult grounding_metrics(const std::vector<std::optional<BoundingBox>>& preds,
                                  const std::vector<BoundingBox>& gts,
                                  const std::vector<double>& thresholds);

struct SuggestionResult {
  double accuracy = 0.0;
  double f1_weighted = 0.0;
  std::size_t n_scored = 0;  // after NA-ground-truth exclusion
};

// Exact-match accuracy and support-weighted F1 over the eight actionable
// classes. Clips whose ground truth is NA are excluded before scoring;
// throws when the lists mismatch or nothing remains after exclusion.
SuggestionResult suggestion_metrics(const std::vector<rules::SafetySuggestion>& preds,
                                    const std::vector<rules::SafetySuggestion>& gts);

struct MalformedJudgeReply : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// LLM-judge caption similarity in [0, 100]; the score is the first integer in
// the judge reply. Throws MalformedJudgeReply when no integer is found;
// transport failures propagate as std::runtime_error.
double clair(std::string_view candidate, std::string_view reference, llm::Client& judge);

struct CaptionScores {
  double bleu1 = 0.0;
  double bleu4 = 0.0;
  double meteor = 0.0;   // mean over clips
  double rouge_l = 0.0;  // mean over clips
  double cider = 0.0;    // mean over clips
};

CaptionScores evaluate_captions(const std::vector<TokenSequence>& candidates,
                                const std::vector<std::vector<TokenSequence>>& references);

// Everything one evaluation run produces. Text-metric fields live in [0, 1]
// internally (CIDEr on its 0-10 scale, CLAIR in [0, 100]); the table render
// multiplies [0, 1] scores by 100 to line up with the usual benchmark tables.
struct MetricReport {
  double bleu1 = 0.0;
  double bleu4 = 0.0;
  double meteor = 0.0;
  double rouge_l = 0.0;
  double cider = 0.0;
  std::optional<double> clair;

  double mean_iou_all = 0.0;
  double mean_iou_matched = 0.0;
  std::map<double, double> acc_at;
  std::size_t n_grounded = 0;

  double suggestion_accuracy = 0.0;
  double suggestion_f1_weighted = 0.0;
  std::size_t n_suggestion_scored = 0;

  std::size_t n_clips = 0;

  nlohmann::json to_json() const;
  static MetricReport from_json(const nlohmann::json& j);
  std::string to_table() const;
};

}  // namespace drivesafe::metrics
