#include "drivesafe/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "drivesafe/llm_client.hpp"
#include "drivesafe/prompting.hpp"

namespace drivesafe::metrics {

namespace {

constexpr double kRougeBeta = 1.2;
constexpr double kMeteorAlpha = 0.9;
constexpr double kMeteorBeta = 3.0;
constexpr double kMeteorGamma = 0.5;
constexpr double kCiderSigma = 6.0;
constexpr int kCiderMaxN = 4;

using NgramCounts = std::unordered_map<std::string, long>;

std::string join_ngram(const TokenSequence& tokens, std::size_t start, int n) {
  std::string key;
  for (int k = 0; k < n; ++k) {
    if (k) key.push_back('\x1f');
    key += tokens[start + static_cast<std::size_t>(k)];
  }
  return key;
}

NgramCounts count_ngrams(const TokenSequence& tokens, int n) {
  NgramCounts out;
  if (static_cast<int>(tokens.size()) < n) return out;
  for (std::size_t i = 0; i + static_cast<std::size_t>(n) <= tokens.size(); ++i) {
    ++out[join_ngram(tokens, i, n)];
  }
  return out;
}

std::size_t lcs_length(const TokenSequence& a, const TokenSequence& b) {
  const std::size_t n = a.size(), m = b.size();
  if (n == 0 || m == 0) return 0;
  std::vector<std::size_t> prev(m + 1, 0), cur(m + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    for (std::size_t j = 1; j <= m; ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[m];
}

}  // namespace

TokenSequence tokenize(std::string_view text) {
  TokenSequence out;
  std::string cur;
  for (char c : text) {
    const unsigned char uc = static_cast<unsigned char>(c);
    if (std::isalnum(uc)) {
      cur.push_back(static_cast<char>(std::tolower(uc)));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

double corpus_bleu(const std::vector<TokenSequence>& candidates,
                   const std::vector<std::vector<TokenSequence>>& references, int max_n) {
  if (candidates.size() != references.size()) {
    throw std::invalid_argument("corpus_bleu: candidate/reference count mismatch");
  }
  if (candidates.empty()) throw std::invalid_argument("corpus_bleu: empty corpus");
  if (max_n < 1) throw std::invalid_argument("corpus_bleu: max_n must be >= 1");

  std::vector<long> clipped(static_cast<std::size_t>(max_n), 0);
  std::vector<long> total(static_cast<std::size_t>(max_n), 0);
  long cand_len = 0;
  long ref_len = 0;

  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const auto& cand = candidates[i];
    const auto& refs = references[i];
    if (refs.empty()) throw std::invalid_argument("corpus_bleu: clip without references");

    cand_len += static_cast<long>(cand.size());
    // effective reference length: closest to the candidate, ties -> shorter
    long best = static_cast<long>(refs[0].size());
    for (const auto& r : refs) {
      const long len = static_cast<long>(r.size());
      const long d_new = std::labs(len - static_cast<long>(cand.size()));
      const long d_old = std::labs(best - static_cast<long>(cand.size()));
      if (d_new < d_old || (d_new == d_old && len < best)) best = len;
    }
    ref_len += best;

    for (int n = 1; n <= max_n; ++n) {
      const NgramCounts cand_counts = count_ngrams(cand, n);
      NgramCounts max_ref;
      for (const auto& r : refs) {
        for (const auto& [gram, cnt] : count_ngrams(r, n)) {
          auto& slot = max_ref[gram];
          slot = std::max(slot, cnt);
        }
      }
      for (const auto& [gram, cnt] : cand_counts) {
        auto it = max_ref.find(gram);
        clipped[static_cast<std::size_t>(n - 1)] += it == max_ref.end() ? 0 : std::min(cnt, it->second);
        total[static_cast<std::size_t>(n - 1)] += cnt;
      }
    }
  }

  double log_sum = 0.0;
  for (int n = 1; n <= max_n; ++n) {
    const long t = total[static_cast<std::size_t>(n - 1)];
    const long c = clipped[static_cast<std::size_t>(n - 1)];
    if (t == 0 || c == 0) return 0.0;
    log_sum += std::log(static_cast<double>(c) / static_cast<double>(t));
  }
  const double bp =
      cand_len < ref_len && cand_len > 0
          ? std::exp(1.0 - static_cast<double>(ref_len) / static_cast<double>(cand_len))
          : (cand_len == 0 ? 0.0 : 1.0);
  return bp * std::exp(log_sum / max_n);
}

double sentence_bleu_smoothed(const TokenSequence& candidate,
                              const std::vector<TokenSequence>& references, int max_n) {
  if (references.empty()) throw std::invalid_argument("sentence_bleu: no references");
  if (candidate.empty()) return 0.0;

  double log_sum = 0.0;
  for (int n = 1; n <= max_n; ++n) {
    const NgramCounts cand_counts = count_ngrams(candidate, n);
    NgramCounts max_ref;
    for (const auto& r : references) {
      for (const auto& [gram, cnt] : count_ngrams(r, n)) {
        auto& slot = max_ref[gram];
        slot = std::max(slot, cnt);
      }
    }
    long clipped = 0, total = 0;
    for (const auto& [gram, cnt] : cand_counts) {
      auto it = max_ref.find(gram);
      clipped += it == max_ref.end() ? 0 : std::min(cnt, it->second);
      total += cnt;
    }
    const long add = n > 1 ? 1 : 0;  // add-one smoothing for higher orders
    if (total + add == 0 || clipped + add == 0) return 0.0;
    log_sum += std::log(static_cast<double>(clipped + add) / static_cast<double>(total + add));
  }

  long best = static_cast<long>(references[0].size());
  for (const auto& r : references) {
    const long len = static_cast<long>(r.size());
    const long d_new = std::labs(len - static_cast<long>(candidate.size()));
    const long d_old = std::labs(best - static_cast<long>(candidate.size()));
    if (d_new < d_old || (d_new == d_old && len < best)) best = len;
  }
  const long c = static_cast<long>(candidate.size());
  const double bp = c < best ? std::exp(1.0 - static_cast<double>(best) / static_cast<double>(c)) : 1.0;
  return bp * std::exp(log_sum / max_n);
}

double rouge_l(const TokenSequence& candidate, const std::vector<TokenSequence>& references) {
  if (references.empty()) throw std::invalid_argument("rouge_l: no references");
  double best = 0.0;
  for (const auto& ref : references) {
    if (candidate.empty() || ref.empty()) continue;
    const double lcs = static_cast<double>(lcs_length(candidate, ref));
    if (lcs == 0.0) continue;
    const double p = lcs / static_cast<double>(candidate.size());
    const double r = lcs / static_cast<double>(ref.size());
    const double b2 = kRougeBeta * kRougeBeta;
    const double f = (1.0 + b2) * p * r / (r + b2 * p);
    best = std::max(best, f);
  }
  return best;
}

namespace {

struct MeteorAlignment {
  long matches = 0;
  long chunks = 0;
};

// Two-stage greedy alignment: exact matches first, Porter stems on the
// leftovers. Each token pairs at most once; chunks are maximal runs where
// both sides advance by one.
MeteorAlignment align_meteor(const TokenSequence& cand, const TokenSequence& ref) {
  std::vector<int> cand_to_ref(cand.size(), -1);
  std::vector<bool> ref_used(ref.size(), false);

  for (std::size_t i = 0; i < cand.size(); ++i) {
    for (std::size_t j = 0; j < ref.size(); ++j) {
      if (!ref_used[j] && cand[i] == ref[j]) {
        cand_to_ref[i] = static_cast<int>(j);
        ref_used[j] = true;
        break;
      }
    }
  }
  std::vector<std::string> ref_stems(ref.size());
  for (std::size_t j = 0; j < ref.size(); ++j) ref_stems[j] = porter_stem(ref[j]);
  for (std::size_t i = 0; i < cand.size(); ++i) {
    if (cand_to_ref[i] != -1) continue;
    const std::string stem = porter_stem(cand[i]);
    for (std::size_t j = 0; j < ref.size(); ++j) {
      if (!ref_used[j] && stem == ref_stems[j]) {
        cand_to_ref[i] = static_cast<int>(j);
        ref_used[j] = true;
        break;
      }
    }
  }

  MeteorAlignment out;
  int prev_ref = -2;
  bool in_chunk = false;
  for (std::size_t i = 0; i < cand.size(); ++i) {
    if (cand_to_ref[i] == -1) {
      in_chunk = false;
      prev_ref = -2;
      continue;
    }
    ++out.matches;
    if (!in_chunk || cand_to_ref[i] != prev_ref + 1) ++out.chunks;
    in_chunk = true;
    prev_ref = cand_to_ref[i];
  }
  return out;
}

}  // namespace

double meteor(const TokenSequence& candidate, const std::vector<TokenSequence>& references) {
  if (references.empty()) throw std::invalid_argument("meteor: no references");
  double best = 0.0;
  for (const auto& ref : references) {
    if (candidate.empty() || ref.empty()) continue;
    const MeteorAlignment a = align_meteor(candidate, ref);
    if (a.matches == 0) continue;
    const double m = static_cast<double>(a.matches);
    const double p = m / static_cast<double>(candidate.size());
    const double r = m / static_cast<double>(ref.size());
    const double f_mean = p * r / (kMeteorAlpha * p + (1.0 - kMeteorAlpha) * r);
    const double frag = static_cast<double>(a.chunks) / m;
    const double penalty = kMeteorGamma * std::pow(frag, kMeteorBeta);
    best = std::max(best, f_mean * (1.0 - penalty));
  }
  return best;
}

std::vector<double> cider(const std::vector<TokenSequence>& candidates,
                          const std::vector<std::vector<TokenSequence>>& references,
                          bool* warned) {
  if (candidates.size() != references.size()) {
    throw std::invalid_argument("cider: candidate/reference count mismatch");
  }
  if (candidates.empty()) throw std::invalid_argument("cider: empty corpus");
  if (warned) *warned = candidates.size() < 2;

  const std::size_t n_clips = candidates.size();
  const double log_clips = std::log(static_cast<double>(n_clips));

  // document frequency: number of clips whose reference set contains the n-gram
  std::unordered_map<std::string, long> doc_freq;
  for (const auto& refs : references) {
    std::unordered_set<std::string> seen;
    for (const auto& ref : refs) {
      for (int n = 1; n <= kCiderMaxN; ++n) {
        for (const auto& [gram, cnt] : count_ngrams(ref, n)) seen.insert(gram);
      }
    }
    for (const auto& gram : seen) ++doc_freq[gram];
  }

  auto tfidf = [&](const TokenSequence& tokens, int n, double& norm_out) {
    std::unordered_map<std::string, double> vec;
    norm_out = 0.0;
    for (const auto& [gram, cnt] : count_ngrams(tokens, n)) {
      auto it = doc_freq.find(gram);
      const double df = it == doc_freq.end() ? 0.0 : static_cast<double>(it->second);
      const double w = static_cast<double>(cnt) * (log_clips - std::log(std::max(1.0, df)));
      vec[gram] = w;
      norm_out += w * w;
    }
    norm_out = std::sqrt(norm_out);
    return vec;
  };

  std::vector<double> scores;
  scores.reserve(n_clips);
  for (std::size_t i = 0; i < n_clips; ++i) {
    const auto& cand = candidates[i];
    const auto& refs = references[i];
    if (refs.empty()) throw std::invalid_argument("cider: clip without references");

    double clip_score = 0.0;
    for (const auto& ref : refs) {
      const double delta = static_cast<double>(cand.size()) - static_cast<double>(ref.size());
      const double length_penalty = std::exp(-delta * delta / (2.0 * kCiderSigma * kCiderSigma));
      double sim_sum = 0.0;
      int defined = 0;
      for (int n = 1; n <= kCiderMaxN; ++n) {
        const bool cand_has = static_cast<int>(cand.size()) >= n && !cand.empty();
        const bool ref_has = static_cast<int>(ref.size()) >= n && !ref.empty();
        if (!cand_has && !ref_has) continue;  // n too large for both: undefined
        ++defined;
        if (!cand_has || !ref_has) continue;  // one side empty: similarity 0
        double cand_norm = 0.0, ref_norm = 0.0;
        const auto cand_vec = tfidf(cand, n, cand_norm);
        const auto ref_vec = tfidf(ref, n, ref_norm);
        if (cand_norm == 0.0 || ref_norm == 0.0) continue;
        double dot = 0.0;
        for (const auto& [gram, w] : cand_vec) {
          auto it = ref_vec.find(gram);
          if (it != ref_vec.end()) dot += w * it->second;
        }
        sim_sum += length_penalty * dot / (cand_norm * ref_norm);
      }
      clip_score += defined > 0 ? 10.0 * sim_sum / static_cast<double>(defined) : 0.0;
    }
    scores.push_back(clip_score / static_cast<double>(refs.size()));
  }
  return scores;
}

double iou(const BoundingBox& a, const BoundingBox& b) {
  const double inter = intersection_area(a, b);
  const double uni = a.area() + b.area() - inter;
  return uni <= 0.0 ? 0.0 : inter / uni;
}

GroundingResult grounding_metrics(const std::vector<std::optional<BoundingBox>>& preds,
                                  const std::vector<BoundingBox>& gts,
                                  const std::vector<double>& thresholds) {
  if (preds.size() != gts.size()) {
    throw std::invalid_argument("grounding_metrics: prediction/ground-truth count mismatch");
  }
  if (preds.empty()) throw std::invalid_argument("grounding_metrics: empty inputs");

  GroundingResult out;
  double sum_all = 0.0;
  double sum_matched = 0.0;
  std::vector<double> ious(preds.size(), 0.0);
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (preds[i]) {
      ious[i] = iou(*preds[i], gts[i]);
      sum_matched += ious[i];
      ++out.n_matched;
    }
    sum_all += ious[i];
  }
  out.mean_iou_all = sum_all / static_cast<double>(preds.size());
  out.mean_iou_matched = out.n_matched > 0 ? sum_matched / static_cast<double>(out.n_matched) : 0.0;
  for (double tau : thresholds) {
    std::size_t hit = 0;
    for (std::size_t i = 0; i < preds.size(); ++i) {
      if (preds[i] && ious[i] >= tau) ++hit;
    }
    out.acc_at[tau] = static_cast<double>(hit) / static_cast<double>(preds.size());
  }
  return out;
}

SuggestionResult suggestion_metrics(const std::vector<rules::SafetySuggestion>& preds,
                                    const std::vector<rules::SafetySuggestion>& gts) {
  using rules::SafetySuggestion;
  if (preds.size() != gts.size()) {
    throw std::invalid_argument("suggestion_metrics: prediction/ground-truth count mismatch");
  }
  std::vector<SafetySuggestion> p, g;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (gts[i] == SafetySuggestion::NA) continue;  // NA ground truth excluded
    p.push_back(preds[i]);
    g.push_back(gts[i]);
  }
  if (p.empty()) throw std::invalid_argument("suggestion_metrics: nothing to score after NA exclusion");

  SuggestionResult out;
  out.n_scored = p.size();
  std::size_t correct = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] == g[i]) ++correct;
  }
  out.accuracy = static_cast<double>(correct) / static_cast<double>(p.size());

  double f1_weighted = 0.0;
  for (int c = 0; c < rules::kSuggestionCount; ++c) {
    const auto cls = static_cast<SafetySuggestion>(c);
    long tp = 0, fp = 0, fn = 0, support = 0;
    for (std::size_t i = 0; i < p.size(); ++i) {
      if (g[i] == cls) ++support;
      if (p[i] == cls && g[i] == cls) ++tp;
      if (p[i] == cls && g[i] != cls) ++fp;
      if (p[i] != cls && g[i] == cls) ++fn;
    }
    const double prec = tp + fp > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
    const double rec = tp + fn > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
    const double f1 = prec + rec > 0.0 ? 2.0 * prec * rec / (prec + rec) : 0.0;
    f1_weighted += (static_cast<double>(support) / static_cast<double>(p.size())) * f1;
  }
  out.f1_weighted = f1_weighted;
  return out;
}

double clair(std::string_view candidate, std::string_view reference, llm::Client& judge) {
  const prompting::PromptMessages prompt =
      prompting::build_judge_prompt(candidate, reference, prompting::TemplateSet::builtin());
  const llm::CompletionResult reply = judge.complete(prompt);
  if (!reply.ok()) {
    throw std::runtime_error("clair: judge call failed: " + reply.error);
  }
  // score = first integer in the reply
  const std::string& text = reply.text;
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (std::isdigit(static_cast<unsigned char>(text[i]))) {
      std::size_t end = i;
      while (end < text.size() && std::isdigit(static_cast<unsigned char>(text[end]))) ++end;
      const double value = std::stod(text.substr(i, end - i));
      return std::clamp(value, 0.0, 100.0);
    }
  }
  throw MalformedJudgeReply("clair: no integer score in judge reply: '" + text + "'");
}

CaptionScores evaluate_captions(const std::vector<TokenSequence>& candidates,
                                const std::vector<std::vector<TokenSequence>>& references) {
  CaptionScores out;
  out.bleu1 = corpus_bleu(candidates, references, 1);
  out.bleu4 = corpus_bleu(candidates, references, 4);
  double meteor_sum = 0.0, rouge_sum = 0.0;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    meteor_sum += meteor(candidates[i], references[i]);
    rouge_sum += rouge_l(candidates[i], references[i]);
  }
  out.meteor = meteor_sum / static_cast<double>(candidates.size());
  out.rouge_l = rouge_sum / static_cast<double>(candidates.size());
  const std::vector<double> cider_scores = cider(candidates, references);
  out.cider = std::accumulate(cider_scores.begin(), cider_scores.end(), 0.0) /
              static_cast<double>(cider_scores.size());
  return out;
}

nlohmann::json MetricReport::to_json() const {
  nlohmann::json j;
  j["bleu1"] = bleu1;
  j["bleu4"] = bleu4;
  j["meteor"] = meteor;
  j["rouge_l"] = rouge_l;
  j["cider"] = cider;
  j["clair"] = clair ? nlohmann::json(*clair) : nlohmann::json(nullptr);
  j["mean_iou_all"] = mean_iou_all;
  j["mean_iou_matched"] = mean_iou_matched;
  nlohmann::json acc = nlohmann::json::object();
  for (const auto& [tau, v] : acc_at) {
    std::ostringstream key;
    key << std::fixed << std::setprecision(1) << tau;
    acc[key.str()] = v;
  }
  j["acc_at"] = acc;
  j["n_grounded"] = n_grounded;
  j["suggestion_accuracy"] = suggestion_accuracy;
  j["suggestion_f1_weighted"] = suggestion_f1_weighted;
  j["n_suggestion_scored"] = n_suggestion_scored;
  j["n_clips"] = n_clips;
  return j;
}

MetricReport MetricReport::from_json(const nlohmann::json& j) {
  MetricReport r;
  r.bleu1 = j.at("bleu1").get<double>();
  r.bleu4 = j.at("bleu4").get<double>();
  r.meteor = j.at("meteor").get<double>();
  r.rouge_l = j.at("rouge_l").get<double>();
  r.cider = j.at("cider").get<double>();
  if (j.contains("clair") && !j.at("clair").is_null()) r.clair = j.at("clair").get<double>();
  r.mean_iou_all = j.at("mean_iou_all").get<double>();
  r.mean_iou_matched = j.at("mean_iou_matched").get<double>();
  for (const auto& [key, v] : j.at("acc_at").items()) {
    r.acc_at[std::stod(key)] = v.get<double>();
  }
  r.n_grounded = j.at("n_grounded").get<std::size_t>();
  r.suggestion_accuracy = j.at("suggestion_accuracy").get<double>();
  r.suggestion_f1_weighted = j.at("suggestion_f1_weighted").get<double>();
  r.n_suggestion_scored = j.at("n_suggestion_scored").get<std::size_t>();
  r.n_clips = j.at("n_clips").get<std::size_t>();
  return r;
}

std::string MetricReport::to_table() const {
  std::ostringstream out;
  auto pct = [](double v) { return v * 100.0; };
  out << std::fixed << std::setprecision(2);
  out << std::setw(8) << "B1" << std::setw(8) << "B4" << std::setw(8) << "M" << std::setw(8) << "R"
      << std::setw(8) << "C" << std::setw(8) << "CLAIR" << std::setw(10) << "MeanIoU" << std::setw(10)
      << "IoU(mat)";
  for (const auto& [tau, v] : acc_at) {
    std::ostringstream h;
    h << "Acc@" << std::setprecision(1) << std::fixed << tau;
    out << std::setw(9) << h.str();
  }
  out << std::setw(10) << "Accuracy" << std::setw(8) << "F1(W)" << '\n';
  out << std::setw(8) << pct(bleu1) << std::setw(8) << pct(bleu4) << std::setw(8) << pct(meteor)
      << std::setw(8) << pct(rouge_l) << std::setw(8) << cider << std::setw(8);
  if (clair) {
    out << *clair;
  } else {
    out << "--";
  }
  out << std::setw(10) << pct(mean_iou_all) << std::setw(10) << pct(mean_iou_matched);
  for (const auto& [tau, v] : acc_at) out << std::setw(9) << pct(v);
  out << std::setw(10) << pct(suggestion_accuracy) << std::setw(8) << pct(suggestion_f1_weighted)
      << '\n';
  return out.str();
}

}  // namespace drivesafe::metrics
