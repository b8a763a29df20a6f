#pragma once

#include <algorithm>
#include <map>
#include <string>
#include <vector>

#include "lsim/common.hpp"
#include "lsim/embedding.hpp"

namespace lsim {

struct TokenSequence {
  std::vector<std::string> tokens;

  std::size_t size() const { return tokens.size(); }
  bool empty() const { return tokens.empty(); }
};

/// Metric preprocessing: lowercase, split on whitespace and punctuation,
/// punctuation dropped.
inline TokenSequence tokenize(const std::string& text) {
  return TokenSequence{tokenize_words(text)};
}

struct PrfScore {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

namespace detail {

inline double f1_of(double precision, double recall) {
  const double denom = precision + recall;
  return denom == 0.0 ? 0.0 : 2.0 * precision * recall / denom;
}

inline std::map<std::string, int> ngram_counts(const TokenSequence& seq,
                                               int n) {
  std::map<std::string, int> counts;
  if (seq.size() < static_cast<std::size_t>(n)) {
    return counts;
  }
  for (std::size_t i = 0; i + n <= seq.size(); ++i) {
    std::string key = seq.tokens[i];
    for (int j = 1; j < n; ++j) {
      key.push_back('\x1f');
      key += seq.tokens[i + j];
    }
    ++counts[key];
  }
  return counts;
}

}  // namespace detail

/// N-gram overlap with clipped counts. Empty inputs score zero.
inline PrfScore rouge_n(const TokenSequence& candidate,
                        const TokenSequence& reference, int n) {
  if (n < 1) {
    throw ValidationError("rouge_n: n must be >= 1");
  }
  const auto cand_counts = detail::ngram_counts(candidate, n);
  const auto ref_counts = detail::ngram_counts(reference, n);
  int cand_total = 0;
  for (const auto& [gram, count] : cand_counts) {
    cand_total += count;
  }
  int ref_total = 0;
  for (const auto& [gram, count] : ref_counts) {
    ref_total += count;
  }
  int overlap = 0;
  for (const auto& [gram, count] : cand_counts) {
    const auto it = ref_counts.find(gram);
    if (it != ref_counts.end()) {
      overlap += std::min(count, it->second);
    }
  }
  PrfScore score;
  score.precision = cand_total == 0 ? 0.0 : static_cast<double>(overlap) / cand_total;
  score.recall = ref_total == 0 ? 0.0 : static_cast<double>(overlap) / ref_total;
  score.f1 = detail::f1_of(score.precision, score.recall);
  return score;
}

/// Longest-common-subsequence overlap: P = LCS/|candidate|, R = LCS/|reference|.
inline PrfScore rouge_l(const TokenSequence& candidate,
                        const TokenSequence& reference) {
  const std::size_t m = candidate.size();
  const std::size_t n = reference.size();
  PrfScore score;
  if (m == 0 || n == 0) {
    return score;
  }
  std::vector<std::size_t> prev(n + 1, 0);
  std::vector<std::size_t> curr(n + 1, 0);
  for (std::size_t i = 1; i <= m; ++i) {
    for (std::size_t j = 1; j <= n; ++j) {
      if (candidate.tokens[i - 1] == reference.tokens[j - 1]) {
        curr[j] = prev[j - 1] + 1;
      } else {
        curr[j] = std::max(prev[j], curr[j - 1]);
      }
    }
    std::swap(prev, curr);
  }
  const double lcs = static_cast<double>(prev[n]);
  score.precision = lcs / static_cast<double>(m);
  score.recall = lcs / static_cast<double>(n);
  score.f1 = detail::f1_of(score.precision, score.recall);
  return score;
}

/// Exact-match unigram alignment score. Candidate tokens are matched greedily
/// left to right, each to the earliest unused occurrence in the reference.
/// With m matches: P = m/|candidate|, R = m/|reference|,
/// F_mean = 10PR / (R + 9P); chunks are maximal runs of matches contiguous in
/// both sequences; penalty = 0.5 * (chunks/m)^3; score = F_mean * (1-penalty).
/// No stemming or synonym matching is applied.
inline double meteor(const TokenSequence& candidate,
                     const TokenSequence& reference) {
  if (candidate.empty() || reference.empty()) {
    return 0.0;
  }
  std::vector<bool> ref_used(reference.size(), false);
  std::vector<std::pair<std::size_t, std::size_t>> matches;  // (cand, ref)
  for (std::size_t i = 0; i < candidate.size(); ++i) {
    for (std::size_t j = 0; j < reference.size(); ++j) {
      if (!ref_used[j] && reference.tokens[j] == candidate.tokens[i]) {
        ref_used[j] = true;
        matches.emplace_back(i, j);
        break;
      }
    }
  }
  const double m = static_cast<double>(matches.size());
  if (matches.empty()) {
    return 0.0;
  }
  const double precision = m / static_cast<double>(candidate.size());
  const double recall = m / static_cast<double>(reference.size());
  const double f_mean =
      10.0 * precision * recall / (recall + 9.0 * precision);
  std::size_t chunks = 1;
  for (std::size_t k = 1; k < matches.size(); ++k) {
    const bool contiguous = matches[k].first == matches[k - 1].first + 1 &&
                            matches[k].second == matches[k - 1].second + 1;
    if (!contiguous) {
      ++chunks;
    }
  }
  const double chunk_ratio = static_cast<double>(chunks) / m;
  const double penalty = 0.5 * chunk_ratio * chunk_ratio * chunk_ratio;
  return f_mean * (1.0 - penalty);
}

/// Sentence-level cosine between the encoded texts. A stand-in for a
/// token-alignment score, so it is named as a proxy wherever it is reported.
/// Range [-1, 1]; empty texts score 0.
inline double bertscore_proxy(const std::string& candidate,
                              const std::string& reference,
                              const EncoderConfig& encoder) {
  if (trim(candidate).empty() || trim(reference).empty()) {
    return 0.0;
  }
  return cosine_similarity(encode_text(candidate, encoder),
                           encode_text(reference, encoder));
}

struct ExampleScores {
  std::string id;
  double meteor = 0.0;
  double rouge1_f = 0.0;
  double rouge2_f = 0.0;
  double rougeL_f = 0.0;
  double bertscore_proxy = 0.0;
};

/// Aggregate metrics in percent; aggregates are arithmetic means of the
/// per-example values (which are stored in percent as well).
struct MetricsReport {
  std::vector<ExampleScores> per_example;
  double meteor = 0.0;
  double rouge1_f = 0.0;
  double rouge2_f = 0.0;
  double rougeL_f = 0.0;
  double bertscore_proxy = 0.0;
};

/// Scores predictions against references with matching id sets. Empty
/// predictions score zero on every metric for their example.
inline MetricsReport evaluate_run(
    const std::vector<std::pair<std::string, std::string>>& predictions,
    const std::vector<std::pair<std::string, std::string>>& references,
    const EncoderConfig& encoder) {
  std::map<std::string, std::string> pred_by_id;
  for (const auto& [id, text] : predictions) {
    if (!pred_by_id.emplace(id, text).second) {
      throw ValidationError("evaluate_run: duplicate prediction id '" + id + "'");
    }
  }
  std::map<std::string, std::string> ref_by_id;
  for (const auto& [id, text] : references) {
    if (!ref_by_id.emplace(id, text).second) {
      throw ValidationError("evaluate_run: duplicate reference id '" + id + "'");
    }
  }
  if (pred_by_id.size() != ref_by_id.size()) {
    throw ValidationError("evaluate_run: prediction/reference id sets differ");
  }
  for (const auto& [id, text] : ref_by_id) {
    if (pred_by_id.count(id) == 0) {
      throw ValidationError("evaluate_run: no prediction for id '" + id + "'");
    }
  }

  MetricsReport report;
  for (const auto& [id, reference_text] : ref_by_id) {
    const std::string& prediction_text = pred_by_id[id];
    const TokenSequence cand = tokenize(prediction_text);
    const TokenSequence ref = tokenize(reference_text);
    ExampleScores scores;
    scores.id = id;
    scores.meteor = 100.0 * meteor(cand, ref);
    scores.rouge1_f = 100.0 * rouge_n(cand, ref, 1).f1;
    scores.rouge2_f = 100.0 * rouge_n(cand, ref, 2).f1;
    scores.rougeL_f = 100.0 * rouge_l(cand, ref).f1;
    scores.bertscore_proxy =
        100.0 * bertscore_proxy(prediction_text, reference_text, encoder);
    report.per_example.push_back(std::move(scores));
  }
  const double n = static_cast<double>(report.per_example.size());
  if (n > 0) {
    for (const auto& scores : report.per_example) {
      report.meteor += scores.meteor;
      report.rouge1_f += scores.rouge1_f;
      report.rouge2_f += scores.rouge2_f;
      report.rougeL_f += scores.rougeL_f;
      report.bertscore_proxy += scores.bertscore_proxy;
    }
    report.meteor /= n;
    report.rouge1_f /= n;
    report.rouge2_f /= n;
    report.rougeL_f /= n;
    report.bertscore_proxy /= n;
  }
  return report;
}

/// One table row per labeled report, two-decimal percentages.
inline std::string format_metrics_table(
    const std::vector<std::pair<std::string, MetricsReport>>& rows) {
  std::string out =
      "method\tMETEOR\tROUGE-1\tROUGE-2\tROUGE-L\tBERTScore-proxy\n";
  char buf[64];
  for (const auto& [label, report] : rows) {
    out += label;
    for (const double value :
         {report.meteor, report.rouge1_f, report.rouge2_f, report.rougeL_f,
          report.bertscore_proxy}) {
      std::snprintf(buf, sizeof(buf), "\t%.2f", value);
      out += buf;
    }
    out += '\n';
  }
  return out;
}

}  // namespace lsim
