#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "lsim/common.hpp"
#include "lsim/data_model.hpp"
#include "lsim/embedding.hpp"
#include "lsim/fact_rule.hpp"
#include "lsim/llm_client.hpp"
#include "lsim/neural.hpp"

namespace lsim {

/// Which half of the feature vector to blank out at inference time.
enum class Ablation { None, NoLogical, NoSemantic };

inline const char* ablation_name(Ablation mode) {
  switch (mode) {
    case Ablation::None:
      return "none";
    case Ablation::NoLogical:
      return "no_logical";
    case Ablation::NoSemantic:
      return "no_semantic";
  }
  return "none";
}

inline Ablation ablation_from_name(const std::string& name) {
  const std::string lowered = to_lower(trim(name));
  if (lowered == "none" || lowered.empty()) {
    return Ablation::None;
  }
  if (lowered == "no_logical") {
    return Ablation::NoLogical;
  }
  if (lowered == "no_semantic") {
    return Ablation::NoSemantic;
  }
  throw ValidationError("unknown ablation mode '" + name + "'");
}

/// Chain-derived (logical) and raw-text (semantic) embedding halves of one
/// question. The scorer consumes their concatenation, so ablation masks a
/// half to zero instead of shrinking it.
struct FeatureVector {
  EmbeddingVector logical;
  EmbeddingVector semantic;

  std::vector<double> combined() const {
    std::vector<double> out;
    out.reserve(logical.dim() + semantic.dim());
    out.insert(out.end(), logical.values.begin(), logical.values.end());
    out.insert(out.end(), semantic.values.begin(), semantic.values.end());
    return out;
  }
};

inline FeatureVector build_features(const std::string& text,
                                    const FactRuleChain& chain,
                                    const FactRuleGraph& graph,
                                    const EncoderConfig& encoder,
                                    Ablation ablation = Ablation::None) {
  if (trim(text).empty()) {
    throw ValidationError("build_features: empty text");
  }
  validate_chain(chain, graph);
  FeatureVector features;
  features.logical = encode_text(serialize_chain(chain, graph), encoder);
  features.semantic = encode_text(text, encoder);
  if (ablation == Ablation::NoLogical) {
    std::fill(features.logical.values.begin(), features.logical.values.end(),
              0.0);
  } else if (ablation == Ablation::NoSemantic) {
    std::fill(features.semantic.values.begin(), features.semantic.values.end(),
              0.0);
  }
  return features;
}

inline FeatureVector apply_ablation(FeatureVector features, Ablation ablation) {
  if (ablation == Ablation::NoLogical) {
    std::fill(features.logical.values.begin(), features.logical.values.end(),
              0.0);
  } else if (ablation == Ablation::NoSemantic) {
    std::fill(features.semantic.values.begin(), features.semantic.values.end(),
              0.0);
  }
  return features;
}

/// The relevance scorer: three tanh layers and an affine output over the
/// concatenated query/candidate features.
struct DssmParams {
  MlpParams mlp;
};

inline void validate_dssm_params(const DssmParams& params) {
  validate_params(params.mlp);
  if (params.mlp.layers.size() != 4) {
    throw ValidationError("DssmParams: scorer is fixed at four layers, got " +
                          std::to_string(params.mlp.layers.size()));
  }
  if (params.mlp.output_dim() != 1) {
    throw ValidationError("DssmParams: output must be a scalar score");
  }
  if (params.mlp.output_activation != OutputActivation::Identity) {
    throw ValidationError("DssmParams: output layer must be affine");
  }
}

struct DssmConfig {
  double alpha = 1.0;  // ranking margin
  double learning_rate = 1e-4;
  int epochs = 50;
  std::vector<std::size_t> hidden_widths{512, 256, 128};
  std::uint64_t seed = 11;
  int pool_size = 20;  // candidates judged per query
};

inline DssmParams make_dssm_params(std::size_t feature_dim,
                                   const DssmConfig& config) {
  if (config.hidden_widths.size() != 3) {
    throw ValidationError(
        "DssmConfig: exactly three hidden widths required, got " +
        std::to_string(config.hidden_widths.size()));
  }
  Rng rng(config.seed);
  DssmParams params{make_mlp(2 * feature_dim, config.hidden_widths, 1, rng)};
  validate_dssm_params(params);
  return params;
}

namespace detail {

inline Vec pair_input(const FeatureVector& query,
                      const FeatureVector& candidate) {
  Vec input = query.combined();
  const Vec right = candidate.combined();
  input.insert(input.end(), right.begin(), right.end());
  return input;
}

}  // namespace detail

/// Relevance score for a (query, candidate) feature pair. Not symmetric in
/// its arguments in general.
inline double score_pair(const FeatureVector& query,
                         const FeatureVector& candidate,
                         const DssmParams& params) {
  return mlp_forward(params.mlp, detail::pair_input(query, candidate)).front();
}

/// Hinge ranking loss: max(0, alpha - p_pos + p_neg). Zero exactly when the
/// positive outscores the negative by at least the margin.
inline double margin_loss(double p_pos, double p_neg, double alpha) {
  if (alpha < 0.0) {
    throw ValidationError("margin_loss: alpha must be >= 0");
  }
  return std::max(0.0, alpha - p_pos + p_neg);
}

// ---------------------------------------------------------------------------
// Relevance annotation and triplet construction.
// ---------------------------------------------------------------------------

struct RelevanceJudgment {
  std::string query_id;
  std::string candidate_id;
  int score = 0;  // 0..5
};

struct TripletExample {
  std::string query_id;
  std::string positive_id;
  std::string negative_id;
};

inline constexpr std::string_view kRelevanceTemplate =
    "Please score the similarity of Question2 to Question1, focusing "
    "specifically on the events described in each legal question. Rate the "
    "similarity of Question2 to Question1 on a scale from 0 to 5, where 0 "
    "indicates that Question2 is completely different from Question1, and 5 "
    "indicates that Question2 is exactly the same as Question1.\n"
    "\n"
    "Question1: {{question1}}\n"
    "\n"
    "Question2: {{question2}}\n"
    "\n"
    "Reply with a single integer between 0 and 5.\n";

/// Asks the LLM to judge candidate relevance on the 0-5 scale. Each attempt
/// re-asks the model; an unparseable reply after all attempts is an error the
/// caller may record and skip.
inline RelevanceJudgment annotate_relevance(
    const QAPair& query, const QAPair& candidate, LlmClient& llm,
    const RetryPolicy& retry = {},
    std::string_view template_text = kRelevanceTemplate) {
  std::string prompt = replace_all(std::string(template_text), "{{question1}}",
                                   query.question_text);
  prompt = replace_all(prompt, "{{question2}}", candidate.question_text);

  std::string last_reply;
  for (int attempt = 1; attempt <= retry.attempts; ++attempt) {
    last_reply = complete_with_retries(llm, prompt, GenerationConfig{},
                                       RetryPolicy{1, retry.initial_backoff,
                                                   retry.multiplier});
    if (const auto score = parse_relevance_score(last_reply);
        score.has_value()) {
      return RelevanceJudgment{query.id, candidate.id, *score};
    }
  }
  throw LlmError("relevance reply for query '" + query.id + "' vs '" +
                 candidate.id + "' is unparseable after " +
                 std::to_string(retry.attempts) + " attempts: " + last_reply);
}

/// Per query: positive = highest-scored candidate, negative = lowest-scored,
/// ties to the smallest candidate id. Queries whose judgments are all equal
/// carry no ranking signal and are dropped with a warning.
inline std::vector<TripletExample> build_triplets(
    const std::vector<RelevanceJudgment>& judgments,
    WarningSink warnings = nullptr) {
  std::map<std::string, std::vector<const RelevanceJudgment*>> by_query;
  for (const auto& judgment : judgments) {
    if (judgment.score < 0 || judgment.score > 5) {
      throw ValidationError("judgment score " + std::to_string(judgment.score) +
                            " outside 0..5");
    }
    by_query[judgment.query_id].push_back(&judgment);
  }
  std::vector<TripletExample> triplets;
  for (const auto& [query_id, entries] : by_query) {
    if (entries.size() < 2) {
      throw ValidationError("query '" + query_id +
                            "' has fewer than 2 judged candidates");
    }
    const RelevanceJudgment* best = entries.front();
    const RelevanceJudgment* worst = entries.front();
    for (const auto* entry : entries) {
      if (entry->score > best->score ||
          (entry->score == best->score &&
           entry->candidate_id < best->candidate_id)) {
        best = entry;
      }
      if (entry->score < worst->score ||
          (entry->score == worst->score &&
           entry->candidate_id < worst->candidate_id)) {
        worst = entry;
      }
    }
    if (best->score == worst->score) {
      warn(warnings, "query '" + query_id +
                         "' dropped: all judgments share score " +
                         std::to_string(best->score));
      continue;
    }
    triplets.push_back(
        TripletExample{query_id, best->candidate_id, worst->candidate_id});
  }
  return triplets;
}

/// Pre-filter for annotation: the pool_size database candidates whose
/// question embeddings are closest to the query's, ties to the smaller id.
inline std::vector<std::string> candidate_pool(const QAPair& query,
                                               const std::vector<QAPair>& database,
                                               const EncoderConfig& encoder,
                                               int pool_size) {
  if (pool_size < 2) {
    throw ValidationError("candidate_pool: pool_size must be >= 2");
  }
  const EmbeddingVector query_vec = encode_text(query.question_text, encoder);
  std::vector<std::pair<double, std::string>> scored;
  scored.reserve(database.size());
  for (const auto& candidate : database) {
    scored.emplace_back(
        cosine_similarity(query_vec,
                          encode_text(candidate.question_text, encoder)),
        candidate.id);
  }
  std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) {
      return a.first > b.first;
    }
    return a.second < b.second;
  });
  std::vector<std::string> pool;
  for (std::size_t i = 0; i < scored.size() &&
                          i < static_cast<std::size_t>(pool_size); ++i) {
    pool.push_back(scored[i].second);
  }
  return pool;
}

// ---------------------------------------------------------------------------
// Training.
// ---------------------------------------------------------------------------

namespace detail {

/// Gradient of the triplet hinge through both score paths, or zero when the
/// margin is already satisfied. Shared parameters mean the positive branch
/// contributes with weight -1 and the negative branch with weight +1.
inline double triplet_loss_and_gradients(const FeatureVector& query,
                                         const FeatureVector& positive,
                                         const FeatureVector& negative,
                                         const DssmParams& params, double alpha,
                                         MlpGrads* grads) {
  ForwardCache pos_cache;
  ForwardCache neg_cache;
  const double p_pos =
      mlp_forward(params.mlp, pair_input(query, positive), &pos_cache).front();
  const double p_neg =
      mlp_forward(params.mlp, pair_input(query, negative), &neg_cache).front();
  const double loss = margin_loss(p_pos, p_neg, alpha);
  if (grads != nullptr && loss > 0.0) {
    mlp_backward(params.mlp, pos_cache, Vec{-1.0}, *grads);
    mlp_backward(params.mlp, neg_cache, Vec{1.0}, *grads);
  }
  return loss;
}

}  // namespace detail

/// Value of the triplet loss at the given parameters (used by oracles).
inline double triplet_loss(const FeatureVector& query,
                           const FeatureVector& positive,
                           const FeatureVector& negative,
                           const DssmParams& params, double alpha) {
  return detail::triplet_loss_and_gradients(query, positive, negative, params,
                                            alpha, nullptr);
}

inline MlpGrads triplet_gradients(const FeatureVector& query,
                                  const FeatureVector& positive,
                                  const FeatureVector& negative,
                                  const DssmParams& params, double alpha) {
  MlpGrads grads = make_zero_grads(params.mlp);
  detail::triplet_loss_and_gradients(query, positive, negative, params, alpha,
                                     &grads);
  return grads;
}

/// Supervised margin-ranking training: per epoch, one Adam step per triplet
/// in a fixed order. Deterministic for a fixed config seed.
inline DssmParams train_dssm(const std::vector<TripletExample>& triplets,
                             const std::map<std::string, FeatureVector>& features,
                             const DssmConfig& config,
                             std::vector<EpochStat>* log = nullptr) {
  if (triplets.empty()) {
    throw ValidationError("train_dssm: empty triplet list");
  }
  const auto feature_of = [&](const std::string& id) -> const FeatureVector& {
    const auto it = features.find(id);
    if (it == features.end()) {
      throw ValidationError("train_dssm: missing features for id '" + id + "'");
    }
    return it->second;
  };
  for (const auto& triplet : triplets) {
    feature_of(triplet.query_id);
    feature_of(triplet.positive_id);
    feature_of(triplet.negative_id);
  }

  const std::size_t feature_dim =
      feature_of(triplets.front().query_id).combined().size();
  DssmParams params = make_dssm_params(feature_dim, config);
  AdamState adam = make_adam_state(params.mlp);

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    double loss_sum = 0.0;
    for (const auto& triplet : triplets) {
      MlpGrads grads = make_zero_grads(params.mlp);
      const double loss = detail::triplet_loss_and_gradients(
          feature_of(triplet.query_id), feature_of(triplet.positive_id),
          feature_of(triplet.negative_id), params, config.alpha, &grads);
      loss_sum += loss;
      adam_step(params.mlp, grads, adam, config.learning_rate);
    }
    if (log != nullptr) {
      log->push_back(EpochStat{
          epoch, loss_sum / static_cast<double>(triplets.size())});
    }
  }
  return params;
}

// ---------------------------------------------------------------------------
// Retrieval.
// ---------------------------------------------------------------------------

struct RetrievalResult {
  std::string candidate_id;
  double score = 0.0;
  int rank = 0;  // 1-based
};

/// Scores every candidate and returns the top min(k, database size) by
/// descending score; exact score ties go to the smaller candidate id.
inline std::vector<RetrievalResult> retrieve_topk(
    const FeatureVector& query,
    const std::vector<std::pair<std::string, FeatureVector>>& database,
    const DssmParams& params, int k) {
  if (k < 1) {
    throw ValidationError("retrieve_topk: k must be >= 1");
  }
  if (database.empty()) {
    throw ValidationError("retrieve_topk: empty database");
  }
  std::vector<RetrievalResult> scored;
  scored.reserve(database.size());
  for (const auto& [id, features] : database) {
    scored.push_back(RetrievalResult{id, score_pair(query, features, params), 0});
  }
  std::sort(scored.begin(), scored.end(),
            [](const RetrievalResult& a, const RetrievalResult& b) {
              if (a.score != b.score) {
                return a.score > b.score;
              }
              return a.candidate_id < b.candidate_id;
            });
  const std::size_t keep =
      std::min<std::size_t>(static_cast<std::size_t>(k), scored.size());
  scored.resize(keep);
  for (std::size_t i = 0; i < scored.size(); ++i) {
    scored[i].rank = static_cast<int>(i) + 1;
  }
  return scored;
}

/// Chains attached to their pair, as retrieval candidates carry them.
struct ChainedPair {
  QAPair pair;
  FactRuleChain chain;
};

/// Convenience overload that builds features through the encoder.
inline std::vector<RetrievalResult> retrieve_topk(
    const QAPair& query, const FactRuleChain& query_chain,
    const std::vector<ChainedPair>& database, const FactRuleGraph& graph,
    const EncoderConfig& encoder, const DssmParams& params, int k,
    Ablation ablation = Ablation::None) {
  const FeatureVector query_features =
      build_features(query.question_text, query_chain, graph, encoder, ablation);
  std::vector<std::pair<std::string, FeatureVector>> candidates;
  candidates.reserve(database.size());
  for (const auto& entry : database) {
    candidates.emplace_back(
        entry.pair.id, build_features(entry.pair.question_text, entry.chain,
                                      graph, encoder, ablation));
  }
  return retrieve_topk(query_features, candidates, params, k);
}

}  // namespace lsim
