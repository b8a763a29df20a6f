#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "lsim/common.hpp"
#include "lsim/embedding.hpp"
#include "lsim/fact_rule.hpp"
#include "lsim/neural.hpp"

namespace lsim {

enum class ActionMode { Neighbors, AllUnvisited };
enum class SelectMode { Sample, Greedy };

/// How candidate logits are produced. SharedCandidate scores each candidate
/// with one shared network over [state, candidate-label embedding];
/// GlobalOutput maps the state to one logit per graph node and masks to the
/// candidate set. The first works for any graph, the second fixes the node
/// vocabulary at construction.
enum class PolicyHead { SharedCandidate, GlobalOutput };

/// Credit assignment for the policy-gradient update: return-to-go weights
/// each action by the rewards from its step onward; total-return weights
/// every action by the whole episode return.
enum class CreditMode { ReturnToGo, TotalReturn };

struct PolicyConfig {
  int max_steps = 4;
  int inference_steps = 4;  // z; 0 disables prediction at inference
  double learning_rate = 1e-4;
  int epochs = 30;
  std::vector<std::size_t> hidden_widths{256, 128};
  ActionMode action_mode = ActionMode::Neighbors;
  PolicyHead head = PolicyHead::SharedCandidate;
  CreditMode credit = CreditMode::ReturnToGo;
  std::uint64_t seed = 7;
};

inline void validate_policy_config(const PolicyConfig& config) {
  if (config.max_steps < 1) {
    throw ValidationError("PolicyConfig: max_steps must be >= 1");
  }
  if (config.inference_steps < 0 || config.inference_steps > config.max_steps) {
    throw ValidationError(
        "PolicyConfig: inference_steps must lie in [0, max_steps]");
  }
  if (config.learning_rate <= 0.0) {
    throw ValidationError("PolicyConfig: learning_rate must be positive");
  }
  if (config.epochs < 0) {
    throw ValidationError("PolicyConfig: epochs must be >= 0");
  }
}

/// One decision taken during a rollout, with everything the backward pass
/// needs to recompute the action distribution.
struct EpisodeStep {
  EmbeddingVector state;
  std::vector<std::string> candidates;
  std::string action;
  double log_prob = 0.0;
  int reward = 0;  // 0 or 1
};

struct Episode {
  std::vector<EpisodeStep> steps;

  int total_reward() const {
    int total = 0;
    for (const auto& step : steps) {
      total += step.reward;
    }
    return total;
  }
};

/// Caches node-label embeddings for a graph; the embeddings are deterministic
/// per (label, encoder config) so the cache is purely a speed concern.
class NodeEmbeddingCache {
 public:
  NodeEmbeddingCache(const FactRuleGraph& graph, EncoderConfig encoder)
      : graph_(&graph), encoder_(std::move(encoder)) {}

  const EmbeddingVector& get(const std::string& node_id) const {
    auto it = cache_.find(node_id);
    if (it == cache_.end()) {
      it = cache_.emplace(node_id,
                          encode_text(graph_->node(node_id).label, encoder_))
               .first;
    }
    return it->second;
  }

  const EncoderConfig& encoder() const { return encoder_; }
  const FactRuleGraph& graph() const { return *graph_; }

 private:
  const FactRuleGraph* graph_;
  EncoderConfig encoder_;
  mutable std::map<std::string, EmbeddingVector> cache_;
};

struct PolicyModel {
  MlpParams mlp;
  PolicyHead head = PolicyHead::SharedCandidate;
  std::vector<std::string> node_order;           // GlobalOutput only
  std::map<std::string, std::size_t> node_index;  // GlobalOutput only
};

inline PolicyModel make_policy_model(const FactRuleGraph& graph,
                                     const PolicyConfig& config,
                                     std::size_t encoder_dim) {
  validate_policy_config(config);
  PolicyModel model;
  model.head = config.head;
  Rng rng(config.seed);
  if (config.head == PolicyHead::SharedCandidate) {
    model.mlp = make_mlp(2 * encoder_dim, config.hidden_widths, 1, rng);
  } else {
    if (graph.empty()) {
      throw ValidationError("make_policy_model: global head needs a graph");
    }
    for (const auto& [id, node] : graph.nodes()) {
      model.node_index.emplace(id, model.node_order.size());
      model.node_order.push_back(id);
    }
    model.mlp = make_mlp(encoder_dim, config.hidden_widths,
                         model.node_order.size(), rng);
  }
  return model;
}

/// Legal next nodes for a growing chain, sorted by node id. Neighbors mode
/// offers unvisited graph-neighbors of any chain node; all-unvisited mode
/// offers every node not yet in the chain. An empty result means the rollout
/// terminates.
inline std::vector<std::string> candidate_actions(const FactRuleChain& chain,
                                                  const FactRuleGraph& graph,
                                                  ActionMode mode) {
  std::set<std::string> visited(chain.node_ids.begin(), chain.node_ids.end());
  std::set<std::string> picks;
  if (mode == ActionMode::Neighbors) {
    for (const auto& id : chain.node_ids) {
      for (const auto& neighbor : graph.neighbors(id)) {
        if (visited.count(neighbor) == 0) {
          picks.insert(neighbor);
        }
      }
    }
  } else {
    for (const auto& [id, node] : graph.nodes()) {
      if (visited.count(id) == 0) {
        picks.insert(id);
      }
    }
  }
  return {picks.begin(), picks.end()};
}

namespace detail {

struct PolicyLogits {
  Vec logits;                              // one per candidate
  std::vector<ForwardCache> shared_caches;  // SharedCandidate: per candidate
  ForwardCache global_cache;                // GlobalOutput
};

inline PolicyLogits policy_logits_cached(
    const PolicyModel& model, const EmbeddingVector& state,
    const std::vector<std::string>& candidates,
    const NodeEmbeddingCache& nodes, bool keep_caches) {
  if (candidates.empty()) {
    throw ValidationError("policy logits: empty candidate set");
  }
  PolicyLogits out;
  if (model.head == PolicyHead::SharedCandidate) {
    out.logits.reserve(candidates.size());
    if (keep_caches) {
      out.shared_caches.resize(candidates.size());
    }
    for (std::size_t j = 0; j < candidates.size(); ++j) {
      const EmbeddingVector& emb = nodes.get(candidates[j]);
      Vec input;
      input.reserve(state.dim() + emb.dim());
      input.insert(input.end(), state.values.begin(), state.values.end());
      input.insert(input.end(), emb.values.begin(), emb.values.end());
      const Vec score = mlp_forward(
          model.mlp, input, keep_caches ? &out.shared_caches[j] : nullptr);
      out.logits.push_back(score.front());
    }
  } else {
    const Vec all = mlp_forward(model.mlp, state.values,
                                keep_caches ? &out.global_cache : nullptr);
    out.logits.reserve(candidates.size());
    for (const auto& candidate : candidates) {
      const auto it = model.node_index.find(candidate);
      if (it == model.node_index.end()) {
        throw ValidationError("policy logits: node '" + candidate +
                              "' unknown to the global head");
      }
      out.logits.push_back(all[it->second]);
    }
  }
  return out;
}

/// Adds d(loss)/d(params) into `grads` given per-candidate logit gradients.
inline void accumulate_policy_gradients(const PolicyModel& model,
                                        PolicyLogits& cached,
                                        const std::vector<std::string>& candidates,
                                        const Vec& dlogits, MlpGrads& grads) {
  if (model.head == PolicyHead::SharedCandidate) {
    for (std::size_t j = 0; j < candidates.size(); ++j) {
      if (dlogits[j] == 0.0) {
        continue;
      }
      mlp_backward(model.mlp, cached.shared_caches[j], Vec{dlogits[j]}, grads);
    }
  } else {
    Vec output_grad(model.mlp.output_dim(), 0.0);
    for (std::size_t j = 0; j < candidates.size(); ++j) {
      output_grad[model.node_index.at(candidates[j])] += dlogits[j];
    }
    mlp_backward(model.mlp, cached.global_cache, output_grad, grads);
  }
}

}  // namespace detail

inline Vec policy_logits(const PolicyModel& model, const EmbeddingVector& state,
                         const std::vector<std::string>& candidates,
                         const NodeEmbeddingCache& nodes) {
  return detail::policy_logits_cached(model, state, candidates, nodes, false)
      .logits;
}

struct PolicyChoice {
  std::size_t index = 0;
  std::string node_id;
  double log_prob = 0.0;
};

/// One action selection. Sampling draws from the softmax over candidate
/// logits; greedy takes the argmax with the smallest node id on ties.
inline PolicyChoice policy_step(const PolicyModel& model,
                                const EmbeddingVector& state,
                                const std::vector<std::string>& candidates,
                                const NodeEmbeddingCache& nodes,
                                SelectMode mode, Rng* rng = nullptr) {
  const Vec logits = policy_logits(model, state, candidates, nodes);
  const Vec log_probs = log_softmax(logits);

  std::size_t chosen = 0;
  if (mode == SelectMode::Greedy) {
    for (std::size_t j = 1; j < candidates.size(); ++j) {
      if (logits[j] > logits[chosen] ||
          (logits[j] == logits[chosen] && candidates[j] < candidates[chosen])) {
        chosen = j;
      }
    }
  } else {
    if (rng == nullptr) {
      throw ValidationError("policy_step: sampling requires an rng");
    }
    const double u = rng->next_unit();
    double cumulative = 0.0;
    chosen = candidates.size() - 1;
    for (std::size_t j = 0; j < candidates.size(); ++j) {
      cumulative += std::exp(log_probs[j]);
      if (u < cumulative) {
        chosen = j;
        break;
      }
    }
  }
  return PolicyChoice{chosen, candidates[chosen], log_probs[chosen]};
}

/// Binary membership reward: 1 iff the node occurs in the answer chain.
inline int chain_reward(const std::string& node_id,
                        const FactRuleChain& answer_chain) {
  return answer_chain.contains(node_id) ? 1 : 0;
}

struct RolloutResult {
  FactRuleChain predicted_chain;
  Episode episode;
};

/// Grows the question chain step by step: encode the serialized chain, pick a
/// candidate, append, re-encode. Stops at the step cap, when no candidate
/// remains, or when the predicted chain reaches its node cap. When an answer
/// chain is supplied each step carries its membership reward.
inline RolloutResult rollout(const FactRuleChain& question_chain,
                             const FactRuleGraph& graph,
                             const PolicyModel& model,
                             const NodeEmbeddingCache& nodes,
                             const PolicyConfig& config, SelectMode mode,
                             Rng* rng = nullptr,
                             const FactRuleChain* answer_chain = nullptr,
                             int steps_cap = -1) {
  validate_chain(question_chain, graph);
  const int cap = steps_cap >= 0 ? steps_cap : config.max_steps;

  RolloutResult result;
  result.predicted_chain.owner = ChainOwner::Predicted;
  result.predicted_chain.node_ids = question_chain.node_ids;

  EmbeddingVector state = encode_text(
      serialize_chain(result.predicted_chain, graph), nodes.encoder());

  for (int t = 0; t < cap; ++t) {
    if (result.predicted_chain.node_ids.size() >= kMaxPredictedChainNodes) {
      break;
    }
    const auto candidates =
        candidate_actions(result.predicted_chain, graph, config.action_mode);
    if (candidates.empty()) {
      break;
    }
    const PolicyChoice choice =
        policy_step(model, state, candidates, nodes, mode, rng);

    EpisodeStep step;
    step.state = state;
    step.candidates = candidates;
    step.action = choice.node_id;
    step.log_prob = choice.log_prob;
    if (answer_chain != nullptr) {
      step.reward = chain_reward(choice.node_id, *answer_chain);
    }
    result.episode.steps.push_back(std::move(step));

    result.predicted_chain.node_ids.push_back(choice.node_id);
    state = encode_text(serialize_chain(result.predicted_chain, graph),
                        nodes.encoder());
  }
  return result;
}

namespace detail {

inline Vec episode_credit(const Episode& episode, CreditMode credit) {
  const std::size_t n = episode.steps.size();
  Vec weights(n, 0.0);
  if (credit == CreditMode::TotalReturn) {
    const double total = episode.total_reward();
    std::fill(weights.begin(), weights.end(), total);
  } else {
    double suffix = 0.0;
    for (std::size_t t = n; t-- > 0;) {
      suffix += episode.steps[t].reward;
      weights[t] = suffix;
    }
  }
  return weights;
}

}  // namespace detail

/// Surrogate objective whose gradient is the policy-gradient estimate:
/// L = -sum_t G_t * ln pi(action_t | state_t). Used by the gradient check.
inline double reinforce_surrogate_loss(const PolicyModel& model,
                                       const Episode& episode,
                                       const NodeEmbeddingCache& nodes,
                                       CreditMode credit = CreditMode::ReturnToGo) {
  const Vec weights = detail::episode_credit(episode, credit);
  double loss = 0.0;
  for (std::size_t t = 0; t < episode.steps.size(); ++t) {
    if (weights[t] == 0.0) {
      continue;
    }
    const auto& step = episode.steps[t];
    const Vec logits = policy_logits(model, step.state, step.candidates, nodes);
    const Vec log_probs = log_softmax(logits);
    const auto it =
        std::find(step.candidates.begin(), step.candidates.end(), step.action);
    if (it == step.candidates.end()) {
      throw ValidationError("episode action missing from its candidate set");
    }
    loss -= weights[t] *
            log_probs[static_cast<std::size_t>(it - step.candidates.begin())];
  }
  return loss;
}

/// Analytic gradient of reinforce_surrogate_loss at the current parameters.
inline MlpGrads reinforce_gradients(const PolicyModel& model,
                                    const Episode& episode,
                                    const NodeEmbeddingCache& nodes,
                                    CreditMode credit = CreditMode::ReturnToGo) {
  MlpGrads grads = make_zero_grads(model.mlp);
  const Vec weights = detail::episode_credit(episode, credit);
  for (std::size_t t = 0; t < episode.steps.size(); ++t) {
    if (weights[t] == 0.0) {
      continue;
    }
    const auto& step = episode.steps[t];
    auto cached = detail::policy_logits_cached(model, step.state,
                                               step.candidates, nodes, true);
    const Vec probs = softmax(cached.logits);
    const auto it =
        std::find(step.candidates.begin(), step.candidates.end(), step.action);
    if (it == step.candidates.end()) {
      throw ValidationError("episode action missing from its candidate set");
    }
    const std::size_t chosen =
        static_cast<std::size_t>(it - step.candidates.begin());
    // d(-G ln p_chosen)/d logit_j = -G * (1{j = chosen} - p_j)
    Vec dlogits(step.candidates.size());
    for (std::size_t j = 0; j < step.candidates.size(); ++j) {
      const double indicator = j == chosen ? 1.0 : 0.0;
      dlogits[j] = -weights[t] * (indicator - probs[j]);
    }
    detail::accumulate_policy_gradients(model, cached, step.candidates, dlogits,
                                        grads);
  }
  return grads;
}

/// One policy-gradient update from one episode. Returns the episode return.
inline double reinforce_update(PolicyModel& model, AdamState& adam,
                               const Episode& episode,
                               const NodeEmbeddingCache& nodes,
                               double learning_rate,
                               CreditMode credit = CreditMode::ReturnToGo) {
  if (episode.steps.empty()) {
    throw ValidationError("reinforce_update: empty episode");
  }
  const MlpGrads grads = reinforce_gradients(model, episode, nodes, credit);
  adam_step(model.mlp, grads, adam, learning_rate);
  return episode.total_reward();
}

struct PolicyTrainExample {
  FactRuleChain question_chain;
  FactRuleChain answer_chain;
};

struct EpochStat {
  int epoch = 0;
  double mean_value = 0.0;
};

/// REINFORCE training: per epoch, one sampled rollout and one update per
/// example. Deterministic for a fixed config seed.
inline PolicyModel train_policy(const std::vector<PolicyTrainExample>& examples,
                                const FactRuleGraph& graph,
                                const EncoderConfig& encoder,
                                const PolicyConfig& config,
                                std::vector<EpochStat>* log = nullptr) {
  validate_policy_config(config);
  if (examples.empty()) {
    throw ValidationError("train_policy: empty training list");
  }
  const std::size_t encoder_dim = encoder.dim;
  PolicyModel model = make_policy_model(graph, config, encoder_dim);
  AdamState adam = make_adam_state(model.mlp);
  NodeEmbeddingCache nodes(graph, encoder);
  Rng rng(config.seed ^ 0x9e3779b97f4a7c15ULL);

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    double return_sum = 0.0;
    std::size_t episodes = 0;
    for (const auto& example : examples) {
      auto rolled = rollout(example.question_chain, graph, model, nodes, config,
                            SelectMode::Sample, &rng, &example.answer_chain);
      if (rolled.episode.steps.empty()) {
        continue;  // nothing to update on (no candidates at the start)
      }
      return_sum += reinforce_update(model, adam, rolled.episode, nodes,
                                     config.learning_rate, config.credit);
      ++episodes;
    }
    if (log != nullptr) {
      log->push_back(EpochStat{
          epoch, episodes == 0 ? 0.0 : return_sum / static_cast<double>(episodes)});
    }
  }
  return model;
}

/// Greedy inference: extends the question chain by up to
/// config.inference_steps nodes and returns the full predicted chain.
inline FactRuleChain predict_chain(const FactRuleChain& question_chain,
                                   const FactRuleGraph& graph,
                                   const PolicyModel& model,
                                   const NodeEmbeddingCache& nodes,
                                   const PolicyConfig& config) {
  auto result = rollout(question_chain, graph, model, nodes, config,
                        SelectMode::Greedy, nullptr, nullptr,
                        config.inference_steps);
  return result.predicted_chain;
}

}  // namespace lsim
