#pragma once

#include <unistd.h>

#include <atomic>
#include <cmath>
#include <filesystem>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "lsim/chain_policy.hpp"
#include "lsim/data_model.hpp"
#include "lsim/fact_rule.hpp"
#include "lsim/llm_client.hpp"
#include "lsim/neural.hpp"

namespace lsim::test {

// ---------------------------------------------------------------------------
// Temporary directories.
// ---------------------------------------------------------------------------

class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::atomic<unsigned> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("lsim_" + tag + "_" + std::to_string(::getpid()) + "_" +
             std::to_string(counter.fetch_add(1)));
    std::filesystem::create_directories(path_);
  }

  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }

  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

// ---------------------------------------------------------------------------
// Test LLM clients.
// ---------------------------------------------------------------------------

class CallbackLlmClient : public LlmClient {
 public:
  using Fn = std::function<std::string(const std::string&,
                                       const GenerationConfig&)>;

  explicit CallbackLlmClient(Fn fn) : fn_(std::move(fn)) {}

  std::string complete(const std::string& prompt,
                       const GenerationConfig& config) override {
    ++calls_;
    return fn_(prompt, config);
  }

  int calls() const { return calls_; }

 private:
  Fn fn_;
  int calls_ = 0;
};

/// Returns each scripted reply once, in order; further calls throw.
class ScriptedLlmClient : public LlmClient {
 public:
  explicit ScriptedLlmClient(std::vector<std::string> replies)
      : replies_(std::move(replies)) {}

  std::string complete(const std::string&, const GenerationConfig&) override {
    if (next_ >= replies_.size()) {
      throw LlmError("scripted llm exhausted after " +
                     std::to_string(replies_.size()) + " replies");
    }
    return replies_[next_++];
  }

  std::size_t calls() const { return next_; }

 private:
  std::vector<std::string> replies_;
  std::size_t next_ = 0;
};

/// Fails the first `failures` calls, then delegates.
class FlakyLlmClient : public LlmClient {
 public:
  FlakyLlmClient(LlmClient& inner, int failures)
      : inner_(inner), failures_remaining_(failures) {}

  std::string complete(const std::string& prompt,
                       const GenerationConfig& config) override {
    ++calls_;
    if (failures_remaining_ > 0) {
      --failures_remaining_;
      throw RemoteError("injected llm failure");
    }
    return inner_.complete(prompt, config);
  }

  int calls() const { return calls_; }

 private:
  LlmClient& inner_;
  int failures_remaining_;
  int calls_ = 0;
};

/// Delegates until `limit` calls have been made, then fails permanently.
/// Used to interrupt pipeline stages part-way.
class LimitedLlmClient : public LlmClient {
 public:
  LimitedLlmClient(LlmClient& inner, int limit) : inner_(inner), limit_(limit) {}

  std::string complete(const std::string& prompt,
                       const GenerationConfig& config) override {
    if (calls_ >= limit_) {
      throw RemoteError("injected interrupt after " + std::to_string(limit_) +
                        " calls");
    }
    ++calls_;
    return inner_.complete(prompt, config);
  }

 private:
  LlmClient& inner_;
  int limit_;
  int calls_ = 0;
};

inline RetryPolicy fast_retry(int attempts = 3) {
  return RetryPolicy{attempts, std::chrono::milliseconds(0), 1.0};
}

// ---------------------------------------------------------------------------
// Graph fixtures.
// ---------------------------------------------------------------------------

inline const std::vector<std::string>& word_list() {
  static const std::vector<std::string> words{
      "alfa",    "bravo",  "charlie", "delta",  "echo",   "foxtrot", "golf",
      "hotel",   "india",  "juliett", "kilo",   "lima",   "mike",    "november",
      "oscar",   "papa",   "quebec",  "romeo",  "sierra", "tango",   "uniform",
      "victor",  "whiskey", "xray",   "yankee", "zulu"};
  return words;
}

inline std::string node_word(std::size_t i) {
  const auto& words = word_list();
  std::string word = words[i % words.size()];
  if (i >= words.size()) {
    word += std::to_string(i / words.size());
  }
  return word;
}

inline FactRuleGraph make_nodes(std::size_t n) {
  FactRuleGraph graph;
  for (std::size_t i = 0; i < n; ++i) {
    graph.add_node(FactRuleNode{
        "", i % 2 == 0 ? NodeKind::Fact : NodeKind::Rule, node_word(i)});
  }
  return graph;
}

inline FactRuleGraph line_graph(std::size_t n) {
  FactRuleGraph graph = make_nodes(n);
  for (std::size_t i = 1; i < n; ++i) {
    graph.add_edge(node_word(i - 1), node_word(i));
  }
  return graph;
}

inline FactRuleGraph complete_graph(std::size_t n) {
  FactRuleGraph graph = make_nodes(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      graph.add_edge(node_word(i), node_word(j));
    }
  }
  return graph;
}

inline FactRuleGraph star_graph(std::size_t leaves) {
  FactRuleGraph graph = make_nodes(leaves + 1);
  for (std::size_t i = 1; i <= leaves; ++i) {
    graph.add_edge(node_word(0), node_word(i));
  }
  return graph;
}

// ---------------------------------------------------------------------------
// Dataset fixtures: small shared vocabulary so token overlap carries signal
// for the mock LLM's extraction and scoring.
// ---------------------------------------------------------------------------

inline std::vector<QAPair> synthetic_pairs(std::size_t n, std::uint64_t seed) {
  static const std::vector<std::pair<std::string, std::string>> topics{
      {"arrest during a traffic stop", "miranda rights and suppression"},
      {"search of the apartment without consent", "warrant requirement"},
      {"probation violation hearing", "revocation standards"},
      {"charges for shoplifting at a store", "petty theft statute"},
      {"bail amount after arraignment", "bond reduction motion"},
      {"assault complaint from a neighbor", "self defense doctrine"},
      {"expungement of an old conviction", "record sealing petition"},
      {"custody interview by detectives", "right to counsel"},
      {"dui checkpoint arrest", "implied consent rules"},
      {"restraining order violation", "contempt penalties"}};
  Rng rng(seed);
  std::vector<QAPair> pairs;
  pairs.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& topic = topics[rng.below(topics.size())];
    const auto& extra = topics[rng.below(topics.size())];
    QAPair pair;
    pair.id = "q" + std::to_string(1000 + i);
    pair.question_text = "My friend is facing " + topic.first +
                         " and is worried about " + extra.first +
                         " in this county case " + std::to_string(rng.below(90)) +
                         ".";
    pair.answer_text = "Under the " + topic.second +
                       ", consult an attorney promptly about " + topic.first +
                       " before the hearing.";
    pair.location = "State " + std::to_string(rng.below(10));
    pairs.push_back(std::move(pair));
  }
  return pairs;
}

// ---------------------------------------------------------------------------
// Gradient checking.
// ---------------------------------------------------------------------------

inline std::vector<double*> param_coords(MlpParams& params) {
  std::vector<double*> coords;
  for (auto& layer : params.layers) {
    for (auto& w : layer.weights) {
      coords.push_back(&w);
    }
    for (auto& b : layer.bias) {
      coords.push_back(&b);
    }
  }
  return coords;
}

inline std::vector<double> grad_coords(const MlpGrads& grads) {
  std::vector<double> coords;
  for (const auto& layer : grads.layers) {
    coords.insert(coords.end(), layer.weights.begin(), layer.weights.end());
    coords.insert(coords.end(), layer.bias.begin(), layer.bias.end());
  }
  return coords;
}

/// Max relative error between analytic gradients and central finite
/// differences of `loss` over the parameter coordinates. Coordinates where
/// both values are below `dead_zone` are skipped (pure round-off territory).
/// With `sample_count` set, a deterministic coordinate subset is checked.
template <class LossFn>
double max_grad_rel_error(MlpParams& params, const MlpGrads& grads,
                          LossFn&& loss, double step = 1e-3,
                          double dead_zone = 1e-6,
                          std::size_t sample_count = 0,
                          std::uint64_t sample_seed = 12345) {
  const auto coords = param_coords(params);
  const auto analytic = grad_coords(grads);
  std::vector<std::size_t> indices;
  if (sample_count == 0 || sample_count >= coords.size()) {
    indices.resize(coords.size());
    for (std::size_t i = 0; i < coords.size(); ++i) {
      indices[i] = i;
    }
  } else {
    Rng rng(sample_seed);
    std::set<std::size_t> picked;
    while (picked.size() < sample_count) {
      picked.insert(static_cast<std::size_t>(rng.below(coords.size())));
    }
    indices.assign(picked.begin(), picked.end());
  }

  double max_rel = 0.0;
  for (const std::size_t i : indices) {
    double& coord = *coords[i];
    const double original = coord;
    coord = original + step;
    const double up = loss();
    coord = original - step;
    const double down = loss();
    coord = original;
    const double numeric = (up - down) / (2.0 * step);
    const double denom = std::max(std::abs(analytic[i]), std::abs(numeric));
    if (denom < dead_zone) {
      continue;
    }
    max_rel = std::max(max_rel, std::abs(analytic[i] - numeric) / denom);
  }
  return max_rel;
}

inline bool params_equal(const MlpParams& a, const MlpParams& b) {
  if (a.layers.size() != b.layers.size()) {
    return false;
  }
  for (std::size_t k = 0; k < a.layers.size(); ++k) {
    if (a.layers[k].weights != b.layers[k].weights ||
        a.layers[k].bias != b.layers[k].bias) {
      return false;
    }
  }
  return true;
}

// ---------------------------------------------------------------------------
// Directory comparison (determinism checks).
// ---------------------------------------------------------------------------

inline std::map<std::string, std::string> dir_file_digests(
    const std::filesystem::path& root,
    const std::set<std::string>& skip_names = {"manifest.json"}) {
  std::map<std::string, std::string> digests;
  for (const auto& entry :
       std::filesystem::recursive_directory_iterator(root)) {
    if (!entry.is_regular_file()) {
      continue;
    }
    if (skip_names.count(entry.path().filename().string()) > 0) {
      continue;
    }
    const std::string rel =
        std::filesystem::relative(entry.path(), root).string();
    digests.emplace(rel, file_digest(entry.path()));
  }
  return digests;
}

}  // namespace lsim::test
