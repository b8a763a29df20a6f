#pragma once

#include <chrono>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "lsim/common.hpp"
#include "lsim/http.hpp"

namespace lsim {

struct GenerationConfig {
  double temperature = 0.8;
  double top_p = 0.9;
  int max_tokens = 4096;
  std::string model_id = "mock";
  // Varied across repeated runs; remote providers may ignore it.
  std::uint64_t seed = 0;
};

inline void validate_generation_config(const GenerationConfig& config) {
  if (config.top_p < 0.0 || config.top_p > 1.0) {
    throw ValidationError("GenerationConfig: top_p must be in [0, 1]");
  }
  if (config.max_tokens < 1) {
    throw ValidationError("GenerationConfig: max_tokens must be >= 1");
  }
}

/// Boundary to the text-generation model. Implementations must be safe for
/// concurrent complete() calls.
class LlmClient {
 public:
  virtual ~LlmClient() = default;
  virtual std::string complete(const std::string& prompt,
                               const GenerationConfig& config) = 0;
};

struct RetryPolicy {
  int attempts = 3;
  std::chrono::milliseconds initial_backoff{1000};
  double multiplier = 2.0;
};

/// Calls the client up to policy.attempts times with exponential backoff.
/// Raises LlmError carrying the last failure once attempts are exhausted.
inline std::string complete_with_retries(LlmClient& llm,
                                         const std::string& prompt,
                                         const GenerationConfig& config,
                                         const RetryPolicy& policy = {},
                                         WarningSink warnings = nullptr) {
  validate_generation_config(config);
  std::string last_error = "no attempts made";
  auto backoff = policy.initial_backoff;
  for (int attempt = 1; attempt <= policy.attempts; ++attempt) {
    try {
      return llm.complete(prompt, config);
    } catch (const std::exception& e) {
      last_error = e.what();
      warn(warnings, "llm attempt " + std::to_string(attempt) + "/" +
                         std::to_string(policy.attempts) +
                         " failed: " + last_error);
      if (attempt < policy.attempts && backoff.count() > 0) {
        std::this_thread::sleep_for(backoff);
        backoff = std::chrono::milliseconds(static_cast<long long>(
            static_cast<double>(backoff.count()) * policy.multiplier));
      }
    }
  }
  throw LlmError("llm call failed after " + std::to_string(policy.attempts) +
                 " attempts; last error: " + last_error);
}

/// First standalone integer in [0, 5] found in the reply, if any.
/// Digit runs are read whole, so "2023" is skipped rather than read as 2.
inline std::optional<int> parse_relevance_score(const std::string& reply) {
  std::size_t i = 0;
  while (i < reply.size()) {
    if (std::isdigit(static_cast<unsigned char>(reply[i]))) {
      std::size_t j = i;
      while (j < reply.size() &&
             std::isdigit(static_cast<unsigned char>(reply[j]))) {
        ++j;
      }
      if (j - i <= 1) {
        const int value = reply[i] - '0';
        if (value >= 0 && value <= 5) {
          return value;
        }
      }
      i = j;
    } else {
      ++i;
    }
  }
  return std::nullopt;
}

namespace detail {

/// Text of the section starting after `marker` and running to the first of
/// the `stop` markers (or end of prompt).
inline std::string prompt_section(const std::string& prompt,
                                  const std::string& marker,
                                  const std::vector<std::string>& stops) {
  const std::size_t begin = prompt.find(marker);
  if (begin == std::string::npos) {
    return "";
  }
  const std::size_t content = begin + marker.size();
  std::size_t end = prompt.size();
  for (const auto& stop : stops) {
    const std::size_t pos = prompt.find(stop, content);
    if (pos != std::string::npos && pos < end) {
      end = pos;
    }
  }
  return trim(prompt.substr(content, end - content));
}

/// Distinct informative tokens of a text, longest-first and capped.
inline std::vector<std::string> key_tokens(const std::string& text,
                                           std::size_t cap) {
  std::vector<std::string> tokens = tokenize_words(text);
  std::set<std::string> seen;
  std::vector<std::string> distinct;
  for (const auto& token : tokens) {
    if (token.size() >= 4 && seen.insert(token).second) {
      distinct.push_back(token);
    }
  }
  std::stable_sort(distinct.begin(), distinct.end(),
                   [](const std::string& a, const std::string& b) {
                     return a.size() > b.size();
                   });
  if (distinct.size() > cap) {
    distinct.resize(cap);
  }
  return distinct;
}

inline double jaccard(const std::vector<std::string>& a,
                      const std::vector<std::string>& b) {
  const std::set<std::string> sa(a.begin(), a.end());
  const std::set<std::string> sb(b.begin(), b.end());
  if (sa.empty() && sb.empty()) {
    return 0.0;
  }
  std::size_t inter = 0;
  for (const auto& t : sa) {
    inter += sb.count(t);
  }
  const std::size_t uni = sa.size() + sb.size() - inter;
  return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

}  // namespace detail

/// Offline stand-in for a hosted model. Replies are a pure function of
/// (prompt, config): the client recognizes the stock prompt templates by
/// their instruction lines and answers each in the format the caller parses.
/// Unrecognized prompts get a short hash-tagged echo.
class MockLlmClient : public LlmClient {
 public:
  explicit MockLlmClient(std::uint64_t seed = 0) : seed_(seed) {}

  std::string complete(const std::string& prompt,
                       const GenerationConfig& config) override {
    if (prompt.find("Extract the key facts and legal rules") !=
        std::string::npos) {
      return graph_reply(prompt);
    }
    if (prompt.find("select 1 to 4 nodes") != std::string::npos) {
      return selection_reply(prompt);
    }
    if (prompt.find("score the similarity") != std::string::npos) {
      return score_reply(prompt);
    }
    if (prompt.find("provide legal advice") != std::string::npos) {
      return advice_reply(prompt, config);
    }
    return "mock-reply " + hex64(reply_hash(prompt, config));
  }

 private:
  std::uint64_t reply_hash(const std::string& prompt,
                           const GenerationConfig& config) const {
    std::uint64_t h = fnv1a64(prompt);
    h ^= fnv1a64(config.model_id) * 0x9e3779b97f4a7c15ULL;
    h ^= static_cast<std::uint64_t>(config.max_tokens) << 32;
    h ^= fnv1a64(std::to_string(config.temperature));
    h ^= fnv1a64(std::to_string(config.top_p)) << 1;
    h ^= config.seed * 0xbf58476d1ce4e5b9ULL;
    h ^= seed_;
    return h;
  }

  // Nodes from the question/answer key tokens, chained by edges so chain
  // selection always finds a connected path.
  std::string graph_reply(const std::string& prompt) const {
    const std::string question =
        detail::prompt_section(prompt, "Question:", {"Answer:", "Reply with"});
    const std::string answer =
        detail::prompt_section(prompt, "Answer:", {"Reply with"});
    auto q_tokens = detail::key_tokens(question, 4);
    auto a_tokens = detail::key_tokens(answer, 4);
    Json nodes = Json::array();
    Json edges = Json::array();
    std::vector<std::string> labels;
    auto add_tokens = [&](const std::vector<std::string>& tokens) {
      for (const auto& token : tokens) {
        if (std::find(labels.begin(), labels.end(), token) != labels.end()) {
          continue;
        }
        const char* kind = (fnv1a64(token) & 1) == 0 ? "fact" : "rule";
        nodes.push_back(Json{{"label", token}, {"kind", kind}});
        if (!labels.empty()) {
          edges.push_back(Json::array({labels.back(), token}));
        }
        labels.push_back(token);
      }
    };
    add_tokens(q_tokens);
    add_tokens(a_tokens);
    return Json{{"nodes", nodes}, {"edges", edges}}.dump();
  }

  // Picks the graph nodes whose labels overlap the text most.
  std::string selection_reply(const std::string& prompt) const {
    const std::string node_block = detail::prompt_section(
        prompt, "Graph nodes:", {"Graph edges:", "Text:", "Reply with"});
    const std::string text =
        detail::prompt_section(prompt, "Text:", {"Reply with"});
    const auto text_tokens = tokenize_words(text);
    const std::set<std::string> text_set(text_tokens.begin(),
                                         text_tokens.end());

    std::vector<std::pair<int, std::string>> scored;
    std::istringstream lines(node_block);
    std::string line;
    while (std::getline(lines, line)) {
      const std::size_t bracket = line.find(']');
      if (line.find("- [") == std::string::npos ||
          bracket == std::string::npos) {
        continue;
      }
      const std::string label = trim(line.substr(bracket + 1));
      if (label.empty()) {
        continue;
      }
      int overlap = 0;
      for (const auto& token : tokenize_words(label)) {
        overlap += static_cast<int>(text_set.count(token));
      }
      scored.emplace_back(overlap, label);
    }
    std::stable_sort(scored.begin(), scored.end(),
                     [](const auto& a, const auto& b) {
                       return a.first > b.first;
                     });
    Json labels = Json::array();
    for (std::size_t i = 0; i < scored.size() && i < 3; ++i) {
      labels.push_back(scored[i].second);
    }
    return labels.dump();
  }

  // Token-overlap proxy for a 0-5 similarity judgment.
  std::string score_reply(const std::string& prompt) const {
    const std::string q1 =
        detail::prompt_section(prompt, "Question1:", {"Question2:"});
    const std::string q2 =
        detail::prompt_section(prompt, "Question2:", {"Reply with"});
    const double j =
        detail::jaccard(tokenize_words(q1), tokenize_words(q2));
    const int score = static_cast<int>(std::lround(5.0 * j));
    return std::to_string(std::clamp(score, 0, 5));
  }

  // Deterministic advice that leans on the first retrieved exemplar answer.
  std::string advice_reply(const std::string& prompt,
                           const GenerationConfig& config) const {
    const std::string examples = detail::prompt_section(
        prompt, "Similar questions and lawyer responses:", {"User's question:"});
    const std::string first_answer =
        detail::prompt_section(examples, "Answer:", {"Example"});
    std::string body = first_answer.empty()
                           ? "Consult a licensed attorney about the specifics "
                             "of this matter."
                           : first_answer;
    return "Advice (ref " + hex64(reply_hash(prompt, config)) + "): " + body;
  }

  std::uint64_t seed_;
};

/// Client for a remote completion endpoint speaking
/// {prompt, temperature, top_p, max_tokens, model_id} -> {text}.
class RemoteLlmClient : public LlmClient {
 public:
  RemoteLlmClient(std::string endpoint = "", std::string api_key = "")
      : endpoint_(endpoint.empty() ? env_or("LLM_ENDPOINT", "") : std::move(endpoint)),
        api_key_(api_key.empty() ? env_or("LLM_API_KEY", "") : std::move(api_key)) {
    if (endpoint_.empty()) {
      throw RemoteError(
          "remote llm requires an endpoint (config or LLM_ENDPOINT)");
    }
  }

  std::string complete(const std::string& prompt,
                       const GenerationConfig& config) override {
    const Json payload{{"prompt", prompt},
                       {"temperature", config.temperature},
                       {"top_p", config.top_p},
                       {"max_tokens", config.max_tokens},
                       {"model_id", config.model_id}};
    const Json response = post_json(endpoint_, payload, api_key_);
    if (!response.contains("text") || !response["text"].is_string()) {
      throw RemoteError("llm response missing 'text' field");
    }
    return response["text"].get<std::string>();
  }

 private:
  std::string endpoint_;
  std::string api_key_;
};

}  // namespace lsim
