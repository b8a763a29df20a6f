#pragma once

#include <filesystem>
#include <map>
#include <mutex>
#include <string>
#include <vector>

#include "lsim/common.hpp"
#include "lsim/data_model.hpp"
#include "lsim/dssm.hpp"
#include "lsim/fact_rule.hpp"
#include "lsim/llm_client.hpp"

namespace lsim {

/// Retrieved exemplars in rank order, capped at the context size K.
struct PromptContext {
  std::vector<std::pair<std::string, std::string>> exemplars;  // question, answer
};

/// Takes the top min(k, results) retrieved pairs in rank order. An empty
/// result list produces an empty context with a warning so generation can
/// still proceed.
inline PromptContext assemble_context(const std::vector<RetrievalResult>& results,
                                      const std::vector<QAPair>& database,
                                      int k, WarningSink warnings = nullptr) {
  if (k < 1) {
    throw ValidationError("assemble_context: k must be >= 1");
  }
  std::map<std::string, const QAPair*> by_id;
  for (const auto& pair : database) {
    by_id.emplace(pair.id, &pair);
  }
  PromptContext context;
  if (results.empty()) {
    warn(warnings, "no retrieval results; generating without exemplars");
    return context;
  }
  for (const auto& result : results) {
    if (context.exemplars.size() >= static_cast<std::size_t>(k)) {
      break;
    }
    const auto it = by_id.find(result.candidate_id);
    if (it == by_id.end()) {
      throw ValidationError("assemble_context: candidate '" +
                            result.candidate_id + "' missing from database");
    }
    context.exemplars.emplace_back(it->second->question_text,
                                   it->second->answer_text);
  }
  return context;
}

inline constexpr std::string_view kAnswerTemplate =
    "Your task is to provide legal advice on the user's question. I will "
    "provide you with the logical structure of the user's question, along "
    "with similar questions previously asked by other users and the "
    "responses given by real lawyers. Please use this information to "
    "generate a response to the user's question.\n"
    "\n"
    "Logical structure:\n"
    "{{logical_structure}}\n"
    "\n"
    "Similar questions and lawyer responses:\n"
    "{{examples}}\n"
    "\n"
    "User's question:\n"
    "{{question}}\n";

namespace detail {

inline std::string render_exemplars(const PromptContext& context) {
  if (context.exemplars.empty()) {
    return "(none)\n";
  }
  std::string out;
  for (std::size_t i = 0; i < context.exemplars.size(); ++i) {
    out += "Example " + std::to_string(i + 1) + ":\n";
    out += "Question: " + context.exemplars[i].first + "\n";
    out += "Answer: " + context.exemplars[i].second + "\n";
    if (i + 1 < context.exemplars.size()) {
      out += "\n";
    }
  }
  return out;
}

}  // namespace detail

/// Deterministic prompt assembly. The template must contain the
/// {{question}}, {{logical_structure}} and {{examples}} placeholders.
inline std::string build_prompt(const QAPair& question,
                                const FactRuleChain& chain,
                                const FactRuleGraph& graph,
                                const PromptContext& context,
                                std::string_view template_text = kAnswerTemplate) {
  const std::string text(template_text);
  for (const char* placeholder :
       {"{{question}}", "{{logical_structure}}", "{{examples}}"}) {
    if (text.find(placeholder) == std::string::npos) {
      throw ValidationError(std::string("prompt template missing placeholder ") +
                            placeholder);
    }
  }
  std::string prompt =
      replace_all(text, "{{logical_structure}}", serialize_chain(chain, graph));
  prompt = replace_all(prompt, "{{examples}}", detail::render_exemplars(context));
  return replace_all(prompt, "{{question}}", question.question_text);
}

/// Append-only line-delimited record log; appends are serialized.
class RunLog {
 public:
  explicit RunLog(std::filesystem::path path) : path_(std::move(path)) {
    ensure_parent_dir(path_);
    // Truncate so each run owns its log.
    std::ofstream out(path_, std::ios::binary | std::ios::trunc);
    if (!out) {
      throw IoError("cannot open run log: " + path_.string());
    }
  }

  void append(const Json& record) {
    const std::lock_guard<std::mutex> lock(mutex_);
    append_jsonl(path_, record);
  }

  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
  std::mutex mutex_;
};

/// Builds the prompt, calls the model with retries and returns the trimmed
/// completion. When a log is given, the {prompt, config, response} triple is
/// recorded.
inline std::string generate_answer(const QAPair& question,
                                   const FactRuleChain& chain,
                                   const FactRuleGraph& graph,
                                   const PromptContext& context, LlmClient& llm,
                                   const GenerationConfig& config,
                                   const RetryPolicy& retry = {},
                                   RunLog* log = nullptr,
                                   std::string_view template_text = kAnswerTemplate) {
  const std::string prompt =
      build_prompt(question, chain, graph, context, template_text);
  std::vector<std::string> attempt_warnings;
  const std::string response =
      trim(complete_with_retries(llm, prompt, config, retry, &attempt_warnings));
  if (log != nullptr) {
    log->append(Json{{"id", question.id},
                     {"prompt", prompt},
                     {"config",
                      Json{{"temperature", config.temperature},
                           {"top_p", config.top_p},
                           {"max_tokens", config.max_tokens},
                           {"model_id", config.model_id},
                           {"seed", config.seed}}},
                     {"response", response},
                     {"retries", attempt_warnings.size()}});
  }
  return response;
}

}  // namespace lsim
