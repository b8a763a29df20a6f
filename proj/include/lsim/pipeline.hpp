#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include "lsim/chain_policy.hpp"
#include "lsim/common.hpp"
#include "lsim/data_model.hpp"
#include "lsim/dssm.hpp"
#include "lsim/embedding.hpp"
#include "lsim/fact_rule.hpp"
#include "lsim/icl.hpp"
#include "lsim/llm_client.hpp"
#include "lsim/metrics.hpp"
#include "lsim/neural.hpp"

namespace lsim {

enum class LlmProvider { Mock, Remote };
enum class PromptChainSource { Predicted, Extracted };

struct LlmSettings {
  LlmProvider provider = LlmProvider::Mock;
  std::string endpoint;  // remote only; falls back to LLM_ENDPOINT
  std::string api_key;   // remote only; falls back to LLM_API_KEY
  int retries = 3;
  int backoff_ms = 1000;
};

struct RunSeeds {
  std::uint64_t split = 1;
  std::uint64_t policy = 7;
  std::uint64_t dssm = 11;
  std::uint64_t generation = 3;
};

struct RunPaths {
  std::filesystem::path dataset;
  std::filesystem::path run_dir;
  std::filesystem::path graph_template;      // optional overrides
  std::filesystem::path chain_template;
  std::filesystem::path relevance_template;
  std::filesystem::path answer_template;
};

/// Everything one pipeline run needs; loaded from a single JSON config file
/// whose defaults are the reference settings (lr 1e-4, 30/50 epochs,
/// temperature 0.8, top-p 0.9, max tokens 4096, K = 3).
struct RunConfig {
  RunPaths paths;
  RunSeeds seeds;
  PolicyConfig policy;
  DssmConfig dssm;
  GenerationConfig generation;
  EncoderConfig encoder;
  LlmSettings llm;
  int k = 3;
  Ablation ablation = Ablation::None;
  int repeats = 1;
  PromptChainSource prompt_chain = PromptChainSource::Predicted;
};

// ---------------------------------------------------------------------------
// Config (de)serialization.
// ---------------------------------------------------------------------------

namespace detail {

inline std::vector<std::size_t> widths_from_json(const Json& value,
                                                 std::vector<std::size_t> fallback) {
  if (!value.is_array()) {
    return fallback;
  }
  std::vector<std::size_t> widths;
  for (const auto& entry : value) {
    widths.push_back(entry.get<std::size_t>());
  }
  return widths;
}

}  // namespace detail

inline RunConfig run_config_from_json(const Json& j) {
  RunConfig config;
  const Json paths = j.value("paths", Json::object());
  config.paths.dataset = paths.value("dataset", "");
  config.paths.run_dir = paths.value("run_dir", "");
  config.paths.graph_template = paths.value("graph_template", "");
  config.paths.chain_template = paths.value("chain_template", "");
  config.paths.relevance_template = paths.value("relevance_template", "");
  config.paths.answer_template = paths.value("answer_template", "");

  const Json seeds = j.value("seeds", Json::object());
  config.seeds.split = seeds.value("split", config.seeds.split);
  config.seeds.policy = seeds.value("policy", config.seeds.policy);
  config.seeds.dssm = seeds.value("dssm", config.seeds.dssm);
  config.seeds.generation = seeds.value("generation", config.seeds.generation);

  const Json policy = j.value("policy", Json::object());
  config.policy.max_steps = policy.value("max_steps", config.policy.max_steps);
  config.policy.inference_steps =
      policy.value("inference_steps", config.policy.inference_steps);
  config.policy.learning_rate =
      policy.value("learning_rate", config.policy.learning_rate);
  config.policy.epochs = policy.value("epochs", config.policy.epochs);
  config.policy.hidden_widths = detail::widths_from_json(
      policy.value("hidden_widths", Json()), config.policy.hidden_widths);
  const std::string action_mode = policy.value("action_mode", "neighbors");
  if (action_mode == "neighbors") {
    config.policy.action_mode = ActionMode::Neighbors;
  } else if (action_mode == "all_unvisited") {
    config.policy.action_mode = ActionMode::AllUnvisited;
  } else {
    throw ValidationError("config: unknown action_mode '" + action_mode + "'");
  }
  const std::string head = policy.value("head", "shared_candidate");
  if (head == "shared_candidate") {
    config.policy.head = PolicyHead::SharedCandidate;
  } else if (head == "global_output") {
    config.policy.head = PolicyHead::GlobalOutput;
  } else {
    throw ValidationError("config: unknown policy head '" + head + "'");
  }
  const std::string credit = policy.value("credit", "return_to_go");
  if (credit == "return_to_go") {
    config.policy.credit = CreditMode::ReturnToGo;
  } else if (credit == "total_return") {
    config.policy.credit = CreditMode::TotalReturn;
  } else {
    throw ValidationError("config: unknown credit mode '" + credit + "'");
  }
  config.policy.seed = config.seeds.policy;

  const Json dssm = j.value("dssm", Json::object());
  config.dssm.alpha = dssm.value("alpha", config.dssm.alpha);
  config.dssm.learning_rate =
      dssm.value("learning_rate", config.dssm.learning_rate);
  config.dssm.epochs = dssm.value("epochs", config.dssm.epochs);
  config.dssm.hidden_widths = detail::widths_from_json(
      dssm.value("hidden_widths", Json()), config.dssm.hidden_widths);
  config.dssm.pool_size = dssm.value("pool_size", config.dssm.pool_size);
  config.dssm.seed = config.seeds.dssm;

  const Json generation = j.value("generation", Json::object());
  config.generation.temperature =
      generation.value("temperature", config.generation.temperature);
  config.generation.top_p = generation.value("top_p", config.generation.top_p);
  config.generation.max_tokens =
      generation.value("max_tokens", config.generation.max_tokens);
  config.generation.model_id =
      generation.value("model_id", config.generation.model_id);
  config.generation.seed = config.seeds.generation;

  const Json encoder = j.value("encoder", Json::object());
  const std::string provider = encoder.value("provider", "deterministic");
  if (provider == "deterministic") {
    config.encoder.provider = EncoderProvider::Deterministic;
  } else if (provider == "remote") {
    config.encoder.provider = EncoderProvider::Remote;
  } else {
    throw ValidationError("config: unknown encoder provider '" + provider + "'");
  }
  config.encoder.dim = encoder.value("dim", config.encoder.dim);
  config.encoder.normalize = encoder.value("normalize", config.encoder.normalize);
  config.encoder.endpoint = encoder.value("endpoint", "");

  const Json llm = j.value("llm", Json::object());
  const std::string llm_provider = llm.value("provider", "mock");
  if (llm_provider == "mock") {
    config.llm.provider = LlmProvider::Mock;
  } else if (llm_provider == "remote") {
    config.llm.provider = LlmProvider::Remote;
  } else {
    throw ValidationError("config: unknown llm provider '" + llm_provider + "'");
  }
  config.llm.endpoint = llm.value("endpoint", "");
  config.llm.retries = llm.value("retries", config.llm.retries);
  config.llm.backoff_ms = llm.value("backoff_ms", config.llm.backoff_ms);

  config.k = j.value("k", config.k);
  config.ablation = ablation_from_name(j.value("ablation", "none"));
  config.repeats = j.value("repeats", config.repeats);
  const std::string prompt_chain = j.value("prompt_chain", "predicted");
  if (prompt_chain == "predicted") {
    config.prompt_chain = PromptChainSource::Predicted;
  } else if (prompt_chain == "extracted") {
    config.prompt_chain = PromptChainSource::Extracted;
  } else {
    throw ValidationError("config: unknown prompt_chain '" + prompt_chain + "'");
  }
  if (config.k < 1) {
    throw ValidationError("config: k must be >= 1");
  }
  if (config.repeats < 1) {
    throw ValidationError("config: repeats must be >= 1");
  }
  return config;
}

inline Json run_config_to_json(const RunConfig& config) {
  return Json{
      {"paths",
       Json{{"dataset", config.paths.dataset.string()},
            {"run_dir", config.paths.run_dir.string()},
            {"graph_template", config.paths.graph_template.string()},
            {"chain_template", config.paths.chain_template.string()},
            {"relevance_template", config.paths.relevance_template.string()},
            {"answer_template", config.paths.answer_template.string()}}},
      {"seeds",
       Json{{"split", config.seeds.split},
            {"policy", config.seeds.policy},
            {"dssm", config.seeds.dssm},
            {"generation", config.seeds.generation}}},
      {"policy",
       Json{{"max_steps", config.policy.max_steps},
            {"inference_steps", config.policy.inference_steps},
            {"learning_rate", config.policy.learning_rate},
            {"epochs", config.policy.epochs},
            {"hidden_widths", config.policy.hidden_widths},
            {"action_mode", config.policy.action_mode == ActionMode::Neighbors
                                ? "neighbors"
                                : "all_unvisited"},
            {"head", config.policy.head == PolicyHead::SharedCandidate
                         ? "shared_candidate"
                         : "global_output"},
            {"credit", config.policy.credit == CreditMode::ReturnToGo
                           ? "return_to_go"
                           : "total_return"}}},
      {"dssm",
       Json{{"alpha", config.dssm.alpha},
            {"learning_rate", config.dssm.learning_rate},
            {"epochs", config.dssm.epochs},
            {"hidden_widths", config.dssm.hidden_widths},
            {"pool_size", config.dssm.pool_size}}},
      {"generation",
       Json{{"temperature", config.generation.temperature},
            {"top_p", config.generation.top_p},
            {"max_tokens", config.generation.max_tokens},
            {"model_id", config.generation.model_id}}},
      {"encoder",
       Json{{"provider", config.encoder.provider == EncoderProvider::Remote
                             ? "remote"
                             : "deterministic"},
            {"dim", config.encoder.dim},
            {"normalize", config.encoder.normalize},
            {"endpoint", config.encoder.endpoint}}},
      {"llm", Json{{"provider", config.llm.provider == LlmProvider::Remote
                                    ? "remote"
                                    : "mock"},
                   {"endpoint", config.llm.endpoint},
                   {"retries", config.llm.retries},
                   {"backoff_ms", config.llm.backoff_ms}}},
      {"k", config.k},
      {"ablation", ablation_name(config.ablation)},
      {"repeats", config.repeats},
      {"prompt_chain",
       config.prompt_chain == PromptChainSource::Predicted ? "predicted"
                                                           : "extracted"}};
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
  Json j;
  try {
    j = Json::parse(read_text_file(path));
  } catch (const Json::parse_error& e) {
    throw ParseError("config file " + path.string() + ": " + e.what());
  }
  RunConfig config = run_config_from_json(j);
  if (config.paths.dataset.empty()) {
    throw ValidationError("config: paths.dataset is required");
  }
  if (config.paths.run_dir.empty()) {
    throw ValidationError("config: paths.run_dir is required");
  }
  return config;
}

// ---------------------------------------------------------------------------
// Shared pipeline plumbing.
// ---------------------------------------------------------------------------

namespace detail {

struct RunLayout {
  std::filesystem::path run_dir;

  std::filesystem::path dataset_normalized() const {
    return run_dir / "dataset" / "normalized.jsonl";
  }
  std::filesystem::path split_file(const std::string& name) const {
    return run_dir / "splits" / (name + ".jsonl");
  }
  std::filesystem::path fragments() const {
    return run_dir / "graph" / "fragments.jsonl";
  }
  std::filesystem::path graph() const { return run_dir / "graph" / "graph.txt"; }
  std::filesystem::path chains(const std::string& split) const {
    return run_dir / "chains" / (split + ".jsonl");
  }
  std::filesystem::path predicted_chains(const std::string& split) const {
    return run_dir / "chains" / ("predicted_" + split + ".jsonl");
  }
  std::filesystem::path policy_checkpoint() const {
    return run_dir / "checkpoints" / "policy.bin";
  }
  std::filesystem::path dssm_checkpoint() const {
    return run_dir / "checkpoints" / "dssm.bin";
  }
  std::filesystem::path policy_log() const {
    return run_dir / "logs" / "policy_train.jsonl";
  }
  std::filesystem::path dssm_log() const {
    return run_dir / "logs" / "dssm_train.jsonl";
  }
  std::filesystem::path judgments() const {
    return run_dir / "dssm" / "judgments.jsonl";
  }
  std::filesystem::path triplets() const {
    return run_dir / "dssm" / "triplets.jsonl";
  }
  std::filesystem::path retrieval() const {
    return run_dir / "retrieval" / "results.jsonl";
  }
  std::filesystem::path answers(int repeat) const {
    return run_dir / "answers" / ("repeat_" + std::to_string(repeat) + ".jsonl");
  }
  std::filesystem::path llm_log(int repeat) const {
    return run_dir / "logs" /
           ("llm_calls_" + std::to_string(repeat) + ".jsonl");
  }
  std::filesystem::path per_example_metrics(int repeat) const {
    return run_dir / "metrics" /
           ("per_example_" + std::to_string(repeat) + ".jsonl");
  }
  std::filesystem::path metrics_aggregate() const {
    return run_dir / "metrics" / "aggregate.json";
  }
  std::filesystem::path metrics_report() const {
    return run_dir / "metrics" / "report.txt";
  }
  std::filesystem::path warnings_log(const std::string& stage) const {
    return run_dir / "logs" / ("warnings_" + stage + ".log");
  }
  std::filesystem::path manifest() const { return run_dir / "manifest.json"; }
};

inline void require_artifact(const std::filesystem::path& path,
                             const std::string& producer) {
  if (!std::filesystem::exists(path)) {
    throw Error("missing upstream artifact " + path.string() + "; run '" +
                producer + "' first");
  }
}

inline std::unique_ptr<LlmClient> make_llm_client(const RunConfig& config) {
  if (config.llm.provider == LlmProvider::Mock) {
    return std::make_unique<MockLlmClient>();
  }
  return std::make_unique<RemoteLlmClient>(config.llm.endpoint,
                                           config.llm.api_key);
}

inline RetryPolicy retry_policy(const RunConfig& config) {
  return RetryPolicy{config.llm.retries,
                     std::chrono::milliseconds(config.llm.backoff_ms), 2.0};
}

inline std::string template_or_default(const std::filesystem::path& override_path,
                                       std::string_view fallback) {
  if (override_path.empty()) {
    return std::string(fallback);
  }
  return read_text_file(override_path);
}

/// Records stage artifacts in the manifest with content fingerprints.
inline void update_manifest(const RunConfig& config, const std::string& stage,
                            const std::vector<std::filesystem::path>& artifacts) {
  const RunLayout layout{config.paths.run_dir};
  Json manifest = Json::object();
  if (std::filesystem::exists(layout.manifest())) {
    manifest = Json::parse(read_text_file(layout.manifest()));
  }
  manifest["versions"] = Json{{"lsim", std::string(kVersion)},
                              {"manifest_format", 1}};
  manifest["config"] = run_config_to_json(config);
  manifest["seeds"] = Json{{"split", config.seeds.split},
                           {"policy", config.seeds.policy},
                           {"dssm", config.seeds.dssm},
                           {"generation", config.seeds.generation}};
  if (!manifest.contains("artifacts")) {
    manifest["artifacts"] = Json::object();
  }
  if (!manifest.contains("timestamps")) {
    manifest["timestamps"] = Json::object();
  }
  for (const auto& artifact : artifacts) {
    const std::string rel =
        std::filesystem::relative(artifact, config.paths.run_dir).string();
    manifest["artifacts"][rel] = file_digest(artifact);
  }
  manifest["timestamps"][stage] = iso8601_utc_now();
  write_text_file(layout.manifest(), manifest.dump(2) + "\n");
}

inline void flush_warnings(const RunConfig& config, const std::string& stage,
                           const std::vector<std::string>& warnings) {
  if (warnings.empty()) {
    return;
  }
  const RunLayout layout{config.paths.run_dir};
  std::string text;
  for (const auto& warning : warnings) {
    text += warning;
    text += '\n';
  }
  write_text_file(layout.warnings_log(stage), text);
}

inline std::vector<QAPair> load_split(const RunLayout& layout,
                                      const std::string& name) {
  require_artifact(layout.split_file(name), "split");
  std::vector<QAPair> pairs;
  const auto records = read_jsonl(layout.split_file(name));
  pairs.reserve(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    pairs.push_back(pair_from_json(records[i], layout.split_file(name).string() +
                                                   " record " +
                                                   std::to_string(i + 1)));
  }
  return pairs;
}

/// Extracted chain pairs keyed by pair id.
inline std::map<std::string, ChainPairResult> load_chain_records(
    const std::filesystem::path& path) {
  std::map<std::string, ChainPairResult> chains;
  for (const auto& record : read_jsonl(path)) {
    const std::string pair_id = record.value("pair_id", "");
    const std::string where = path.string() + " pair " + pair_id;
    ChainPairResult result;
    result.question_chain = chain_from_json(record.at("question"), where);
    result.answer_chain = chain_from_json(record.at("answer"), where);
    chains.emplace(pair_id, std::move(result));
  }
  return chains;
}

inline std::map<std::string, FactRuleChain> load_predicted_chains(
    const std::filesystem::path& path) {
  std::map<std::string, FactRuleChain> chains;
  for (const auto& record : read_jsonl(path)) {
    const std::string pair_id = record.value("pair_id", "");
    chains.emplace(pair_id,
                   chain_from_json(record, path.string() + " pair " + pair_id));
  }
  return chains;
}

inline const std::vector<std::string> kSplitNames{"database", "train", "test"};

}  // namespace detail

// ---------------------------------------------------------------------------
// Stages.
// ---------------------------------------------------------------------------

/// Loads and validates the raw dataset and writes the normalized copy.
inline void cmd_ingest(const RunConfig& config) {
  const detail::RunLayout layout{config.paths.run_dir};
  const auto pairs = load_dataset(config.paths.dataset);
  save_dataset(layout.dataset_normalized(), pairs);
  detail::update_manifest(config, "ingest", {layout.dataset_normalized()});
}

/// Two-stage 8:2 split into database / train / test files.
inline void cmd_split(const RunConfig& config) {
  const detail::RunLayout layout{config.paths.run_dir};
  const auto pairs = load_dataset(config.paths.dataset);
  const DataSplits splits = split_dataset(pairs, config.seeds.split);
  save_dataset(layout.split_file("database"), splits.database);
  save_dataset(layout.split_file("train"), splits.train);
  save_dataset(layout.split_file("test"), splits.test);
  detail::update_manifest(config, "split",
                          {layout.split_file("database"),
                           layout.split_file("train"),
                           layout.split_file("test")});
}

/// LLM extraction of per-pair graph fragments (resumable) folded into the
/// fact-rule graph over all splits.
inline void cmd_build_graph(const RunConfig& config) {
  const detail::RunLayout layout{config.paths.run_dir};
  std::vector<QAPair> pairs;
  for (const auto& split : detail::kSplitNames) {
    const auto split_pairs = detail::load_split(layout, split);
    pairs.insert(pairs.end(), split_pairs.begin(), split_pairs.end());
  }
  const auto llm = detail::make_llm_client(config);
  const RetryPolicy retry = detail::retry_policy(config);
  const std::string template_text = detail::template_or_default(
      config.paths.graph_template, kGraphExtractionTemplate);

  // Fragments already on disk are kept, so interrupted builds resume where
  // they stopped.
  std::map<std::string, GraphFragment> done;
  if (std::filesystem::exists(layout.fragments())) {
    for (const auto& record : read_jsonl(layout.fragments())) {
      GraphFragment fragment =
          fragment_from_json(record, layout.fragments().string());
      done.emplace(fragment.pair_id, std::move(fragment));
    }
  }
  for (const auto& pair : pairs) {
    if (done.count(pair.id) > 0) {
      continue;
    }
    GraphFragment fragment =
        extract_graph_fragment(pair, *llm, retry, template_text);
    append_jsonl(layout.fragments(), fragment_to_json(fragment));
    done.emplace(pair.id, std::move(fragment));
  }

  std::vector<GraphFragment> ordered;
  ordered.reserve(pairs.size());
  for (const auto& pair : pairs) {
    ordered.push_back(done.at(pair.id));
  }
  std::vector<std::string> warnings;
  const FactRuleGraph graph = assemble_graph(ordered, &warnings);
  if (graph.empty()) {
    throw Error("build-graph: extraction produced no nodes");
  }
  save_graph(layout.graph(), graph);
  detail::flush_warnings(config, "build_graph", warnings);
  detail::update_manifest(config, "build_graph",
                          {layout.fragments(), layout.graph()});
}

/// Question/answer chain extraction for every split (resumable per pair).
inline void cmd_extract_chains(const RunConfig& config) {
  const detail::RunLayout layout{config.paths.run_dir};
  detail::require_artifact(layout.graph(), "build-graph");
  const FactRuleGraph graph = load_graph(layout.graph());
  const auto llm = detail::make_llm_client(config);
  const RetryPolicy retry = detail::retry_policy(config);
  const std::string template_text = detail::template_or_default(
      config.paths.chain_template, kChainSelectionTemplate);

  std::vector<std::string> warnings;
  std::vector<std::filesystem::path> artifacts;
  for (const auto& split : detail::kSplitNames) {
    const auto pairs = detail::load_split(layout, split);
    const auto chains_path = layout.chains(split);
    std::set<std::string> done;
    if (std::filesystem::exists(chains_path)) {
      for (const auto& record : read_jsonl(chains_path)) {
        done.insert(record.value("pair_id", ""));
      }
    }
    for (const auto& pair : pairs) {
      if (done.count(pair.id) > 0) {
        continue;
      }
      const ChainPairResult result = extract_chain(
          pair, graph, *llm, config.encoder, retry, &warnings, template_text);
      append_jsonl(chains_path,
                   Json{{"pair_id", pair.id},
                        {"question", chain_to_json(result.question_chain)},
                        {"answer", chain_to_json(result.answer_chain)}});
    }
    artifacts.push_back(chains_path);
  }
  detail::flush_warnings(config, "extract_chains", warnings);
  detail::update_manifest(config, "extract_chains", artifacts);
}

/// REINFORCE training on the train split, then greedy chain prediction for
/// every split (the predicted chains feed the ranker and the prompts).
inline void cmd_train_policy(const RunConfig& config) {
  const detail::RunLayout layout{config.paths.run_dir};
  detail::require_artifact(layout.graph(), "build-graph");
  detail::require_artifact(layout.chains("train"), "extract-chains");
  const FactRuleGraph graph = load_graph(layout.graph());

  const auto train_chains = detail::load_chain_records(layout.chains("train"));
  const auto train_pairs = detail::load_split(layout, "train");
  std::vector<PolicyTrainExample> examples;
  examples.reserve(train_pairs.size());
  for (const auto& pair : train_pairs) {
    const auto it = train_chains.find(pair.id);
    if (it == train_chains.end()) {
      throw Error("missing extracted chain for train pair '" + pair.id + "'");
    }
    examples.push_back(
        PolicyTrainExample{it->second.question_chain, it->second.answer_chain});
  }

  PolicyConfig policy_config = config.policy;
  policy_config.seed = config.seeds.policy;
  std::vector<EpochStat> log;
  const PolicyModel model =
      train_policy(examples, graph, config.encoder, policy_config, &log);
  save_checkpoint(layout.policy_checkpoint(), model.mlp);

  std::vector<Json> log_records;
  for (const auto& entry : log) {
    log_records.push_back(
        Json{{"epoch", entry.epoch}, {"mean_return", entry.mean_value}});
  }
  write_jsonl(layout.policy_log(), log_records);

  // Predicted chains for all splits.
  NodeEmbeddingCache nodes(graph, config.encoder);
  std::vector<std::filesystem::path> artifacts{layout.policy_checkpoint(),
                                               layout.policy_log()};
  for (const auto& split : detail::kSplitNames) {
    detail::require_artifact(layout.chains(split), "extract-chains");
    const auto chains = detail::load_chain_records(layout.chains(split));
    const auto pairs = detail::load_split(layout, split);
    std::vector<Json> records;
    records.reserve(pairs.size());
    for (const auto& pair : pairs) {
      const auto it = chains.find(pair.id);
      if (it == chains.end()) {
        throw Error("missing extracted chain for pair '" + pair.id + "'");
      }
      const FactRuleChain predicted = predict_chain(
          it->second.question_chain, graph, model, nodes, policy_config);
      Json record = chain_to_json(predicted);
      record["pair_id"] = pair.id;
      records.push_back(std::move(record));
    }
    write_jsonl(layout.predicted_chains(split), records);
    artifacts.push_back(layout.predicted_chains(split));
  }
  detail::update_manifest(config, "train_policy", artifacts);
}

/// Relevance annotation over pre-filtered candidate pools, triplet
/// construction, and margin-ranking training of the scorer.
inline void cmd_train_dssm(const RunConfig& config) {
  const detail::RunLayout layout{config.paths.run_dir};
  detail::require_artifact(layout.graph(), "build-graph");
  detail::require_artifact(layout.predicted_chains("train"), "train-policy");
  detail::require_artifact(layout.predicted_chains("database"), "train-policy");
  const FactRuleGraph graph = load_graph(layout.graph());
  const auto train_pairs = detail::load_split(layout, "train");
  const auto database = detail::load_split(layout, "database");
  const auto train_predicted =
      detail::load_predicted_chains(layout.predicted_chains("train"));
  const auto database_predicted =
      detail::load_predicted_chains(layout.predicted_chains("database"));

  std::map<std::string, const QAPair*> database_by_id;
  for (const auto& pair : database) {
    database_by_id.emplace(pair.id, &pair);
  }

  const auto llm = detail::make_llm_client(config);
  const RetryPolicy retry = detail::retry_policy(config);
  const std::string template_text = detail::template_or_default(
      config.paths.relevance_template, kRelevanceTemplate);

  std::vector<std::string> warnings;
  std::vector<RelevanceJudgment> judgments;
  std::vector<Json> judgment_records;
  for (const auto& query : train_pairs) {
    const auto pool =
        candidate_pool(query, database, config.encoder, config.dssm.pool_size);
    for (const auto& candidate_id : pool) {
      try {
        const RelevanceJudgment judgment = annotate_relevance(
            query, *database_by_id.at(candidate_id), *llm, retry, template_text);
        judgment_records.push_back(Json{{"query_id", judgment.query_id},
                                        {"candidate_id", judgment.candidate_id},
                                        {"score", judgment.score}});
        judgments.push_back(judgment);
      } catch (const LlmError& e) {
        warn(&warnings, e.what());
      }
    }
  }
  write_jsonl(layout.judgments(), judgment_records);

  const auto triplets = build_triplets(judgments, &warnings);
  if (triplets.empty()) {
    throw Error("train-dssm: no usable triplets (all judgments tied?)");
  }
  std::vector<Json> triplet_records;
  for (const auto& triplet : triplets) {
    triplet_records.push_back(Json{{"query_id", triplet.query_id},
                                   {"positive_id", triplet.positive_id},
                                   {"negative_id", triplet.negative_id}});
  }
  write_jsonl(layout.triplets(), triplet_records);

  // Features: query side from train pairs, candidate side from the database.
  // Training always runs unablated; ablation is an inference-time mask.
  std::map<std::string, FeatureVector> features;
  std::map<std::string, const QAPair*> train_by_id;
  for (const auto& pair : train_pairs) {
    train_by_id.emplace(pair.id, &pair);
  }
  auto add_features = [&](const std::string& id) {
    if (features.count(id) > 0) {
      return;
    }
    const QAPair* pair = nullptr;
    const FactRuleChain* chain = nullptr;
    if (const auto it = train_by_id.find(id); it != train_by_id.end()) {
      pair = it->second;
      chain = &train_predicted.at(id);
    } else if (const auto dit = database_by_id.find(id);
               dit != database_by_id.end()) {
      pair = dit->second;
      chain = &database_predicted.at(id);
    } else {
      throw Error("train-dssm: id '" + id + "' in no split");
    }
    features.emplace(id, build_features(pair->question_text, *chain, graph,
                                        config.encoder, Ablation::None));
  };
  for (const auto& triplet : triplets) {
    add_features(triplet.query_id);
    add_features(triplet.positive_id);
    add_features(triplet.negative_id);
  }

  DssmConfig dssm_config = config.dssm;
  dssm_config.seed = config.seeds.dssm;
  std::vector<EpochStat> log;
  const DssmParams params = train_dssm(triplets, features, dssm_config, &log);
  save_checkpoint(layout.dssm_checkpoint(), params.mlp);

  std::vector<Json> log_records;
  for (const auto& entry : log) {
    log_records.push_back(
        Json{{"epoch", entry.epoch}, {"mean_loss", entry.mean_value}});
  }
  write_jsonl(layout.dssm_log(), log_records);
  detail::flush_warnings(config, "train_dssm", warnings);
  detail::update_manifest(config, "train_dssm",
                          {layout.judgments(), layout.triplets(),
                           layout.dssm_checkpoint(), layout.dssm_log()});
}

namespace detail {

/// Layout of a retrieval/answer/evaluate pass; ablation passes re-root these
/// stages in their own directory while sharing the trained artifacts.
inline RunLayout stage_layout(const RunConfig& config) {
  RunLayout layout{config.paths.run_dir};
  if (config.ablation != Ablation::None) {
    layout.run_dir = config.paths.run_dir /
                     ("ablation_" + std::string(ablation_name(config.ablation)));
  }
  return layout;
}

}  // namespace detail

/// Scores every test question against the whole database with the trained
/// scorer and keeps the top K.
inline void cmd_retrieve(const RunConfig& config) {
  const detail::RunLayout base{config.paths.run_dir};
  const detail::RunLayout stage = detail::stage_layout(config);
  detail::require_artifact(base.graph(), "build-graph");
  detail::require_artifact(base.dssm_checkpoint(), "train-dssm");
  detail::require_artifact(base.predicted_chains("test"), "train-policy");
  detail::require_artifact(base.predicted_chains("database"), "train-policy");

  const FactRuleGraph graph = load_graph(base.graph());
  const DssmParams params{load_checkpoint(base.dssm_checkpoint()).params};
  validate_dssm_params(params);
  const auto test_pairs = detail::load_split(base, "test");
  const auto database = detail::load_split(base, "database");
  const auto test_predicted =
      detail::load_predicted_chains(base.predicted_chains("test"));
  const auto database_predicted =
      detail::load_predicted_chains(base.predicted_chains("database"));

  std::vector<std::pair<std::string, FeatureVector>> candidates;
  candidates.reserve(database.size());
  for (const auto& pair : database) {
    candidates.emplace_back(
        pair.id, build_features(pair.question_text,
                                database_predicted.at(pair.id), graph,
                                config.encoder, config.ablation));
  }

  std::vector<Json> records;
  records.reserve(test_pairs.size());
  for (const auto& query : test_pairs) {
    const FeatureVector query_features =
        build_features(query.question_text, test_predicted.at(query.id), graph,
                       config.encoder, config.ablation);
    const auto results =
        retrieve_topk(query_features, candidates, params, config.k);
    Json result_array = Json::array();
    for (const auto& result : results) {
      result_array.push_back(Json{{"candidate_id", result.candidate_id},
                                  {"score", result.score},
                                  {"rank", result.rank}});
    }
    records.push_back(Json{{"query_id", query.id}, {"results", result_array}});
  }
  write_jsonl(stage.retrieval(), records);
  detail::update_manifest(config, "retrieve", {stage.retrieval()});
}

/// In-context generation for every test question; one answers file per
/// repeat, varying only the generation seed.
inline void cmd_answer(const RunConfig& config) {
  const detail::RunLayout base{config.paths.run_dir};
  const detail::RunLayout stage = detail::stage_layout(config);
  detail::require_artifact(stage.retrieval(), "retrieve");
  detail::require_artifact(base.graph(), "build-graph");
  const FactRuleGraph graph = load_graph(base.graph());
  const auto test_pairs = detail::load_split(base, "test");
  const auto database = detail::load_split(base, "database");
  const auto test_chains = detail::load_chain_records(base.chains("test"));
  const auto test_predicted =
      detail::load_predicted_chains(base.predicted_chains("test"));

  std::map<std::string, std::vector<RetrievalResult>> retrieval;
  for (const auto& record : read_jsonl(stage.retrieval())) {
    std::vector<RetrievalResult> results;
    for (const auto& entry : record.value("results", Json::array())) {
      results.push_back(RetrievalResult{entry.value("candidate_id", ""),
                                        entry.value("score", 0.0),
                                        entry.value("rank", 0)});
    }
    retrieval.emplace(record.value("query_id", ""), std::move(results));
  }

  const auto llm = detail::make_llm_client(config);
  const RetryPolicy retry = detail::retry_policy(config);
  const std::string template_text = detail::template_or_default(
      config.paths.answer_template, kAnswerTemplate);

  std::vector<std::string> warnings;
  std::vector<std::filesystem::path> artifacts;
  for (int repeat = 0; repeat < config.repeats; ++repeat) {
    GenerationConfig generation = config.generation;
    generation.seed = config.seeds.generation + static_cast<std::uint64_t>(repeat);
    RunLog log(stage.llm_log(repeat));
    std::vector<Json> answers;
    answers.reserve(test_pairs.size());
    for (const auto& query : test_pairs) {
      const auto it = retrieval.find(query.id);
      if (it == retrieval.end()) {
        throw Error("missing retrieval results for test pair '" + query.id + "'");
      }
      const PromptContext context =
          assemble_context(it->second, database, config.k, &warnings);
      const FactRuleChain& prompt_chain =
          config.prompt_chain == PromptChainSource::Predicted
              ? test_predicted.at(query.id)
              : test_chains.at(query.id).question_chain;
      const std::string answer =
          generate_answer(query, prompt_chain, graph, context, *llm, generation,
                          retry, &log, template_text);
      answers.push_back(Json{{"id", query.id}, {"answer", answer}});
    }
    write_jsonl(stage.answers(repeat), answers);
    artifacts.push_back(stage.answers(repeat));
    artifacts.push_back(stage.llm_log(repeat));
  }
  detail::flush_warnings(config, "answer", warnings);
  detail::update_manifest(config, "answer", artifacts);
}

/// Scores generated answers against the test references; with repeats > 1
/// the report carries the mean over repeats.
inline void cmd_evaluate(const RunConfig& config) {
  const detail::RunLayout base{config.paths.run_dir};
  const detail::RunLayout stage = detail::stage_layout(config);
  const auto test_pairs = detail::load_split(base, "test");
  std::vector<std::pair<std::string, std::string>> references;
  references.reserve(test_pairs.size());
  for (const auto& pair : test_pairs) {
    references.emplace_back(pair.id, pair.answer_text);
  }

  std::vector<MetricsReport> reports;
  std::vector<std::filesystem::path> artifacts;
  for (int repeat = 0; repeat < config.repeats; ++repeat) {
    detail::require_artifact(stage.answers(repeat), "answer");
    std::vector<std::pair<std::string, std::string>> predictions;
    for (const auto& record : read_jsonl(stage.answers(repeat))) {
      predictions.emplace_back(record.value("id", ""),
                               record.value("answer", ""));
    }
    const MetricsReport report =
        evaluate_run(predictions, references, config.encoder);
    std::vector<Json> per_example;
    for (const auto& scores : report.per_example) {
      per_example.push_back(Json{{"id", scores.id},
                                 {"meteor", scores.meteor},
                                 {"rouge1_f", scores.rouge1_f},
                                 {"rouge2_f", scores.rouge2_f},
                                 {"rougeL_f", scores.rougeL_f},
                                 {"bertscore_proxy", scores.bertscore_proxy}});
    }
    write_jsonl(stage.per_example_metrics(repeat), per_example);
    artifacts.push_back(stage.per_example_metrics(repeat));
    reports.push_back(report);
  }

  MetricsReport mean;
  for (const auto& report : reports) {
    mean.meteor += report.meteor;
    mean.rouge1_f += report.rouge1_f;
    mean.rouge2_f += report.rouge2_f;
    mean.rougeL_f += report.rougeL_f;
    mean.bertscore_proxy += report.bertscore_proxy;
  }
  const double n = static_cast<double>(reports.size());
  mean.meteor /= n;
  mean.rouge1_f /= n;
  mean.rouge2_f /= n;
  mean.rougeL_f /= n;
  mean.bertscore_proxy /= n;

  const Json aggregate{{"repeats", config.repeats},
                       {"ablation", ablation_name(config.ablation)},
                       {"meteor", mean.meteor},
                       {"rouge1_f", mean.rouge1_f},
                       {"rouge2_f", mean.rouge2_f},
                       {"rougeL_f", mean.rougeL_f},
                       {"bertscore_proxy", mean.bertscore_proxy}};
  write_text_file(stage.metrics_aggregate(), aggregate.dump(2) + "\n");

  const std::string label = config.ablation == Ablation::None
                                ? "full"
                                : ablation_name(config.ablation);
  write_text_file(stage.metrics_report(),
                  format_metrics_table({{label, mean}}));
  artifacts.push_back(stage.metrics_aggregate());
  artifacts.push_back(stage.metrics_report());
  detail::update_manifest(config, "evaluate", artifacts);
}

namespace detail {

inline MetricsReport report_from_aggregate(const Json& aggregate) {
  MetricsReport report;
  report.meteor = aggregate.value("meteor", 0.0);
  report.rouge1_f = aggregate.value("rouge1_f", 0.0);
  report.rouge2_f = aggregate.value("rouge2_f", 0.0);
  report.rougeL_f = aggregate.value("rougeL_f", 0.0);
  report.bertscore_proxy = aggregate.value("bertscore_proxy", 0.0);
  return report;
}

}  // namespace detail

/// Reruns retrieval, generation and evaluation with one feature half masked,
/// then refreshes the comparison table (unablated row first).
inline void cmd_ablate(const RunConfig& config, Ablation mode) {
  if (mode == Ablation::None) {
    throw ValidationError("ablate: mode must be no_logical or no_semantic");
  }
  RunConfig ablated = config;
  ablated.ablation = mode;
  cmd_retrieve(ablated);
  cmd_answer(ablated);
  cmd_evaluate(ablated);

  // Comparison table across whatever passes exist so far.
  const detail::RunLayout base{config.paths.run_dir};
  std::vector<std::pair<std::string, MetricsReport>> rows;
  if (std::filesystem::exists(base.metrics_aggregate())) {
    rows.emplace_back("full", detail::report_from_aggregate(Json::parse(
                                  read_text_file(base.metrics_aggregate()))));
  }
  for (const Ablation candidate : {Ablation::NoLogical, Ablation::NoSemantic}) {
    RunConfig probe = config;
    probe.ablation = candidate;
    const detail::RunLayout layout = detail::stage_layout(probe);
    if (std::filesystem::exists(layout.metrics_aggregate())) {
      rows.emplace_back(ablation_name(candidate),
                        detail::report_from_aggregate(Json::parse(
                            read_text_file(layout.metrics_aggregate()))));
    }
  }
  const auto table_path = config.paths.run_dir / "ablation_comparison.txt";
  write_text_file(table_path, format_metrics_table(rows));
  detail::update_manifest(config, "ablate_" + std::string(ablation_name(mode)),
                          {table_path});
}

/// The whole pipeline in stage order.
inline void run_all(const RunConfig& config) {
  cmd_ingest(config);
  cmd_split(config);
  cmd_build_graph(config);
  cmd_extract_chains(config);
  cmd_train_policy(config);
  cmd_train_dssm(config);
  cmd_retrieve(config);
  cmd_answer(config);
  cmd_evaluate(config);
}

}  // namespace lsim
