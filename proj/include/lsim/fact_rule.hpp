#pragma once

#include <deque>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "lsim/common.hpp"
#include "lsim/data_model.hpp"
#include "lsim/embedding.hpp"
#include "lsim/llm_client.hpp"

namespace lsim {

enum class NodeKind { Fact, Rule };

inline const char* node_kind_name(NodeKind kind) {
  return kind == NodeKind::Fact ? "fact" : "rule";
}

inline NodeKind node_kind_from_name(const std::string& name,
                                    const std::string& where) {
  const std::string lowered = to_lower(trim(name));
  if (lowered == "fact") {
    return NodeKind::Fact;
  }
  if (lowered == "rule") {
    return NodeKind::Rule;
  }
  throw ParseError(where + ": unknown node kind '" + name + "'");
}

/// A case circumstance (fact) or a legal basis (rule).
struct FactRuleNode {
  std::string id;
  NodeKind kind = NodeKind::Fact;
  std::string label;
};

/// Undirected graph of fact/rule nodes. Node ids are label slugs, so label
/// deduplication is case- and punctuation-insensitive.
class FactRuleGraph {
 public:
  /// Inserts unless a node with the same id exists. Returns whether inserted.
  bool add_node(FactRuleNode node) {
    if (trim(node.label).empty()) {
      throw ValidationError("FactRuleGraph: empty node label");
    }
    node.label = normalize_whitespace(node.label);
    if (node.id.empty()) {
      node.id = slugify(node.label);
    }
    const auto [it, inserted] = nodes_.emplace(node.id, node);
    if (inserted) {
      adjacency_.emplace(node.id, std::set<std::string>{});
    }
    return inserted;
  }

  /// Adds an undirected edge. Self-loops are dropped with a warning; unknown
  /// endpoints are an error. Returns whether a new edge was stored.
  bool add_edge(const std::string& a, const std::string& b,
                WarningSink warnings = nullptr) {
    if (!has_node(a) || !has_node(b)) {
      throw ValidationError("FactRuleGraph: edge endpoint missing: " + a +
                            " -- " + b);
    }
    if (a == b) {
      warn(warnings, "dropped self-loop on node '" + a + "'");
      return false;
    }
    const auto edge = a < b ? std::make_pair(a, b) : std::make_pair(b, a);
    if (!edges_.insert(edge).second) {
      return false;
    }
    adjacency_[a].insert(b);
    adjacency_[b].insert(a);
    return true;
  }

  bool has_node(const std::string& id) const { return nodes_.count(id) > 0; }

  const FactRuleNode& node(const std::string& id) const {
    const auto it = nodes_.find(id);
    if (it == nodes_.end()) {
      throw ValidationError("FactRuleGraph: unknown node id '" + id + "'");
    }
    return it->second;
  }

  const std::map<std::string, FactRuleNode>& nodes() const { return nodes_; }

  const std::set<std::pair<std::string, std::string>>& edges() const {
    return edges_;
  }

  const std::set<std::string>& neighbors(const std::string& id) const {
    const auto it = adjacency_.find(id);
    if (it == adjacency_.end()) {
      throw ValidationError("FactRuleGraph: unknown node id '" + id + "'");
    }
    return it->second;
  }

  bool adjacent(const std::string& a, const std::string& b) const {
    const auto it = adjacency_.find(a);
    return it != adjacency_.end() && it->second.count(b) > 0;
  }

  /// BFS shortest path between two nodes, endpoints included. Empty when the
  /// nodes are disconnected. Sorted adjacency keeps the result deterministic.
  std::vector<std::string> shortest_path(const std::string& from,
                                         const std::string& to) const {
    if (!has_node(from) || !has_node(to)) {
      return {};
    }
    if (from == to) {
      return {from};
    }
    std::map<std::string, std::string> parent;
    std::deque<std::string> queue{from};
    parent[from] = from;
    while (!queue.empty()) {
      const std::string current = queue.front();
      queue.pop_front();
      for (const auto& next : neighbors(current)) {
        if (parent.count(next) > 0) {
          continue;
        }
        parent[next] = current;
        if (next == to) {
          std::vector<std::string> path{to};
          std::string walk = current;
          while (walk != from) {
            path.push_back(walk);
            walk = parent[walk];
          }
          path.push_back(from);
          std::reverse(path.begin(), path.end());
          return path;
        }
        queue.push_back(next);
      }
    }
    return {};
  }

  bool empty() const { return nodes_.empty(); }
  std::size_t node_count() const { return nodes_.size(); }
  std::size_t edge_count() const { return edges_.size(); }

 private:
  std::map<std::string, FactRuleNode> nodes_;
  std::map<std::string, std::set<std::string>> adjacency_;
  std::set<std::pair<std::string, std::string>> edges_;
};

enum class ChainOwner { Question, Answer, Predicted };

inline const char* chain_owner_name(ChainOwner owner) {
  switch (owner) {
    case ChainOwner::Question:
      return "question";
    case ChainOwner::Answer:
      return "answer";
    case ChainOwner::Predicted:
      return "predicted";
  }
  return "question";
}

inline ChainOwner chain_owner_from_name(const std::string& name,
                                        const std::string& where) {
  const std::string lowered = to_lower(trim(name));
  if (lowered == "question") {
    return ChainOwner::Question;
  }
  if (lowered == "answer") {
    return ChainOwner::Answer;
  }
  if (lowered == "predicted") {
    return ChainOwner::Predicted;
  }
  throw ParseError(where + ": unknown chain owner '" + name + "'");
}

inline constexpr std::size_t kMaxExtractedChainNodes = 4;
// A rollout appends onto an up-to-4-node question chain, so predicted chains
// may hold up to 8 nodes.
inline constexpr std::size_t kMaxPredictedChainNodes = 8;

/// Ordered sequence of graph nodes describing the reasoning behind a question
/// or answer. Extracted chains (question/answer owners) are strict graph
/// paths of 1 to 4 nodes. Predicted chains keep the no-duplicate rule and an
/// 8-node cap; their connectivity is governed by the rollout's action mode.
struct FactRuleChain {
  std::vector<std::string> node_ids;
  ChainOwner owner = ChainOwner::Question;

  bool contains(const std::string& id) const {
    return std::find(node_ids.begin(), node_ids.end(), id) != node_ids.end();
  }
};

inline void validate_chain(const FactRuleChain& chain,
                           const FactRuleGraph& graph) {
  const std::size_t cap = chain.owner == ChainOwner::Predicted
                              ? kMaxPredictedChainNodes
                              : kMaxExtractedChainNodes;
  if (chain.node_ids.empty() || chain.node_ids.size() > cap) {
    throw ValidationError("chain length " +
                          std::to_string(chain.node_ids.size()) +
                          " outside [1, " + std::to_string(cap) + "]");
  }
  std::set<std::string> seen;
  for (const auto& id : chain.node_ids) {
    if (!graph.has_node(id)) {
      throw ValidationError("chain references unknown node '" + id + "'");
    }
    if (!seen.insert(id).second) {
      throw ValidationError("chain repeats node '" + id + "'");
    }
  }
  if (chain.owner != ChainOwner::Predicted) {
    for (std::size_t i = 1; i < chain.node_ids.size(); ++i) {
      if (!graph.adjacent(chain.node_ids[i - 1], chain.node_ids[i])) {
        throw ValidationError("chain nodes '" + chain.node_ids[i - 1] +
                              "' and '" + chain.node_ids[i] +
                              "' are not adjacent");
      }
    }
  }
}

/// Text form of a chain: kind-tagged labels joined by " -> ". Distinct chains
/// of one graph serialize to distinct strings.
inline std::string serialize_chain(const FactRuleChain& chain,
                                   const FactRuleGraph& graph) {
  if (chain.node_ids.empty()) {
    throw ValidationError("serialize_chain: empty chain");
  }
  std::string out;
  for (std::size_t i = 0; i < chain.node_ids.size(); ++i) {
    const auto& node = graph.node(chain.node_ids[i]);
    if (i > 0) {
      out += " -> ";
    }
    out += "[";
    out += node_kind_name(node.kind);
    out += "] ";
    out += node.label;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Prompt templates. The extraction instruction is the stock wording the mock
// client recognizes; callers may override any template from a file.
// ---------------------------------------------------------------------------

inline constexpr std::string_view kGraphExtractionTemplate =
    "Extract the key facts and legal rules from the following legal question "
    "and answer. Facts are concrete case circumstances; rules are the legal "
    "bases that apply. Connect related nodes with edges.\n"
    "\n"
    "Question: {{question}}\n"
    "\n"
    "Answer: {{answer}}\n"
    "\n"
    "Reply with JSON of the form {\"nodes\": [{\"label\": \"...\", \"kind\": "
    "\"fact\"}], \"edges\": [[\"label a\", \"label b\"]]}.\n";

inline constexpr std::string_view kChainSelectionTemplate =
    "Please select 1 to 4 nodes from the provided graph that are most "
    "relevant to the legal question/answer. Ensure that the selected nodes "
    "are interconnected.\n"
    "\n"
    "Graph nodes:\n"
    "{{nodes}}\n"
    "\n"
    "Graph edges:\n"
    "{{edges}}\n"
    "\n"
    "Text: {{text}}\n"
    "\n"
    "Reply with a JSON array of node labels, ordered to form a connected "
    "path.\n";

inline std::string replace_all(std::string text, const std::string& needle,
                               const std::string& replacement) {
  std::size_t pos = 0;
  while ((pos = text.find(needle, pos)) != std::string::npos) {
    text.replace(pos, needle.size(), replacement);
    pos += replacement.size();
  }
  return text;
}

namespace detail {

/// First balanced JSON value in the reply starting at any '{' or '['.
/// LLM replies often wrap JSON in prose; this peels it out.
inline std::optional<Json> extract_json(const std::string& reply,
                                        char open_char) {
  const char close_char = open_char == '{' ? '}' : ']';
  for (std::size_t start = reply.find(open_char); start != std::string::npos;
       start = reply.find(open_char, start + 1)) {
    int depth = 0;
    bool in_string = false;
    for (std::size_t i = start; i < reply.size(); ++i) {
      const char c = reply[i];
      if (in_string) {
        if (c == '\\') {
          ++i;
        } else if (c == '"') {
          in_string = false;
        }
        continue;
      }
      if (c == '"') {
        in_string = true;
      } else if (c == open_char) {
        ++depth;
      } else if (c == close_char) {
        --depth;
        if (depth == 0) {
          try {
            return Json::parse(reply.substr(start, i - start + 1));
          } catch (const Json::parse_error&) {
            break;
          }
        }
      }
    }
  }
  return std::nullopt;
}

inline std::vector<std::string> parse_label_list(const std::string& reply) {
  std::vector<std::string> labels;
  if (const auto array = extract_json(reply, '[');
      array.has_value() && array->is_array()) {
    for (const auto& entry : *array) {
      if (entry.is_string()) {
        const std::string label = trim(entry.get<std::string>());
        if (!label.empty()) {
          labels.push_back(label);
        }
      }
    }
    if (!labels.empty()) {
      return labels;
    }
  }
  // Fallback: one label per line, tolerating list bullets.
  std::istringstream lines(reply);
  std::string line;
  while (std::getline(lines, line)) {
    std::string label = trim(line);
    while (!label.empty() && (label.front() == '-' || label.front() == '*')) {
      label = trim(label.substr(1));
    }
    if (!label.empty()) {
      labels.push_back(label);
    }
  }
  return labels;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Graph construction.
// ---------------------------------------------------------------------------

/// Raw per-pair extraction output, kept separate from the assembled graph so
/// long builds can resume from stored fragments.
struct GraphFragment {
  std::string pair_id;
  std::vector<std::pair<std::string, std::string>> nodes;  // label, kind
  std::vector<std::pair<std::string, std::string>> edges;  // label, label
};

inline Json fragment_to_json(const GraphFragment& fragment) {
  Json nodes = Json::array();
  for (const auto& [label, kind] : fragment.nodes) {
    nodes.push_back(Json{{"label", label}, {"kind", kind}});
  }
  Json edges = Json::array();
  for (const auto& [a, b] : fragment.edges) {
    edges.push_back(Json::array({a, b}));
  }
  return Json{{"pair_id", fragment.pair_id}, {"nodes", nodes}, {"edges", edges}};
}

inline GraphFragment fragment_from_json(const Json& record,
                                        const std::string& where) {
  GraphFragment fragment;
  fragment.pair_id = record.value("pair_id", "");
  if (fragment.pair_id.empty()) {
    throw ParseError(where + ": fragment missing pair_id");
  }
  for (const auto& node : record.value("nodes", Json::array())) {
    fragment.nodes.emplace_back(node.value("label", ""), node.value("kind", ""));
  }
  for (const auto& edge : record.value("edges", Json::array())) {
    if (edge.is_array() && edge.size() == 2) {
      fragment.edges.emplace_back(edge[0].get<std::string>(),
                                  edge[1].get<std::string>());
    }
  }
  return fragment;
}

inline GraphFragment extract_graph_fragment(
    const QAPair& pair, LlmClient& llm, const RetryPolicy& retry = {},
    std::string_view template_text = kGraphExtractionTemplate) {
  std::string prompt = replace_all(std::string(template_text), "{{question}}",
                                   pair.question_text);
  prompt = replace_all(prompt, "{{answer}}", pair.answer_text);
  const std::string reply =
      complete_with_retries(llm, prompt, GenerationConfig{}, retry);

  const auto object = detail::extract_json(reply, '{');
  if (!object.has_value() || !object->is_object()) {
    throw ParseError("graph extraction reply for pair '" + pair.id +
                     "' contains no JSON object");
  }
  GraphFragment fragment;
  fragment.pair_id = pair.id;
  for (const auto& node : object->value("nodes", Json::array())) {
    if (node.is_object()) {
      fragment.nodes.emplace_back(node.value("label", ""),
                                  node.value("kind", "fact"));
    }
  }
  for (const auto& edge : object->value("edges", Json::array())) {
    if (edge.is_array() && edge.size() == 2 && edge[0].is_string() &&
        edge[1].is_string()) {
      fragment.edges.emplace_back(edge[0].get<std::string>(),
                                  edge[1].get<std::string>());
    }
  }
  return fragment;
}

/// Folds per-pair fragments into one graph. Labels deduplicate by slug (so
/// case-insensitively); the first-seen kind wins and conflicts are warned.
/// Self-loops and edges naming unknown labels are dropped with warnings.
inline FactRuleGraph assemble_graph(const std::vector<GraphFragment>& fragments,
                                    WarningSink warnings = nullptr) {
  FactRuleGraph graph;
  for (const auto& fragment : fragments) {
    for (const auto& [label, kind_name] : fragment.nodes) {
      if (trim(label).empty()) {
        warn(warnings, "pair '" + fragment.pair_id + "': empty node label");
        continue;
      }
      NodeKind kind = NodeKind::Fact;
      try {
        kind = node_kind_from_name(kind_name, "pair '" + fragment.pair_id + "'");
      } catch (const ParseError& e) {
        warn(warnings, std::string(e.what()) + "; node skipped");
        continue;
      }
      FactRuleNode node{slugify(label), kind, normalize_whitespace(label)};
      if (!graph.add_node(node) && graph.node(node.id).kind != kind) {
        warn(warnings, "node '" + node.id + "' seen with both kinds; keeping " +
                           node_kind_name(graph.node(node.id).kind));
      }
    }
  }
  for (const auto& fragment : fragments) {
    for (const auto& [a, b] : fragment.edges) {
      const std::string id_a = slugify(a);
      const std::string id_b = slugify(b);
      if (!graph.has_node(id_a) || !graph.has_node(id_b)) {
        warn(warnings, "pair '" + fragment.pair_id + "': edge endpoint '" +
                           (graph.has_node(id_a) ? b : a) + "' unknown; dropped");
        continue;
      }
      graph.add_edge(id_a, id_b, warnings);
    }
  }
  return graph;
}

/// Builds the fact-rule graph over a corpus with one LLM extraction per pair.
inline FactRuleGraph build_graph(
    const std::vector<QAPair>& pairs, LlmClient& llm,
    const RetryPolicy& retry = {}, WarningSink warnings = nullptr,
    std::string_view template_text = kGraphExtractionTemplate) {
  if (pairs.empty()) {
    throw ValidationError("build_graph: empty pair list");
  }
  std::vector<GraphFragment> fragments;
  fragments.reserve(pairs.size());
  for (const auto& pair : pairs) {
    fragments.push_back(extract_graph_fragment(pair, llm, retry, template_text));
  }
  FactRuleGraph graph = assemble_graph(fragments, warnings);
  if (graph.empty()) {
    throw Error("build_graph: extraction produced no nodes across " +
                std::to_string(pairs.size()) + " pairs");
  }
  return graph;
}

// ---------------------------------------------------------------------------
// Chain extraction.
// ---------------------------------------------------------------------------

/// Node with the most similar label under the shared encoder; ties go to the
/// lexicographically smallest node id.
inline std::string nearest_node(const std::string& label,
                                const FactRuleGraph& graph,
                                const EncoderConfig& encoder) {
  if (graph.empty()) {
    throw ValidationError("nearest_node: empty graph");
  }
  const EmbeddingVector target = encode_text(label, encoder);
  std::string best_id;
  double best_score = -2.0;
  for (const auto& [id, node] : graph.nodes()) {
    const double score =
        cosine_similarity(target, encode_text(node.label, encoder));
    if (score > best_score) {
      best_score = score;
      best_id = id;
    }
  }
  return best_id;
}

namespace detail {

inline std::string render_selection_prompt(const std::string& text,
                                           const FactRuleGraph& graph,
                                           std::string_view template_text) {
  std::string node_block;
  for (const auto& [id, node] : graph.nodes()) {
    node_block += "- [";
    node_block += node_kind_name(node.kind);
    node_block += "] ";
    node_block += node.label;
    node_block += "\n";
  }
  std::string edge_block;
  for (const auto& [a, b] : graph.edges()) {
    edge_block += "- " + graph.node(a).label + " <-> " + graph.node(b).label +
                  "\n";
  }
  std::string prompt =
      replace_all(std::string(template_text), "{{nodes}}", node_block);
  prompt = replace_all(prompt, "{{edges}}", edge_block);
  return replace_all(prompt, "{{text}}", text);
}

}  // namespace detail

/// Extracts one chain for a text. Unknown labels fall back to the most
/// similar node; selections longer than 4 are truncated; selections that are
/// not consecutively adjacent are repaired by inserting the shortest
/// connecting path when the chain stays within 4 nodes and by dropping
/// trailing nodes otherwise.
inline FactRuleChain extract_single_chain(
    const std::string& text, ChainOwner owner, const FactRuleGraph& graph,
    LlmClient& llm, const EncoderConfig& encoder, const RetryPolicy& retry = {},
    WarningSink warnings = nullptr,
    std::string_view template_text = kChainSelectionTemplate) {
  if (graph.empty()) {
    throw ValidationError("extract_single_chain: empty graph");
  }
  const std::string prompt =
      detail::render_selection_prompt(text, graph, template_text);
  const std::string reply =
      complete_with_retries(llm, prompt, GenerationConfig{}, retry, warnings);
  std::vector<std::string> labels = detail::parse_label_list(reply);
  if (labels.empty()) {
    throw LlmError("chain selection reply names no nodes: " + reply);
  }
  if (labels.size() > kMaxExtractedChainNodes) {
    warn(warnings, "selection of " + std::to_string(labels.size()) +
                       " nodes truncated to " +
                       std::to_string(kMaxExtractedChainNodes));
    labels.resize(kMaxExtractedChainNodes);
  }

  // Resolve labels to node ids.
  std::vector<std::string> resolved;
  for (const auto& label : labels) {
    const std::string slug = slugify(label);
    if (graph.has_node(slug)) {
      resolved.push_back(slug);
    } else {
      const std::string fallback = nearest_node(label, graph, encoder);
      warn(warnings, "label '" + label + "' not in graph; using nearest node '" +
                         fallback + "'");
      resolved.push_back(fallback);
    }
  }
  // Duplicates can appear after fallback resolution.
  std::vector<std::string> unique;
  for (const auto& id : resolved) {
    if (std::find(unique.begin(), unique.end(), id) == unique.end()) {
      unique.push_back(id);
    } else {
      warn(warnings, "duplicate node '" + id + "' dropped from selection");
    }
  }

  // Connectivity repair.
  FactRuleChain chain;
  chain.owner = owner;
  chain.node_ids.push_back(unique.front());
  for (std::size_t i = 1; i < unique.size(); ++i) {
    const std::string& last = chain.node_ids.back();
    const std::string& next = unique[i];
    if (graph.adjacent(last, next)) {
      chain.node_ids.push_back(next);
      continue;
    }
    const auto path = graph.shortest_path(last, next);
    bool bridged = false;
    if (path.size() > 2) {
      const std::size_t new_size = chain.node_ids.size() + path.size() - 1;
      bool reuses_node = false;
      for (std::size_t j = 1; j < path.size(); ++j) {
        if (chain.contains(path[j])) {
          reuses_node = true;
          break;
        }
      }
      if (new_size <= kMaxExtractedChainNodes && !reuses_node) {
        for (std::size_t j = 1; j < path.size(); ++j) {
          chain.node_ids.push_back(path[j]);
        }
        warn(warnings, "inserted " + std::to_string(path.size() - 2) +
                           " bridge node(s) before '" + next + "'");
        bridged = true;
      }
    }
    if (!bridged) {
      warn(warnings, "selection not connectable within " +
                         std::to_string(kMaxExtractedChainNodes) +
                         " nodes; trailing nodes dropped");
      break;
    }
  }
  validate_chain(chain, graph);
  return chain;
}

struct ChainPairResult {
  FactRuleChain question_chain;
  FactRuleChain answer_chain;
};

/// Extracts the question chain and the answer chain for one pair.
inline ChainPairResult extract_chain(
    const QAPair& pair, const FactRuleGraph& graph, LlmClient& llm,
    const EncoderConfig& encoder, const RetryPolicy& retry = {},
    WarningSink warnings = nullptr,
    std::string_view template_text = kChainSelectionTemplate) {
  ChainPairResult result;
  result.question_chain =
      extract_single_chain(pair.question_text, ChainOwner::Question, graph, llm,
                           encoder, retry, warnings, template_text);
  result.answer_chain =
      extract_single_chain(pair.answer_text, ChainOwner::Answer, graph, llm,
                           encoder, retry, warnings, template_text);
  return result;
}

// ---------------------------------------------------------------------------
// Graph and chain files.
// ---------------------------------------------------------------------------

inline constexpr std::string_view kGraphFileHeader = "lsim-graph 1";

/// Plain-text graph file: a header line, a "# nodes" section of
/// id<TAB>kind<TAB>label lines, then a "# edges" section of id<TAB>id lines.
inline void save_graph(const std::filesystem::path& path,
                       const FactRuleGraph& graph) {
  std::string out{kGraphFileHeader};
  out += "\n# nodes\n";
  for (const auto& [id, node] : graph.nodes()) {
    out += id;
    out += '\t';
    out += node_kind_name(node.kind);
    out += '\t';
    out += node.label;
    out += '\n';
  }
  out += "# edges\n";
  for (const auto& [a, b] : graph.edges()) {
    out += a;
    out += '\t';
    out += b;
    out += '\n';
  }
  write_text_file(path, out);
}

inline FactRuleGraph load_graph(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw IoError("cannot open graph file: " + path.string());
  }
  std::string line;
  if (!std::getline(in, line) || trim(line) != kGraphFileHeader) {
    throw ParseError("graph file missing header: " + path.string());
  }
  FactRuleGraph graph;
  enum class Section { None, Nodes, Edges } section = Section::None;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string where = path.string() + " line " + std::to_string(line_no);
    const std::string trimmed = trim(line);
    if (trimmed.empty()) {
      continue;
    }
    if (trimmed == "# nodes") {
      section = Section::Nodes;
      continue;
    }
    if (trimmed == "# edges") {
      section = Section::Edges;
      continue;
    }
    std::vector<std::string> fields;
    std::size_t start = 0;
    while (true) {
      const std::size_t tab = line.find('\t', start);
      fields.push_back(line.substr(start, tab - start));
      if (tab == std::string::npos) {
        break;
      }
      start = tab + 1;
    }
    if (section == Section::Nodes) {
      if (fields.size() != 3) {
        throw ParseError(where + ": node line needs id, kind, label");
      }
      graph.add_node(FactRuleNode{fields[0],
                                  node_kind_from_name(fields[1], where),
                                  fields[2]});
    } else if (section == Section::Edges) {
      if (fields.size() != 2) {
        throw ParseError(where + ": edge line needs two ids");
      }
      graph.add_edge(trim(fields[0]), trim(fields[1]));
    } else {
      throw ParseError(where + ": content before any section header");
    }
  }
  return graph;
}

inline Json chain_to_json(const FactRuleChain& chain) {
  return Json{{"owner", chain_owner_name(chain.owner)},
              {"node_ids", chain.node_ids}};
}

inline FactRuleChain chain_from_json(const Json& record,
                                     const std::string& where) {
  FactRuleChain chain;
  chain.owner = chain_owner_from_name(record.value("owner", ""), where);
  for (const auto& id : record.value("node_ids", Json::array())) {
    chain.node_ids.push_back(id.get<std::string>());
  }
  if (chain.node_ids.empty()) {
    throw ParseError(where + ": chain has no nodes");
  }
  return chain;
}

}  // namespace lsim
