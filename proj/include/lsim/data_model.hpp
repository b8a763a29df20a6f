#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <unordered_set>
#include <vector>

#include "lsim/common.hpp"

namespace lsim {

/// One question/answer record. Records with several lawyer answers are stored
/// as several pairs, each with its own id.
struct QAPair {
  std::string id;
  std::string question_text;
  std::string answer_text;
  std::optional<std::string> location;
};

inline void validate_pair(const QAPair& pair, const std::string& where) {
  if (trim(pair.id).empty()) {
    throw ValidationError(where + ": empty id");
  }
  if (trim(pair.question_text).empty()) {
    throw ValidationError(where + ": empty question for id '" + pair.id + "'");
  }
  if (trim(pair.answer_text).empty()) {
    throw ValidationError(where + ": empty answer for id '" + pair.id + "'");
  }
}

inline Json pair_to_json(const QAPair& pair) {
  Json record{{"id", pair.id},
              {"question", pair.question_text},
              {"answer", pair.answer_text}};
  if (pair.location.has_value()) {
    record["location"] = *pair.location;
  }
  return record;
}

inline QAPair pair_from_json(const Json& record, const std::string& where) {
  if (!record.is_object()) {
    throw ParseError(where + ": record is not an object");
  }
  QAPair pair;
  if (record.contains("id") && record["id"].is_string()) {
    pair.id = record["id"].get<std::string>();
  }
  if (record.contains("question") && record["question"].is_string()) {
    pair.question_text = record["question"].get<std::string>();
  }
  if (record.contains("answer") && record["answer"].is_string()) {
    pair.answer_text = record["answer"].get<std::string>();
  }
  if (record.contains("location") && record["location"].is_string()) {
    pair.location = record["location"].get<std::string>();
  }
  validate_pair(pair, where);
  return pair;
}

/// Loads a dataset of line-delimited JSON records with keys
/// id / question / answer and optional location. Duplicate ids and
/// incomplete records are rejected with the offending line number.
inline std::vector<QAPair> load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw IoError("cannot open dataset: " + path.string());
  }
  std::vector<QAPair> pairs;
  std::unordered_set<std::string> seen_ids;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) {
      continue;
    }
    const std::string where = path.string() + " line " + std::to_string(line_no);
    Json record;
    try {
      record = Json::parse(line);
    } catch (const Json::parse_error& e) {
      throw ParseError(where + ": invalid record: " + e.what());
    }
    QAPair pair = pair_from_json(record, where);
    if (!seen_ids.insert(pair.id).second) {
      throw ValidationError(where + ": duplicate id '" + pair.id + "'");
    }
    pairs.push_back(std::move(pair));
  }
  return pairs;
}

inline void save_dataset(const std::filesystem::path& path,
                         const std::vector<QAPair>& pairs) {
  std::vector<Json> records;
  records.reserve(pairs.size());
  for (const auto& pair : pairs) {
    records.push_back(pair_to_json(pair));
  }
  write_jsonl(path, records);
}

/// Three disjoint partitions of a dataset: the retrieval database plus the
/// train and test sets.
struct DataSplits {
  std::vector<QAPair> database;
  std::vector<QAPair> train;
  std::vector<QAPair> test;
};

/// Two-stage 8:2 split. The shuffled input is cut into database (80%) and a
/// remainder, and the remainder again into train (80%) and test (20%).
/// Rounding rule: |database| = floor(0.8 * total) and
/// |train| = floor(0.8 * remainder); test takes what is left. A fixed seed
/// gives an identical partition on every call.
inline DataSplits split_dataset(std::vector<QAPair> pairs, std::uint64_t seed) {
  if (pairs.empty()) {
    throw ValidationError("split_dataset: empty input");
  }
  if (pairs.size() < 5) {
    throw ValidationError(
        "split_dataset: need at least 5 records to form three nonempty "
        "splits, got " + std::to_string(pairs.size()));
  }
  Rng rng(seed);
  rng.shuffle(pairs);

  const std::size_t total = pairs.size();
  const std::size_t database_size = total * 8 / 10;
  const std::size_t remainder = total - database_size;
  const std::size_t train_size = remainder * 8 / 10;
  const std::size_t test_size = remainder - train_size;

  DataSplits splits;
  splits.database.assign(pairs.begin(), pairs.begin() + database_size);
  splits.train.assign(pairs.begin() + database_size,
                      pairs.begin() + database_size + train_size);
  splits.test.assign(pairs.begin() + database_size + train_size, pairs.end());

  if (splits.database.empty() || splits.train.empty() || test_size == 0) {
    throw ValidationError(
        "split_dataset: cannot form three nonempty splits from " +
        std::to_string(total) + " records");
  }
  return splits;
}

}  // namespace lsim
