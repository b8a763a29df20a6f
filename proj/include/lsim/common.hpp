#pragma once

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace lsim {

inline constexpr std::string_view kVersion = "0.1.0";

using Json = nlohmann::json;

/// Base type for every error this library throws.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// File access problems (missing files, unwritable paths).
class IoError : public Error {
 public:
  using Error::Error;
};

/// Malformed content (bad records, bad replies, bad templates).
class ParseError : public Error {
 public:
  using Error::Error;
};

/// Contract violations on data values (empty fields, bad shapes, bad ranges).
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// LLM call failures, including retry exhaustion.
class LlmError : public Error {
 public:
  using Error::Error;
};

/// Remote endpoint failures (unreachable, bad status, bad payload).
class RemoteError : public Error {
 public:
  using Error::Error;
};

/// Optional collector for non-fatal events; null discards them.
using WarningSink = std::vector<std::string>*;

inline void warn(WarningSink sink, std::string message) {
  if (sink != nullptr) {
    sink->push_back(std::move(message));
  }
}

// ---------------------------------------------------------------------------
// Deterministic randomness.
//
// All stochastic code in the library draws through Rng. std::mt19937_64 output
// is pinned by the standard, and the distribution helpers below avoid the
// implementation-defined std::*_distribution classes, so seeded results are
// identical across platforms and standard libraries.
// ---------------------------------------------------------------------------

inline constexpr double kPi = 3.14159265358979323846;

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t next_u64() { return gen_(); }

  /// Uniform in [0, 1) with 53 random bits.
  double next_unit() {
    return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) {
    return lo + (hi - lo) * next_unit();
  }

  /// Standard normal via Box-Muller on raw mt19937_64 bits.
  double next_gaussian() {
    double u1 = next_unit();
    if (u1 <= 0.0) {
      u1 = 0x1.0p-53;
    }
    const double u2 = next_unit();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
  }

  /// Unbiased draw in [0, n) by rejection.
  std::uint64_t below(std::uint64_t n) {
    if (n == 0) {
      throw ValidationError("Rng::below requires n > 0");
    }
    const std::uint64_t max = std::numeric_limits<std::uint64_t>::max();
    const std::uint64_t limit = max - max % n;
    std::uint64_t x = gen_();
    while (x >= limit) {
      x = gen_();
    }
    return x % n;
  }

  template <class T>
  void shuffle(std::vector<T>& items) {
    // Fisher-Yates with the portable bounded draw above.
    for (std::size_t i = items.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  std::mt19937_64 gen_;
};

// ---------------------------------------------------------------------------
// Strings and tokens.
// ---------------------------------------------------------------------------

inline std::string trim(std::string_view s) {
  std::size_t begin = 0;
  std::size_t end = s.size();
  while (begin < end && std::isspace(static_cast<unsigned char>(s[begin]))) {
    ++begin;
  }
  while (end > begin && std::isspace(static_cast<unsigned char>(s[end - 1]))) {
    --end;
  }
  return std::string(s.substr(begin, end - begin));
}

inline std::string to_lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) {
    return static_cast<char>(std::tolower(c));
  });
  return s;
}

/// Lowercased word tokens: maximal runs of alphanumeric (or non-ASCII) bytes.
/// Punctuation and whitespace separate tokens and are dropped.
inline std::vector<std::string> tokenize_words(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  for (const char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    const bool word_char = std::isalnum(c) != 0 || c >= 0x80;
    if (word_char) {
      current.push_back(static_cast<char>(std::tolower(c)));
    } else if (!current.empty()) {
      tokens.push_back(current);
      current.clear();
    }
  }
  if (!current.empty()) {
    tokens.push_back(current);
  }
  return tokens;
}

/// Collapses runs of whitespace to single spaces and trims the ends.
inline std::string normalize_whitespace(std::string_view text) {
  std::string out;
  bool pending_space = false;
  for (const char ch : text) {
    if (std::isspace(static_cast<unsigned char>(ch))) {
      pending_space = !out.empty();
    } else {
      if (pending_space) {
        out.push_back(' ');
        pending_space = false;
      }
      out.push_back(ch);
    }
  }
  return out;
}

inline std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const char c : bytes) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t value) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(value));
  return std::string(buf);
}

/// Stable identifier for a node label: word tokens joined by underscores.
inline std::string slugify(std::string_view label) {
  const auto tokens = tokenize_words(label);
  if (tokens.empty()) {
    return "n" + hex64(fnv1a64(std::string(label)));
  }
  std::string slug = tokens.front();
  for (std::size_t i = 1; i < tokens.size(); ++i) {
    slug.push_back('_');
    slug += tokens[i];
  }
  return slug;
}

// ---------------------------------------------------------------------------
// Files.
// ---------------------------------------------------------------------------

inline void ensure_parent_dir(const std::filesystem::path& path) {
  const auto parent = path.parent_path();
  if (!parent.empty()) {
    std::filesystem::create_directories(parent);
  }
}

inline std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw IoError("cannot open file: " + path.string());
  }
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

inline void write_text_file(const std::filesystem::path& path,
                            std::string_view content) {
  ensure_parent_dir(path);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw IoError("cannot write file: " + path.string());
  }
  out << content;
}

/// FNV-1a fingerprint of a file's bytes, as 16 hex digits.
inline std::string file_digest(const std::filesystem::path& path) {
  return hex64(fnv1a64(read_text_file(path)));
}

// ---------------------------------------------------------------------------
// Line-delimited JSON records.
// ---------------------------------------------------------------------------

inline std::vector<Json> read_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw IoError("cannot open file: " + path.string());
  }
  std::vector<Json> records;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) {
      continue;
    }
    try {
      records.push_back(Json::parse(line));
    } catch (const Json::parse_error& e) {
      throw ParseError(path.string() + " line " + std::to_string(line_no) +
                       ": invalid record: " + e.what());
    }
  }
  return records;
}

inline void write_jsonl(const std::filesystem::path& path,
                        const std::vector<Json>& records) {
  ensure_parent_dir(path);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw IoError("cannot write file: " + path.string());
  }
  for (const auto& record : records) {
    out << record.dump() << '\n';
  }
}

inline void append_jsonl(const std::filesystem::path& path,
                         const Json& record) {
  ensure_parent_dir(path);
  std::ofstream out(path, std::ios::binary | std::ios::app);
  if (!out) {
    throw IoError("cannot append to file: " + path.string());
  }
  out << record.dump() << '\n';
  out.flush();
}

inline std::string iso8601_utc_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return std::string(buf);
}

inline std::string env_or(const char* name, std::string_view fallback) {
  const char* value = std::getenv(name);
  return value != nullptr ? std::string(value) : std::string(fallback);
}

}  // namespace lsim
