#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "lsim/common.hpp"
#include "lsim/http.hpp"

namespace lsim {

struct EmbeddingVector {
  std::vector<double> values;

  std::size_t dim() const { return values.size(); }
};

enum class EncoderProvider { Deterministic, Remote };

struct EncoderConfig {
  EncoderProvider provider = EncoderProvider::Deterministic;
  std::size_t dim = 128;
  std::string endpoint;  // remote only; falls back to ENCODER_ENDPOINT
  std::string api_key;   // remote only; falls back to ENCODER_API_KEY
  bool normalize = true;
};

namespace detail {

inline constexpr std::uint64_t kTokenSalt = 0x5f3a9c1d2b7e8461ULL;

/// Pseudo-random unit vector derived from a token's hash.
inline std::vector<double> token_vector(const std::string& token,
                                        std::size_t dim) {
  Rng rng(fnv1a64(token) ^ kTokenSalt);
  std::vector<double> v(dim);
  double norm_sq = 0.0;
  for (auto& x : v) {
    x = rng.next_gaussian();
    norm_sq += x * x;
  }
  if (norm_sq <= 0.0) {
    v[0] = 1.0;
    norm_sq = 1.0;
  }
  const double inv = 1.0 / std::sqrt(norm_sq);
  for (auto& x : v) {
    x *= inv;
  }
  return v;
}

/// Bag-of-tokens encoder: each token maps to a hash-seeded unit vector,
/// vectors are averaged over the token sequence (so the output is invariant
/// under token permutation) and optionally L2-normalized.
inline EmbeddingVector deterministic_encode(const std::string& text,
                                            std::size_t dim, bool normalize) {
  auto tokens = tokenize_words(text);
  if (tokens.empty()) {
    // All-punctuation input: hash the trimmed text as a single token.
    tokens.push_back(to_lower(trim(text)));
  }
  std::vector<double> acc(dim, 0.0);
  for (const auto& token : tokens) {
    const auto v = token_vector(token, dim);
    for (std::size_t i = 0; i < dim; ++i) {
      acc[i] += v[i];
    }
  }
  const double scale = 1.0 / static_cast<double>(tokens.size());
  for (auto& x : acc) {
    x *= scale;
  }
  if (normalize) {
    double norm_sq = 0.0;
    for (const auto x : acc) {
      norm_sq += x * x;
    }
    if (norm_sq <= 1e-24) {
      acc = token_vector("\x01" + text, dim);
    } else {
      const double inv = 1.0 / std::sqrt(norm_sq);
      for (auto& x : acc) {
        x *= inv;
      }
    }
  }
  return EmbeddingVector{std::move(acc)};
}

inline EmbeddingVector remote_encode(const std::string& text,
                                     const EncoderConfig& config) {
  const std::string endpoint = config.endpoint.empty()
                                   ? env_or("ENCODER_ENDPOINT", "")
                                   : config.endpoint;
  if (endpoint.empty()) {
    throw RemoteError(
        "remote encoder requires an endpoint (config or ENCODER_ENDPOINT)");
  }
  const std::string api_key =
      config.api_key.empty() ? env_or("ENCODER_API_KEY", "") : config.api_key;
  const Json response = post_json(endpoint, Json{{"text", text}}, api_key);
  if (!response.contains("vector") || !response["vector"].is_array()) {
    throw RemoteError("encoder response missing 'vector' array");
  }
  std::vector<double> values;
  values.reserve(response["vector"].size());
  for (const auto& entry : response["vector"]) {
    values.push_back(entry.get<double>());
  }
  if (values.size() != config.dim) {
    throw RemoteError("encoder dim mismatch: expected " +
                      std::to_string(config.dim) + ", got " +
                      std::to_string(values.size()));
  }
  EmbeddingVector vec{std::move(values)};
  if (config.normalize) {
    double norm_sq = 0.0;
    for (const auto x : vec.values) {
      norm_sq += x * x;
    }
    if (norm_sq > 0.0) {
      const double inv = 1.0 / std::sqrt(norm_sq);
      for (auto& x : vec.values) {
        x *= inv;
      }
    }
  }
  return vec;
}

}  // namespace detail

/// Encodes text to a fixed-length vector through the configured provider.
inline EmbeddingVector encode_text(const std::string& text,
                                   const EncoderConfig& config) {
  if (trim(text).empty()) {
    throw ValidationError("encode_text: empty text");
  }
  if (config.dim == 0) {
    throw ValidationError("encode_text: dim must be positive");
  }
  EmbeddingVector vec =
      config.provider == EncoderProvider::Remote
          ? detail::remote_encode(text, config)
          : detail::deterministic_encode(text, config.dim, config.normalize);
  for (const auto x : vec.values) {
    if (!std::isfinite(x)) {
      throw ValidationError("encode_text: non-finite embedding entry");
    }
  }
  return vec;
}

inline std::vector<EmbeddingVector> encode_batch(
    const std::vector<std::string>& texts, const EncoderConfig& config) {
  std::vector<EmbeddingVector> out;
  out.reserve(texts.size());
  for (const auto& text : texts) {
    out.push_back(encode_text(text, config));
  }
  return out;
}

inline double cosine_similarity(const EmbeddingVector& a,
                                const EmbeddingVector& b) {
  if (a.dim() != b.dim()) {
    throw ValidationError("cosine_similarity: dim mismatch (" +
                          std::to_string(a.dim()) + " vs " +
                          std::to_string(b.dim()) + ")");
  }
  double dot = 0.0;
  double norm_a = 0.0;
  double norm_b = 0.0;
  for (std::size_t i = 0; i < a.dim(); ++i) {
    dot += a.values[i] * b.values[i];
    norm_a += a.values[i] * a.values[i];
    norm_b += b.values[i] * b.values[i];
  }
  if (norm_a == 0.0 || norm_b == 0.0) {
    throw ValidationError("cosine_similarity: zero vector");
  }
  const double cosine = dot / (std::sqrt(norm_a) * std::sqrt(norm_b));
  return std::clamp(cosine, -1.0, 1.0);
}

}  // namespace lsim
