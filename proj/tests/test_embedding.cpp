#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <thread>

#include <httplib.h>

#include "lsim/embedding.hpp"
#include "support/test_support.hpp"

using namespace lsim;

namespace {

EncoderConfig det_config(std::size_t dim = 32, bool normalize = true) {
  EncoderConfig config;
  config.provider = EncoderProvider::Deterministic;
  config.dim = dim;
  config.normalize = normalize;
  return config;
}

double l2_norm(const EmbeddingVector& v) {
  double s = 0.0;
  for (const auto x : v.values) {
    s += x * x;
  }
  return std::sqrt(s);
}

}  // namespace

TEST_CASE("deterministic encoder returns identical vectors for identical text") {
  const auto config = det_config();
  const auto a = encode_text("the officer searched the car", config);
  const auto b = encode_text("the officer searched the car", config);
  REQUIRE(a.dim() == config.dim);
  CHECK(a.values == b.values);
}

TEST_CASE("normalized encodings have unit norm") {
  const auto config = det_config(128);
  const auto v = encode_text("warrantless search of the vehicle", config);
  CHECK(std::abs(l2_norm(v) - 1.0) < 1e-9);
}

TEST_CASE("unnormalized encodings keep the token average") {
  const auto v = encode_text("arrest", det_config(16, false));
  // A single token maps to a unit vector, so the average is that vector.
  CHECK(std::abs(l2_norm(v) - 1.0) < 1e-12);
}

TEST_CASE("unrelated texts are similar but not identical") {
  const auto config = det_config(64);
  const auto a = encode_text("probation violation hearing", config);
  const auto b = encode_text("trademark licensing dispute", config);
  const double cos = cosine_similarity(a, b);
  CHECK(cos < 1.0);
  CHECK(cos > -1.0);
  CHECK(cos != 1.0);
}

TEST_CASE("bag-of-tokens encoding is invariant under token permutation") {
  const auto config = det_config(48);
  const auto a = encode_text("search warrant arrest bail", config);
  const auto b = encode_text("bail arrest warrant search", config);
  REQUIRE(a.values.size() == b.values.size());
  for (std::size_t i = 0; i < a.values.size(); ++i) {
    CHECK(a.values[i] == Catch::Approx(b.values[i]).margin(1e-15));
  }
}

TEST_CASE("encoding never produces NaN or Inf") {
  const auto config = det_config(24);
  Rng rng(7);
  for (int i = 0; i < 50; ++i) {
    std::string text;
    const std::size_t words = 1 + rng.below(12);
    for (std::size_t w = 0; w < words; ++w) {
      text += test::node_word(rng.below(40)) + " ";
    }
    const auto v = encode_text(text, config);
    for (const auto x : v.values) {
      CHECK(std::isfinite(x));
    }
  }
}

TEST_CASE("encode_text rejects empty and whitespace-only text") {
  CHECK_THROWS_AS(encode_text("", det_config()), ValidationError);
  CHECK_THROWS_AS(encode_text("   \t\n", det_config()), ValidationError);
}

TEST_CASE("punctuation-only text still encodes") {
  const auto v = encode_text("?!?", det_config(16));
  CHECK(v.dim() == 16);
}

TEST_CASE("cosine similarity identities") {
  const auto config = det_config(32);
  const auto v = encode_text("illegal search", config);
  CHECK(std::abs(cosine_similarity(v, v) - 1.0) < 1e-12);

  const EmbeddingVector e1{{1.0, 0.0}};
  const EmbeddingVector e2{{0.0, 1.0}};
  CHECK(cosine_similarity(e1, e2) == 0.0);

  const EmbeddingVector a{{1.0, 0.0}};
  const EmbeddingVector b{{1.0, 1.0}};
  CHECK(cosine_similarity(a, b) == Catch::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-12));
}

TEST_CASE("cosine similarity is symmetric") {
  const auto config = det_config(40);
  Rng rng(11);
  for (int i = 0; i < 20; ++i) {
    const auto a = encode_text(test::node_word(rng.below(30)) + " case", config);
    const auto b = encode_text(test::node_word(rng.below(30)) + " motion", config);
    CHECK(cosine_similarity(a, b) == cosine_similarity(b, a));
  }
}

TEST_CASE("cosine similarity rejects bad inputs") {
  const EmbeddingVector a{{1.0, 2.0}};
  const EmbeddingVector b{{1.0, 2.0, 3.0}};
  CHECK_THROWS_AS(cosine_similarity(a, b), ValidationError);
  const EmbeddingVector zero{{0.0, 0.0}};
  CHECK_THROWS_AS(cosine_similarity(a, zero), ValidationError);
}

TEST_CASE("encode_batch matches per-text encoding") {
  const auto config = det_config(16);
  const std::vector<std::string> texts{"first case", "second case"};
  const auto batch = encode_batch(texts, config);
  REQUIRE(batch.size() == 2);
  CHECK(batch[0].values == encode_text(texts[0], config).values);
  CHECK(batch[1].values == encode_text(texts[1], config).values);
}

TEST_CASE("remote encoder round trip against an in-process endpoint") {
  httplib::Server server;
  server.Post("/encode", [](const httplib::Request& req, httplib::Response& res) {
    const Json body = Json::parse(req.body);
    const std::string text = body.at("text").get<std::string>();
    // Dimension-8 vector derived from the text length; enough to check the
    // wire format.
    Json vec = Json::array();
    for (int i = 0; i < 8; ++i) {
      vec.push_back(static_cast<double>((text.size() + i) % 5) + 0.5);
    }
    res.set_content(Json{{"vector", vec}}.dump(), "application/json");
  });
  const int port = server.bind_to_any_port("127.0.0.1");
  REQUIRE(port > 0);
  std::thread listener([&server] { server.listen_after_bind(); });
  server.wait_until_ready();

  EncoderConfig config;
  config.provider = EncoderProvider::Remote;
  config.dim = 8;
  config.normalize = false;
  config.endpoint = "http://127.0.0.1:" + std::to_string(port) + "/encode";

  const auto v = encode_text("remote case", config);
  CHECK(v.dim() == 8);
  CHECK(v.values[0] > 0.0);

  SECTION("dim mismatch is an error") {
    EncoderConfig bad = config;
    bad.dim = 16;
    CHECK_THROWS_AS(encode_text("remote case", bad), RemoteError);
  }

  server.stop();
  listener.join();
}

TEST_CASE("remote encoder reports unreachable endpoints") {
  EncoderConfig config;
  config.provider = EncoderProvider::Remote;
  config.dim = 8;
  // Port 1 on localhost is essentially always closed.
  config.endpoint = "http://127.0.0.1:1/encode";
  CHECK_THROWS_AS(encode_text("remote case", config), RemoteError);
}

TEST_CASE("remote encoder requires an endpoint") {
  EncoderConfig config;
  config.provider = EncoderProvider::Remote;
  config.dim = 8;
  unsetenv("ENCODER_ENDPOINT");
  CHECK_THROWS_AS(encode_text("remote case", config), RemoteError);
}
