#include <catch2/catch_amalgamated.hpp>

#include <thread>

#include <httplib.h>

#include "lsim/llm_client.hpp"
#include "support/test_support.hpp"

using namespace lsim;

TEST_CASE("parse_relevance_score takes the first in-range integer") {
  CHECK(parse_relevance_score("5") == 5);
  CHECK(parse_relevance_score("Score: 3 because the events match") == 3);
  CHECK(parse_relevance_score("I'd rate this 0 out of 5") == 0);
  CHECK(parse_relevance_score("seven") == std::nullopt);
  CHECK(parse_relevance_score("") == std::nullopt);
  // Multi-digit runs are whole numbers, not digit streams.
  CHECK(parse_relevance_score("case 2023 scored 4") == 4);
  CHECK(parse_relevance_score("77") == std::nullopt);
}

TEST_CASE("complete_with_retries recovers from transient failures") {
  MockLlmClient mock;
  test::FlakyLlmClient flaky(mock, 2);
  std::vector<std::string> warnings;
  const std::string reply = complete_with_retries(
      flaky, "hello", GenerationConfig{}, test::fast_retry(3), &warnings);
  CHECK(!reply.empty());
  CHECK(flaky.calls() == 3);
  CHECK(warnings.size() == 2);
}

TEST_CASE("complete_with_retries surfaces the last failure cause") {
  MockLlmClient mock;
  test::FlakyLlmClient flaky(mock, 10);
  try {
    complete_with_retries(flaky, "hello", GenerationConfig{},
                          test::fast_retry(3));
    FAIL("expected LlmError");
  } catch (const LlmError& e) {
    const std::string what = e.what();
    CHECK(what.find("3 attempts") != std::string::npos);
    CHECK(what.find("injected llm failure") != std::string::npos);
  }
}

TEST_CASE("generation config is validated before any attempt") {
  MockLlmClient mock;
  GenerationConfig bad;
  bad.top_p = 1.5;
  CHECK_THROWS_AS(complete_with_retries(mock, "x", bad), ValidationError);
  bad = GenerationConfig{};
  bad.max_tokens = 0;
  CHECK_THROWS_AS(complete_with_retries(mock, "x", bad), ValidationError);
}

TEST_CASE("mock llm is a pure function of prompt and config") {
  MockLlmClient mock;
  const GenerationConfig config;
  CHECK(mock.complete("any prompt", config) == mock.complete("any prompt", config));

  GenerationConfig other = config;
  other.seed = 42;
  CHECK(mock.complete("any prompt", config) != mock.complete("any prompt", other));

  GenerationConfig model = config;
  model.model_id = "other-model";
  CHECK(mock.complete("any prompt", config) != mock.complete("any prompt", model));
}

TEST_CASE("mock llm answers graph extraction prompts with parseable JSON") {
  MockLlmClient mock;
  const std::string prompt =
      "Extract the key facts and legal rules from the following legal "
      "question and answer.\n\nQuestion: My landlord entered without notice "
      "during the eviction dispute.\n\nAnswer: The entry notice statute "
      "requires advance warning.\n\nReply with JSON.";
  const Json reply = Json::parse(mock.complete(prompt, GenerationConfig{}));
  REQUIRE(reply.contains("nodes"));
  REQUIRE(reply["nodes"].is_array());
  CHECK(!reply["nodes"].empty());
  for (const auto& node : reply["nodes"]) {
    const std::string kind = node.at("kind").get<std::string>();
    CHECK((kind == "fact" || kind == "rule"));
  }
  CHECK(reply.contains("edges"));
}

TEST_CASE("mock llm selects overlapping labels for chain prompts") {
  MockLlmClient mock;
  const std::string prompt =
      "Please select 1 to 4 nodes from the provided graph that are most "
      "relevant to the legal question/answer. Ensure that the selected nodes "
      "are interconnected.\n\nGraph nodes:\n- [fact] illegal search\n- [rule] "
      "warrant requirement\n- [fact] parking ticket\n\nGraph edges:\n- "
      "illegal search <-> warrant requirement\n\nText: The illegal search "
      "happened without a warrant.\n\nReply with a JSON array of node "
      "labels.";
  const Json reply = Json::parse(mock.complete(prompt, GenerationConfig{}));
  REQUIRE(reply.is_array());
  REQUIRE(!reply.empty());
  CHECK(reply[0].get<std::string>() == "illegal search");
}

TEST_CASE("mock llm scores similarity prompts in range") {
  MockLlmClient mock;
  const std::string prompt =
      "Please score the similarity of Question2 to Question1, focusing "
      "specifically on the events described in each legal question.\n\n"
      "Question1: My car was searched at a checkpoint.\n\n"
      "Question2: My car was searched at a checkpoint.\n\n"
      "Reply with a single integer between 0 and 5.";
  const auto score = parse_relevance_score(mock.complete(prompt, GenerationConfig{}));
  REQUIRE(score.has_value());
  CHECK(*score == 5);  // identical questions
}

TEST_CASE("remote llm client round trip and error handling") {
  httplib::Server server;
  server.Post("/complete", [](const httplib::Request& req, httplib::Response& res) {
    const Json body = Json::parse(req.body);
    REQUIRE(body.contains("prompt"));
    REQUIRE(body.contains("temperature"));
    REQUIRE(body.contains("top_p"));
    REQUIRE(body.contains("max_tokens"));
    res.set_content(
        Json{{"text", "echo: " + body["prompt"].get<std::string>()}}.dump(),
        "application/json");
  });
  const int port = server.bind_to_any_port("127.0.0.1");
  REQUIRE(port > 0);
  std::thread listener([&server] { server.listen_after_bind(); });
  server.wait_until_ready();

  RemoteLlmClient client("http://127.0.0.1:" + std::to_string(port) + "/complete");
  CHECK(client.complete("hi", GenerationConfig{}) == "echo: hi");

  server.stop();
  listener.join();

  RemoteLlmClient dead("http://127.0.0.1:1/complete");
  CHECK_THROWS_AS(dead.complete("hi", GenerationConfig{}), RemoteError);
}
