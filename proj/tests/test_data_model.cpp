#include <catch2/catch_amalgamated.hpp>

#include <fstream>
#include <set>

#include "lsim/data_model.hpp"
#include "support/test_support.hpp"

using namespace lsim;
using test::TempDir;

namespace {

void write_lines(const std::filesystem::path& path,
                 const std::vector<std::string>& lines) {
  std::ofstream out(path);
  for (const auto& line : lines) {
    out << line << '\n';
  }
}

}  // namespace

TEST_CASE("load_dataset reads valid records") {
  TempDir dir("load");
  const auto path = dir.path() / "data.jsonl";
  write_lines(path,
              {R"({"id":"a","question":"Was the search legal?","answer":"Probably not.","location":"CA"})",
               R"({"id":"b","question":"Can bail be reduced?","answer":"File a motion."})"});
  const auto pairs = load_dataset(path);
  REQUIRE(pairs.size() == 2);
  CHECK(pairs[0].id == "a");
  CHECK(pairs[0].location.has_value());
  CHECK(pairs[1].location == std::nullopt);
  CHECK(pairs[1].answer_text == "File a motion.");
}

TEST_CASE("load_dataset on an empty file yields an empty list") {
  TempDir dir("empty");
  const auto path = dir.path() / "data.jsonl";
  write_lines(path, {});
  CHECK(load_dataset(path).empty());
}

TEST_CASE("load_dataset rejects a record missing its answer, naming line 1") {
  TempDir dir("missing");
  const auto path = dir.path() / "data.jsonl";
  write_lines(path, {R"({"id":"a","question":"Is this legal?"})"});
  try {
    load_dataset(path);
    FAIL("expected ValidationError");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("line 1") != std::string::npos);
    CHECK(std::string(e.what()).find("answer") != std::string::npos);
  }
}

TEST_CASE("load_dataset rejects duplicate ids with the line number") {
  TempDir dir("dup");
  const auto path = dir.path() / "data.jsonl";
  write_lines(path, {R"({"id":"a","question":"One?","answer":"Yes."})",
                     R"({"id":"a","question":"Two?","answer":"No."})"});
  try {
    load_dataset(path);
    FAIL("expected ValidationError");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
    CHECK(std::string(e.what()).find("duplicate id") != std::string::npos);
  }
}

TEST_CASE("load_dataset reports malformed json with the line number") {
  TempDir dir("bad");
  const auto path = dir.path() / "data.jsonl";
  write_lines(path, {R"({"id":"a","question":"One?","answer":"Yes."})",
                     "{not json"});
  try {
    load_dataset(path);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }
}

TEST_CASE("load_dataset errors on a missing file") {
  CHECK_THROWS_AS(load_dataset("/nonexistent/nowhere.jsonl"), IoError);
}

TEST_CASE("load_dataset round trip through save_dataset") {
  TempDir dir("round");
  const auto pairs = test::synthetic_pairs(40, 5);
  const auto path = dir.path() / "data.jsonl";
  save_dataset(path, pairs);
  const auto loaded = load_dataset(path);
  REQUIRE(loaded.size() == pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    CHECK(loaded[i].id == pairs[i].id);
    CHECK(loaded[i].question_text == pairs[i].question_text);
    CHECK(loaded[i].answer_text == pairs[i].answer_text);
    CHECK(loaded[i].location == pairs[i].location);
  }
}

TEST_CASE("load_dataset handles the full-corpus scale") {
  TempDir dir("large");
  const auto path = dir.path() / "data.jsonl";
  std::ofstream out(path);
  for (int i = 0; i < 16190; ++i) {
    out << R"({"id":"r)" << i << R"(","question":"Case question )" << i
        << R"(?","answer":"Answer )" << i << R"(."})" << '\n';
  }
  out.close();
  CHECK(load_dataset(path).size() == 16190);
}

TEST_CASE("split_dataset reproduces the reference split sizes") {
  std::vector<QAPair> pairs;
  pairs.reserve(16190);
  for (int i = 0; i < 16190; ++i) {
    pairs.push_back(QAPair{"r" + std::to_string(i), "q", "a", std::nullopt});
  }
  const DataSplits splits = split_dataset(pairs, 1);
  CHECK(splits.database.size() == 12952);
  CHECK(splits.train.size() == 2590);
  CHECK(splits.test.size() == 648);
}

TEST_CASE("split_dataset applies the floor rounding rule to 10 records") {
  const auto pairs = test::synthetic_pairs(10, 2);
  const DataSplits splits = split_dataset(pairs, 3);
  // floor(0.8 * 10) = 8; remainder 2 splits as floor(0.8 * 2) = 1 train,
  // 1 test.
  CHECK(splits.database.size() == 8);
  CHECK(splits.train.size() == 1);
  CHECK(splits.test.size() == 1);
}

TEST_CASE("split_dataset partitions every id exactly once") {
  const auto pairs = test::synthetic_pairs(137, 9);
  const DataSplits splits = split_dataset(pairs, 17);
  std::set<std::string> seen;
  for (const auto* split : {&splits.database, &splits.train, &splits.test}) {
    for (const auto& pair : *split) {
      CHECK(seen.insert(pair.id).second);
    }
  }
  CHECK(seen.size() == pairs.size());
  for (const auto& pair : pairs) {
    CHECK(seen.count(pair.id) == 1);
  }
}

TEST_CASE("split_dataset is deterministic per seed") {
  const auto pairs = test::synthetic_pairs(50, 4);
  const DataSplits a = split_dataset(pairs, 99);
  const DataSplits b = split_dataset(pairs, 99);
  REQUIRE(a.database.size() == b.database.size());
  for (std::size_t i = 0; i < a.database.size(); ++i) {
    CHECK(a.database[i].id == b.database[i].id);
  }
  for (std::size_t i = 0; i < a.test.size(); ++i) {
    CHECK(a.test[i].id == b.test[i].id);
  }

  const DataSplits c = split_dataset(pairs, 100);
  bool any_difference = c.database.size() != a.database.size();
  for (std::size_t i = 0; !any_difference && i < a.database.size(); ++i) {
    any_difference = a.database[i].id != c.database[i].id;
  }
  CHECK(any_difference);  // a different seed should reshuffle
}

TEST_CASE("split_dataset rejects inputs that cannot form three splits") {
  CHECK_THROWS_AS(split_dataset({}, 1), ValidationError);
  CHECK_THROWS_AS(split_dataset(test::synthetic_pairs(4, 1), 1),
                  ValidationError);
  // 5 records leave an empty train split under the floor rule.
  CHECK_THROWS_AS(split_dataset(test::synthetic_pairs(5, 1), 1),
                  ValidationError);
  CHECK_NOTHROW(split_dataset(test::synthetic_pairs(6, 1), 1));
}
