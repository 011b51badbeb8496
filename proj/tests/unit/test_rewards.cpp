#include <doctest.h>

#include <random>
#include <sstream>

#include <nlohmann/json.hpp>

#include "completions.hpp"
#include "neurodx/error.hpp"
#include "neurodx/rewards.hpp"
#include "oracles.hpp"

using namespace neurodx;

TEST_CASE("canonical completion scores full format and accuracy") {
  const std::string text = render_completion("reasoning", kAllClasses);
  const auto b = score_completion(text, DiagnosisClass::CN);
  CHECK(b.format_reward == 1.0);
  CHECK_FALSE(b.ambiguity_capped);
  CHECK(b.accuracy_reward == 1.0);
  CHECK(b.total == 2.0);
  CHECK(total_reward(text, DiagnosisClass::AD) == 1.0);
  CHECK(total_reward("", DiagnosisClass::AD) == 0.0);
  CHECK(accuracy_reward("not a completion", DiagnosisClass::CN) == 0.0);
}

TEST_CASE("missing think block with a valid five-class list scores 0.75") {
  const std::string text = "```json\n" + fixture::json_list(fixture::ranked({1, 0, 2, 3, 4})) + "\n```";
  const auto b = format_reward(text);
  CHECK_FALSE(b.components.think_then_json);
  CHECK(b.format_reward == 0.75);
}

TEST_CASE("every component combination maps to a quarter per component") {
  for (const auto& m : fixture::all_masks()) {
    CAPTURE(m.think_then_json);
    CAPTURE(m.single_json);
    CAPTURE(m.top);
    CAPTURE(m.coverage);
    const auto b = format_reward(fixture::build(m));
    CHECK(b.components.think_then_json == m.think_then_json);
    CHECK(b.components.single_wellformed_json == m.single_json);
    CHECK(b.components.top_extractable == m.top);
    CHECK(b.components.full_class_coverage == m.coverage);
    CHECK(b.format_reward == 0.25 * m.count());
    CHECK_FALSE(b.ambiguity_capped);
  }
}

TEST_CASE("shared top rank caps the reward at 0.25 and voids accuracy") {
  const std::string text = fixture::ambiguous(1, 0);
  const auto b = score_completion(text, DiagnosisClass::AD);
  CHECK(b.components.count() == 4);
  CHECK(b.ambiguity_capped);
  CHECK(b.format_reward == 0.25);
  CHECK(b.accuracy_reward == 0.0);
  CHECK(b.total == 0.25);
}

TEST_CASE("think content does not affect the reward") {
  std::mt19937_64 rng(3);
  const auto masks = fixture::all_masks();
  for (int i = 0; i < 200; ++i) {
    const auto& m = masks[static_cast<std::size_t>(i) % masks.size()];
    const auto a = score_completion(fixture::build(m, 2), DiagnosisClass::bvFTD);
    const auto b = score_completion(fixture::build(m, 2, fixture::random_think(rng)), DiagnosisClass::bvFTD);
    CHECK(a.total == b.total);
    CHECK(a.components == b.components);
  }
}

TEST_CASE("advantages are standardized with the population deviation") {
  const std::vector<double> r{2.0, 1.0, 0.25, 0.0};
  const auto a = group_advantages(r);
  const auto o = oracle::advantages(r);
  for (std::size_t i = 0; i < r.size(); ++i) CHECK(a[i] == doctest::Approx(o[i]).epsilon(1e-12));
  CHECK(group_advantages(std::vector<double>{1.0, 1.0, 1.0}) == std::vector<double>{0.0, 0.0, 0.0});
  CHECK(group_advantages(std::vector<double>{5.0}) == std::vector<double>{0.0});
  CHECK_THROWS_AS(group_advantages(std::vector<double>{}), Error);
}

TEST_CASE("completion group holds one reward and advantage per output") {
  const auto g = CompletionGroup::score(
      "q1", {render_completion("a", kAllClasses), fixture::ambiguous(), "", fixture::build({true, true, true, false})},
      DiagnosisClass::CN);
  CHECK(g.rewards.size() == 4);
  CHECK(g.advantages.size() == 4);
  CHECK(g.rewards == std::vector<double>{2.0, 0.25, 0.0, 0.75});
  CHECK_THROWS_AS(CompletionGroup::score("q", {}, DiagnosisClass::CN), Error);
}

TEST_CASE("jsonl scoring adds breakdown fields and grouped advantages") {
  using nlohmann::json;
  std::ostringstream in_text;
  in_text << json{{"query_id", "a"}, {"text", render_completion("x", kAllClasses)}, {"gold", "CN"}}.dump() << "\n";
  in_text << json{{"query_id", "a"}, {"text", ""}, {"gold", "CN"}}.dump() << "\n\n";
  in_text << json{{"query_id", "b"}, {"text", ""}, {"gold", "Alzheimer's disease"}}.dump() << "\n";
  std::istringstream in(in_text.str());
  std::ostringstream out;
  CHECK(score_jsonl(in, out, true) == 3);
  std::istringstream lines(out.str());
  std::string line;
  std::vector<json> docs;
  while (std::getline(lines, line)) docs.push_back(json::parse(line));
  REQUIRE(docs.size() == 3);
  CHECK(docs[0]["total"] == 2.0);
  CHECK(docs[0]["advantage"] == doctest::Approx(1.0));
  CHECK(docs[1]["advantage"] == doctest::Approx(-1.0));
  CHECK(docs[2]["advantage"] == 0.0);
  CHECK(docs[0]["components"]["think_then_json"] == true);

  std::istringstream bad("{\"query_id\": \"a\", \"text\": \"\", \"gold\": \"Lewy body dementia\"}\n");
  std::ostringstream sink;
  CHECK_THROWS_AS(score_jsonl(bad, sink, false), Error);
}
