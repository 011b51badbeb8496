#pragma once

#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "neurodx/diagnosis.hpp"

namespace neurodx {

struct FormatComponents {
  bool think_then_json = false;
  bool single_wellformed_json = false;
  bool top_extractable = false;
  bool full_class_coverage = false;

  int count() const {
    return int(think_then_json) + int(single_wellformed_json) + int(top_extractable) + int(full_class_coverage);
  }
  bool operator==(const FormatComponents&) const = default;
};

struct RewardBreakdown {
  FormatComponents components;
  double format_reward = 0.0;
  bool ambiguity_capped = false;
  double accuracy_reward = 0.0;
  double total = 0.0;
};

inline constexpr double kComponentWeight = 0.25;
inline constexpr double kAmbiguityCap = 0.25;

// Format part only (accuracy_reward = 0, total = format_reward).
RewardBreakdown format_reward(std::string_view text);
RewardBreakdown format_reward(const ParsedCompletion& parsed);

// 1.0 iff the unambiguous top diagnosis is gold.
double accuracy_reward(std::string_view text, DiagnosisClass gold);
double accuracy_reward(const ParsedCompletion& parsed, DiagnosisClass gold);

// Format and accuracy together; total = format + accuracy in [0, 2].
RewardBreakdown score_completion(std::string_view text, DiagnosisClass gold);
double total_reward(std::string_view text, DiagnosisClass gold);

inline constexpr double kMinAdvantageStd = 1e-8;

// (r_i - mean) / population std; all zeros when std < 1e-8.
// Throws EmptyGroup on an empty list.
std::vector<double> group_advantages(std::span<const double> rewards);

// One GRPO group: G completions for a single query.
struct CompletionGroup {
  std::string query_id;
  std::vector<std::string> outputs;
  DiagnosisClass gold = DiagnosisClass::CN;
  std::vector<RewardBreakdown> breakdowns;
  std::vector<double> rewards;
  std::vector<double> advantages;

  static CompletionGroup score(std::string query_id, std::vector<std::string> outputs, DiagnosisClass gold);
};

// JSONL batch scoring: each input line {query_id, text, gold}; each output
// line mirrors it with format_reward, components, ambiguity_capped,
// accuracy_reward and total added, plus advantage (grouped by query_id) when
// requested. Returns the number of records. Throws MalformedFile naming the line.
std::size_t score_jsonl(std::istream& in, std::ostream& out, bool with_advantages);

}  // namespace neurodx
