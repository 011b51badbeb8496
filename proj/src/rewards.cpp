#include "neurodx/rewards.hpp"

#include <cmath>
#include <istream>
#include <map>
#include <ostream>

#include <nlohmann/json.hpp>

#include "neurodx/error.hpp"

namespace neurodx {

using nlohmann::json;

RewardBreakdown format_reward(const ParsedCompletion& p) {
  RewardBreakdown b;
  b.components.think_then_json = p.flags.has_think && p.think_then_json;
  b.components.single_wellformed_json = p.flags.single_json_block;
  b.components.top_extractable = p.flags.top_extractable;
  b.components.full_class_coverage = p.flags.full_coverage;
  b.format_reward = kComponentWeight * b.components.count();
  if (p.flags.ambiguous_top) {
    b.ambiguity_capped = true;
    b.format_reward = std::min(b.format_reward, kAmbiguityCap);
  }
  b.total = b.format_reward;
  return b;
}

RewardBreakdown format_reward(std::string_view text) { return format_reward(parse_completion(text)); }

double accuracy_reward(const ParsedCompletion& p, DiagnosisClass gold) {
  auto top = top_diagnosis(p);
  return top && !top->ambiguous && top->cls == gold ? 1.0 : 0.0;
}

double accuracy_reward(std::string_view text, DiagnosisClass gold) {
  return accuracy_reward(parse_completion(text), gold);
}

RewardBreakdown score_completion(std::string_view text, DiagnosisClass gold) {
  const ParsedCompletion p = parse_completion(text);
  RewardBreakdown b = format_reward(p);
  b.accuracy_reward = accuracy_reward(p, gold);
  b.total = b.format_reward + b.accuracy_reward;
  return b;
}

double total_reward(std::string_view text, DiagnosisClass gold) { return score_completion(text, gold).total; }

std::vector<double> group_advantages(std::span<const double> rewards) {
  if (rewards.empty()) throw Error(ErrorCode::EmptyGroup, "advantages need at least one reward");
  const double n = static_cast<double>(rewards.size());
  double mean = 0.0;
  for (double r : rewards) mean += r;
  mean /= n;
  double var = 0.0;
  for (double r : rewards) var += (r - mean) * (r - mean);
  const double sd = std::sqrt(var / n);
  std::vector<double> out(rewards.size(), 0.0);
  if (!(sd >= kMinAdvantageStd)) return out;
  for (std::size_t i = 0; i < rewards.size(); ++i) out[i] = (rewards[i] - mean) / sd;
  return out;
}

CompletionGroup CompletionGroup::score(std::string query_id, std::vector<std::string> outputs, DiagnosisClass gold) {
  if (outputs.empty()) throw Error(ErrorCode::EmptyGroup, "group has no completions", query_id);
  CompletionGroup g;
  g.query_id = std::move(query_id);
  g.gold = gold;
  for (const auto& o : outputs) {
    g.breakdowns.push_back(score_completion(o, gold));
    g.rewards.push_back(g.breakdowns.back().total);
  }
  g.outputs = std::move(outputs);
  g.advantages = group_advantages(g.rewards);
  return g;
}

namespace {

std::optional<DiagnosisClass> parse_gold(const json& v) {
  if (!v.is_string()) return std::nullopt;
  const auto s = v.get<std::string>();
  if (auto c = parse_class_id(s)) return c;
  return map_label(s);
}

void add_breakdown(json& o, const RewardBreakdown& b) {
  o["format_reward"] = b.format_reward;
  o["components"] = {{"think_then_json", b.components.think_then_json},
                     {"single_wellformed_json", b.components.single_wellformed_json},
                     {"top_extractable", b.components.top_extractable},
                     {"full_class_coverage", b.components.full_class_coverage}};
  o["ambiguity_capped"] = b.ambiguity_capped;
  o["accuracy_reward"] = b.accuracy_reward;
  o["total"] = b.total;
}

}  // namespace

std::size_t score_jsonl(std::istream& in, std::ostream& out, bool with_advantages) {
  std::vector<json> records;
  std::vector<double> totals;
  std::map<std::string, std::vector<std::size_t>> groups;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = "line " + std::to_string(lineno);
    json rec = json::parse(line, nullptr, false);
    if (rec.is_discarded() || !rec.is_object()) throw Error(ErrorCode::MalformedFile, "not a JSON object", where);
    auto text = rec.find("text");
    if (text == rec.end() || !text->is_string()) throw Error(ErrorCode::MissingField, "text absent", where + ": text");
    auto gold_it = rec.find("gold");
    if (gold_it == rec.end()) throw Error(ErrorCode::MissingField, "gold absent", where + ": gold");
    auto gold = parse_gold(*gold_it);
    if (!gold) throw Error(ErrorCode::MalformedFile, "gold is not a known class", where + ": gold");
    std::string qid;
    if (auto q = rec.find("query_id"); q != rec.end()) qid = q->is_string() ? q->get<std::string>() : q->dump();
    auto b = score_completion(text->get<std::string>(), *gold);
    add_breakdown(rec, b);
    groups[qid].push_back(records.size());
    totals.push_back(b.total);
    records.push_back(std::move(rec));
  }
  if (with_advantages) {
    for (const auto& [qid, idx] : groups) {
      std::vector<double> r;
      for (auto i : idx) r.push_back(totals[i]);
      auto a = group_advantages(r);
      for (std::size_t k = 0; k < idx.size(); ++k) records[idx[k]]["advantage"] = a[k];
    }
  }
  for (const auto& r : records) out << r.dump() << '\n';
  return records.size();
}

}  // namespace neurodx
