#pragma once

// Hand-built completion texts with known format components.

#include <random>
#include <string>
#include <vector>

namespace fixture {

inline const std::vector<std::string>& class_labels() {
  static const std::vector<std::string> v{"Cognitively normal", "Alzheimer's disease",
                                          "Behavioral variant frontotemporal dementia",
                                          "Non-fluent variant primary progressive aphasia",
                                          "Semantic variant primary progressive aphasia"};
  return v;
}

struct Entry {
  int rank;
  std::string label;  // empty: an object without a diagnosis key
};

inline std::string json_list(const std::vector<Entry>& entries) {
  std::string s = "[\n";
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto& e = entries[i];
    s += "  {\"rank\": " + std::to_string(e.rank);
    if (e.label.empty()) s += ", \"note\": \"pending review\"";
    else s += ", \"diagnosis\": \"" + e.label + "\"";
    s += i + 1 < entries.size() ? "},\n" : "}\n";
  }
  return s + "]";
}

// Classes by index into class_labels(), ranked in the given order.
inline std::vector<Entry> ranked(const std::vector<int>& order, int first_rank = 1) {
  std::vector<Entry> out;
  for (std::size_t i = 0; i < order.size(); ++i)
    out.push_back({first_rank + static_cast<int>(i), class_labels()[static_cast<std::size_t>(order[i])]});
  return out;
}

struct Mask {
  bool think_then_json;
  bool single_json;
  bool top;
  bool coverage;

  int count() const { return int(think_then_json) + int(single_json) + int(top) + int(coverage); }
};

// A completion whose four format components equal `m`. `top_class` is the
// rank-1 class whenever m.top holds.
inline std::string build(const Mask& m, int top_class = 1, const std::string& think = "Weighing the findings.") {
  std::vector<int> order{top_class};
  for (int c = 0; c < 5; ++c)
    if (c != top_class) order.push_back(c);

  std::string body;
  bool parseable = true;
  if (m.top && m.coverage) {
    body = json_list(ranked(order));
  } else if (m.top) {
    order.pop_back();
    body = json_list(ranked(order));
  } else if (m.coverage) {
    auto entries = ranked(order, 2);
    entries.insert(entries.begin(), Entry{1, ""});
    body = json_list(entries);
  } else if (m.single_json) {
    body = "{\"note\": \"no ranking given\"}";
  } else {
    body = "[{\"rank\": 1, \"diagnosis\": ";
    parseable = false;
  }

  std::string text = "<think>\n" + think + "\n</think>\n";
  if (!m.think_then_json) text += "Final answer below.\n";
  text += "```json\n" + body + "\n```\n";
  if (!m.single_json && parseable) text += "Restated:\n```json\n" + body + "\n```\n";
  return text;
}

inline std::vector<Mask> all_masks() {
  std::vector<Mask> out;
  for (int bits = 0; bits < 16; ++bits)
    out.push_back({bool(bits & 1), bool(bits & 2), bool(bits & 4), bool(bits & 8)});
  return out;
}

// Two classes share rank 1; all four components hold.
inline std::string ambiguous(int a = 1, int b = 0) {
  std::vector<Entry> e{{1, class_labels()[a]}, {1, class_labels()[b]}};
  int r = 2;
  for (int c = 0; c < 5; ++c)
    if (c != a && c != b) e.push_back({r++, class_labels()[c]});
  return "<think>\nTwo candidates fit equally.\n</think>\n```json\n" + json_list(e) + "\n```\n";
}

// Random think-block content that never closes the block.
inline std::string random_think(std::mt19937_64& rng) {
  static const std::string alphabet =
      "abcdefghijklmnopqrstuvwxyz ABCDEFGHIJ0123456789\n\t.,;:!?'\"{}[]()<>/`*#-_=+|\\";
  static const std::vector<std::string> chunks{"```json\n[1, 2]\n```", "<think>", "```", "{\"rank\": 1}",
                                               "Alzheimer's disease", "rank 1: CN", "<think/>", "json"};
  std::uniform_int_distribution<int> len(0, 400);
  std::uniform_int_distribution<std::size_t> pick(0, alphabet.size() - 1);
  std::uniform_int_distribution<std::size_t> chunk(0, chunks.size() - 1);
  std::bernoulli_distribution use_chunk(0.05);
  std::string s;
  const int n = len(rng);
  for (int i = 0; i < n; ++i) s += use_chunk(rng) ? chunks[chunk(rng)] : std::string(1, alphabet[pick(rng)]);
  std::size_t pos;
  while ((pos = s.find("</think>")) != std::string::npos) s.erase(pos, 2);
  return s;
}

}  // namespace fixture
