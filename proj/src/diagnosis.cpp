#include "neurodx/diagnosis.hpp"

#include <algorithm>
#include <cctype>
#include <regex>
#include <sstream>

#include <nlohmann/json.hpp>

#include "neurodx/error.hpp"
#include "neurodx/reporting.hpp"
#include "neurodx/resources.hpp"

namespace neurodx {

using nlohmann::json;

std::string_view class_id(DiagnosisClass c) {
  switch (c) {
    case DiagnosisClass::CN: return "CN";
    case DiagnosisClass::AD: return "AD";
    case DiagnosisClass::bvFTD: return "bvFTD";
    case DiagnosisClass::nfvPPA: return "nfvPPA";
    case DiagnosisClass::svPPA: return "svPPA";
  }
  return "CN";
}

std::string_view display_name(DiagnosisClass c) {
  switch (c) {
    case DiagnosisClass::CN: return "Cognitively normal";
    case DiagnosisClass::AD: return "Alzheimer's disease";
    case DiagnosisClass::bvFTD: return "Behavioral variant frontotemporal dementia";
    case DiagnosisClass::nfvPPA: return "Non-fluent variant primary progressive aphasia";
    case DiagnosisClass::svPPA: return "Semantic variant primary progressive aphasia";
  }
  return "";
}

namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }

std::string_view trim(std::string_view s) {
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

}  // namespace

std::optional<DiagnosisClass> parse_class_id(std::string_view s) {
  const std::string l = lower(trim(s));
  for (DiagnosisClass c : kAllClasses)
    if (lower(class_id(c)) == l) return c;
  return std::nullopt;
}

std::optional<DiagnosisClass> map_label(std::string_view raw) {
  static const auto flags = std::regex::ECMAScript | std::regex::icase | std::regex::optimize;
  static const std::array<std::regex, kNumClasses> patterns{
      std::regex(R"(cognitively normal|healthy|normal ag(e)?ing|\bcn\b|normal cognition|^\s*normal\s*(aging|ageing|control|cognition)?\s*$)",
                 flags),
      std::regex(R"(alzheimer|\bad\b)", flags),
      std::regex(R"(\bbv-?ftd\b|behaviou?ral)", flags),
      std::regex(R"(\bnfv-?ppa\b|non-?\s*fluent|agrammatic)", flags),
      std::regex(R"(\bsv-?ppa\b|semantic)", flags),
  };
  // libstdc++ regex recursion depth grows with input length.
  const std::string text(raw.substr(0, 256));
  std::optional<DiagnosisClass> hit;
  for (std::size_t i = 0; i < kNumClasses; ++i) {
    if (!std::regex_search(text, patterns[i])) continue;
    if (hit) return std::nullopt;
    hit = kAllClasses[i];
  }
  return hit;
}

// ---- prompt ----

PromptTemplate PromptTemplate::parse(std::string_view text) {
  PromptTemplate t;
  std::istringstream in{std::string(text)};
  std::string line;
  std::string* current = nullptr;
  bool first = true;
  std::map<std::string, std::string> sections;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (first) {
      first = false;
      if (line.rfind("#version ", 0) != 0)
        throw Error(ErrorCode::MalformedFile, "prompt resource must start with #version", "line 1");
      t.version_ = std::string(trim(std::string_view(line).substr(9)));
      continue;
    }
    if (line.rfind("#section ", 0) == 0) {
      std::string name(trim(std::string_view(line).substr(9)));
      if (sections.contains(name)) throw Error(ErrorCode::MalformedFile, "section repeated", name);
      current = &sections[name];
      continue;
    }
    if (!current) {
      if (trim(line).empty()) continue;
      throw Error(ErrorCode::MalformedFile, "text outside any #section");
    }
    *current += line;
    *current += '\n';
  }
  for (const char* name : {"system", "user"})
    if (!sections.contains(name)) throw Error(ErrorCode::MissingField, "prompt section absent", name);
  auto body = [&](const char* name) { return std::string(trim(sections[name])); };
  t.system_ = body("system");
  t.user_ = body("user");
  t.format_ = sections.contains("format") ? body("format") : "";
  if (t.user_.find("{report}") == std::string::npos)
    throw Error(ErrorCode::MalformedFile, "user section needs a {report} placeholder", "user");
  return t;
}

const PromptTemplate& PromptTemplate::builtin() {
  static const PromptTemplate t = parse(resources::get("prompt.txt"));
  return t;
}

namespace {

std::string replace_all(std::string s, std::string_view what, std::string_view with) {
  std::size_t pos = 0;
  while ((pos = s.find(what, pos)) != std::string::npos) {
    s.replace(pos, what.size(), with);
    pos += with.size();
  }
  return s;
}

std::string class_list() {
  std::string out;
  for (std::size_t i = 0; i < kNumClasses; ++i) {
    if (i) out += i + 1 == kNumClasses ? " and " : ", ";
    out += std::string(display_name(kAllClasses[i])) + " (" + std::string(class_id(kAllClasses[i])) + ")";
  }
  return out;
}

}  // namespace

PromptBundle PromptTemplate::render(std::string_view report_text) const {
  if (trim(report_text).empty()) throw Error(ErrorCode::EmptyReport, "report text is empty");
  const std::string classes = class_list();
  auto fill = [&](const std::string& s) {
    // {classes} first so that report text is never re-scanned for placeholders.
    return replace_all(replace_all(s, "{classes}", classes), "{report}", report_text);
  };
  PromptBundle b;
  b.system_text = fill(system_);
  b.expected_format_note = replace_all(format_, "{classes}", classes);
  b.user_text = fill(user_);
  if (!b.expected_format_note.empty()) b.user_text += "\n\n" + b.expected_format_note;
  return b;
}

PromptBundle build_prompt(std::string_view report_text, const PromptTemplate& tmpl) {
  return tmpl.render(report_text);
}

PromptBundle build_prompt(const RadiologyReport& report, const PromptTemplate& tmpl) {
  return tmpl.render(report.text);
}

// ---- completions ----

namespace {

struct Block {
  std::size_t fence = 0;  // position of the opening ```
  std::string_view body;
  bool closed = false;
};

bool label_is_json(std::string_view label) { return lower(trim(label)) == "json"; }

// Fenced blocks in text[from, to); json-labeled ones are returned.
void scan_fences(std::string_view text, std::size_t from, std::size_t to, std::vector<Block>& out) {
  std::size_t pos = from;
  while (pos < to) {
    auto open = text.find("```", pos);
    if (open == std::string_view::npos || open >= to) return;
    auto label_start = open + 3;
    auto eol = text.find('\n', label_start);
    if (eol == std::string_view::npos || eol > to) eol = to;
    std::string_view label = text.substr(label_start, eol - label_start);
    // An inline fence such as ```json [ ... ]``` carries its body on the label line.
    auto inline_close = label.find("```");
    std::size_t body_start;
    std::size_t close;
    if (inline_close != std::string_view::npos) {
      std::string_view head = label.substr(0, inline_close);
      std::size_t word = 0;
      while (word < head.size() && std::isalpha(static_cast<unsigned char>(head[word]))) ++word;
      if (!label_is_json(head.substr(0, word))) {
        pos = label_start + inline_close + 3;
        continue;
      }
      body_start = label_start + word;
      close = label_start + inline_close;
      out.push_back({open, text.substr(body_start, close - body_start), true});
      pos = close + 3;
      continue;
    }
    std::size_t word = 0;
    while (word < label.size() && std::isalpha(static_cast<unsigned char>(label[word]))) ++word;
    bool json_label = label_is_json(label.substr(0, word)) && trim(label.substr(word)).empty();
    body_start = std::min(eol + 1, to);
    close = text.find("```", body_start);
    bool closed = close != std::string_view::npos && close < to;
    if (!closed) close = to;
    if (json_label) out.push_back({open, text.substr(body_start, close - body_start), closed});
    pos = closed ? close + 3 : to;
  }
}

std::optional<int> as_rank(const json& v) {
  if (v.is_number_integer()) {
    auto r = v.get<long long>();
    if (r >= 1 && r <= 1000000) return static_cast<int>(r);
    return std::nullopt;
  }
  if (v.is_number_float()) {
    double d = v.get<double>();
    if (d >= 1 && d <= 1e6 && d == static_cast<double>(static_cast<long long>(d))) return static_cast<int>(d);
    return std::nullopt;
  }
  if (v.is_string()) {
    const std::string s(trim(v.get<std::string>()));
    if (s.empty() || s.size() > 6 || !std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; }))
      return std::nullopt;
    int r = std::stoi(s);
    if (r >= 1) return r;
  }
  return std::nullopt;
}

const json* find_list(const json& doc) {
  if (doc.is_array()) return &doc;
  if (!doc.is_object()) return nullptr;
  for (const char* key : {"differential", "differential_diagnosis", "ranking", "ranked", "diagnoses", "answer"}) {
    auto it = doc.find(key);
    if (it != doc.end() && it->is_array()) return &*it;
  }
  for (const auto& [k, v] : doc.items())
    if (v.is_array()) return &v;
  return nullptr;
}

std::vector<RankedEntry> entries_from(const json& list) {
  static const std::array<const char*, 6> label_keys{"diagnosis", "name", "label", "condition", "class", "disease"};
  std::vector<RankedEntry> out;
  int index = 0;
  for (const auto& item : list) {
    ++index;
    RankedEntry e;
    e.rank = index;
    if (item.is_string()) {
      e.raw_label = item.get<std::string>();
    } else if (item.is_object()) {
      json extra = json::object();
      const char* used = nullptr;
      for (const char* k : label_keys) {
        auto it = item.find(k);
        if (it != item.end() && it->is_string()) {
          e.raw_label = it->get<std::string>();
          used = k;
          break;
        }
      }
      for (const auto& [k, v] : item.items()) {
        if (k == "rank") {
          if (auto r = as_rank(v)) e.rank = *r;
          continue;
        }
        if (used && k == used) continue;
        extra[k] = v;
      }
      e.extra = extra.dump();
      e.labeled = used != nullptr;
    } else {
      e.raw_label = item.dump();
      e.labeled = false;
    }
    if (e.labeled) e.mapped = map_label(e.raw_label);
    out.push_back(std::move(e));
  }
  return out;
}

}  // namespace

std::optional<TopDiagnosis> top_diagnosis(const ParsedCompletion& p) {
  if (p.ranked.empty()) return std::nullopt;
  int best = p.ranked.front().rank;
  for (const auto& e : p.ranked) best = std::min(best, e.rank);
  const RankedEntry* first = nullptr;
  int at_best = 0;
  for (const auto& e : p.ranked) {
    if (e.rank != best) continue;
    if (!first) first = &e;
    ++at_best;
  }
  if (!first->mapped) return std::nullopt;
  return TopDiagnosis{*first->mapped, at_best > 1};
}

ParsedCompletion parse_completion(std::string_view text) {
  ParsedCompletion p;
  try {
    std::size_t think_open = text.find("<think>");
    std::size_t think_close = std::string_view::npos;
    if (think_open != std::string_view::npos) think_close = text.find("</think>", think_open + 7);
    std::vector<Block> blocks;
    if (think_close != std::string_view::npos) {
      p.flags.has_think = true;
      p.think_text = std::string(text.substr(think_open + 7, think_close - think_open - 7));
      scan_fences(text, 0, think_open, blocks);
      scan_fences(text, think_close + 8, text.size(), blocks);
    } else {
      scan_fences(text, 0, text.size(), blocks);
    }
    p.json_block_count = static_cast<int>(blocks.size());

    if (p.flags.has_think) {
      std::size_t after = think_close + 8;
      while (after < text.size() && is_space(text[after])) ++after;
      for (const auto& b : blocks)
        if (b.fence >= think_close) {
          p.think_then_json = b.fence == after;
          break;
        }
    }

    if (!blocks.empty() && blocks.front().closed) {
      json doc = json::parse(blocks.front().body, nullptr, false);
      if (!doc.is_discarded()) {
        p.json_parsed = true;
        if (const json* list = find_list(doc)) p.ranked = entries_from(*list);
      }
    }
    p.flags.single_json_block = p.json_block_count == 1 && p.json_parsed;

    auto top = top_diagnosis(p);
    p.flags.top_extractable = top.has_value();
    if (!p.ranked.empty()) {
      int best = p.ranked.front().rank;
      for (const auto& e : p.ranked) best = std::min(best, e.rank);
      p.flags.ambiguous_top =
          std::count_if(p.ranked.begin(), p.ranked.end(), [&](const RankedEntry& e) { return e.rank == best; }) > 1;
    }
    std::array<int, kNumClasses> seen{};
    bool all_mapped = true;
    for (const auto& e : p.ranked) {
      if (!e.labeled) continue;
      if (!e.mapped) all_mapped = false;
      else ++seen[index_of(*e.mapped)];
    }
    p.flags.full_coverage = all_mapped && std::all_of(seen.begin(), seen.end(), [](int n) { return n == 1; });
  } catch (...) {
  }
  return p;
}

std::string render_completion(std::string_view think, std::span<const DiagnosisClass> ranking) {
  std::string out = "<think>\n";
  out += think;
  out += "\n</think>\n```json\n[\n";
  for (std::size_t i = 0; i < ranking.size(); ++i) {
    out += "  {\"rank\": " + std::to_string(i + 1) +
           ", \"diagnosis\": " + json(std::string(display_name(ranking[i]))).dump() + "}";
    out += i + 1 < ranking.size() ? ",\n" : "\n";
  }
  out += "]\n```\n";
  return out;
}

}  // namespace neurodx
