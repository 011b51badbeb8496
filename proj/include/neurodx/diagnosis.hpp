#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace neurodx {

struct RadiologyReport;

enum class DiagnosisClass { CN, AD, bvFTD, nfvPPA, svPPA };

inline constexpr std::size_t kNumClasses = 5;
// Also the fixed tie-break order.
inline constexpr std::array<DiagnosisClass, kNumClasses> kAllClasses{
    DiagnosisClass::CN, DiagnosisClass::AD, DiagnosisClass::bvFTD, DiagnosisClass::nfvPPA, DiagnosisClass::svPPA};

inline constexpr std::size_t index_of(DiagnosisClass c) { return static_cast<std::size_t>(c); }

std::string_view class_id(DiagnosisClass c);
std::string_view display_name(DiagnosisClass c);
// Exact class id, case-insensitive ("ad", "bvFTD").
std::optional<DiagnosisClass> parse_class_id(std::string_view s);

// Regex synonym mapping of a free-text diagnosis label. Labels matching the
// patterns of more than one class, or of none, map to nothing.
std::optional<DiagnosisClass> map_label(std::string_view raw);

struct PromptBundle {
  std::string system_text;
  std::string user_text;
  std::string expected_format_note;
};

// Prompt resource: "#section system|user|format" blocks with {report} and
// {classes} placeholders, first line "#version <id>".
class PromptTemplate {
 public:
  static PromptTemplate parse(std::string_view text);
  static const PromptTemplate& builtin();

  const std::string& version() const { return version_; }
  // Throws EmptyReport when the report text is empty or whitespace.
  PromptBundle render(std::string_view report_text) const;

 private:
  std::string version_;
  std::string system_;
  std::string user_;
  std::string format_;
};

PromptBundle build_prompt(std::string_view report_text, const PromptTemplate& tmpl = PromptTemplate::builtin());
PromptBundle build_prompt(const RadiologyReport& report, const PromptTemplate& tmpl = PromptTemplate::builtin());

struct RankedEntry {
  int rank = 0;
  std::string raw_label;
  std::optional<DiagnosisClass> mapped;
  // False for entries that name no diagnosis (no label key, or not a string).
  bool labeled = true;
  // Unrecognised keys of the entry object, serialized as JSON ("{}" if none).
  std::string extra = "{}";
};

struct ParseFlags {
  bool has_think = false;
  bool single_json_block = false;  // exactly one ```json block, and it parses
  bool top_extractable = false;
  bool full_coverage = false;  // every class exactly once, no other labeled entry
  bool ambiguous_top = false;
};

struct ParsedCompletion {
  std::optional<std::string> think_text;
  std::vector<RankedEntry> ranked;
  ParseFlags flags;
  // Only whitespace between </think> and the first ```json fence.
  bool think_then_json = false;
  int json_block_count = 0;
  bool json_parsed = false;  // first block parsed as JSON
};

// Total over arbitrary bytes; never throws. The first <think>...</think> span
// is carried verbatim and excluded from the fenced-block scan.
ParsedCompletion parse_completion(std::string_view text);

struct TopDiagnosis {
  DiagnosisClass cls;
  bool ambiguous = false;

  bool operator==(const TopDiagnosis&) const = default;
};

// Class of the first listed entry at the minimal rank. Absent when that entry
// does not map to a class or the list is empty.
std::optional<TopDiagnosis> top_diagnosis(const ParsedCompletion& p);

// Canonical completion: think block, then a ```json array of
// {"rank", "diagnosis"} objects using display names.
std::string render_completion(std::string_view think, std::span<const DiagnosisClass> ranking);

}  // namespace neurodx
