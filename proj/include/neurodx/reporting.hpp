#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "neurodx/normative.hpp"
#include "neurodx/volumetrics.hpp"

namespace neurodx {

enum class Grade { Normal, NormalToMild, Mild, MildToModerate, Moderate, ModerateToSevere, Severe };
enum class Direction { Atrophy, Enlargement, None };

inline constexpr std::size_t kNumGrades = 7;

std::string_view to_string(Direction d);
std::optional<Direction> parse_direction(std::string_view s);

// Seven ordered grades per direction. Threshold t_k is the least severe SDS
// that still earns grade k+1: a value exactly on a cut point takes the more
// severe grade.
class SeverityScale {
 public:
  SeverityScale(std::array<std::string, kNumGrades> names, std::array<double, kNumGrades - 1> atrophy,
                std::array<double, kNumGrades - 1> enlargement);

  // Standard-normal tail quantiles: +-1.28, 1.64, 2.05, 2.33, 2.88, 3.29.
  static const SeverityScale& defaults();
  static SeverityScale parse(const nlohmann::json& doc);
  static SeverityScale load(const std::filesystem::path& path);
  nlohmann::json to_json() const;

  const std::string& name(Grade g) const { return names_[static_cast<std::size_t>(g)]; }
  const std::array<double, kNumGrades - 1>& atrophy_thresholds() const { return atrophy_; }
  const std::array<double, kNumGrades - 1>& enlargement_thresholds() const { return enlargement_; }

 private:
  std::array<std::string, kNumGrades> names_;
  std::array<double, kNumGrades - 1> atrophy_;
  std::array<double, kNumGrades - 1> enlargement_;
};

struct GradeResult {
  Grade grade = Grade::Normal;
  Direction direction = Direction::None;

  bool operator==(const GradeResult&) const = default;
};

// Total over all doubles; NaN grades as normal.
GradeResult grade(double sds, const SeverityScale& scale);

// -6 (severe atrophy) .. 0 (normal) .. +6 (severe enlargement).
int signed_severity(const GradeResult& g);

struct Asymmetry {
  Hemisphere more_affected = Hemisphere::Left;
  double delta_sds = 0.0;  // |sds_left - sds_right|

  bool operator==(const Asymmetry&) const = default;
};

// Annotation iff |sds_left - sds_right| >= threshold. The more affected side
// is the lower SDS, or the higher SDS when the pair deviates net towards
// enlargement (sds_left + sds_right > 0). Throws MismatchedStructure unless
// the records are the left and right instance of one region.
std::optional<Asymmetry> detect_asymmetry(const SdsRecord& left, const SdsRecord& right, double threshold);

struct Finding {
  std::string region_name;
  Hemisphere hemisphere = Hemisphere::Midline;
  double sds = 0.0;
  Grade grade = Grade::Normal;
  Direction direction = Direction::None;
  std::optional<Asymmetry> asymmetry;

  StructureKey key() const { return {region_name, hemisphere}; }
  bool operator==(const Finding&) const = default;
};

enum class LobarPattern { Diffuse, Focal, Spared };

std::string_view to_string(LobarPattern p);

// Counts the lobe's subregion findings graded mild atrophy or worse:
// diffuse when that share reaches diffuse_fraction, focal when at least one,
// spared otherwise. Findings outside the lobe are ignored.
// Throws UnknownLobe for Lobe::None or a lobe with no taxonomy entries.
LobarPattern classify_lobar_pattern(Lobe lobe, const std::vector<Finding>& findings, const RegionTaxonomy& taxonomy,
                                    double diffuse_fraction = 0.7);

enum class Section { Cortical, Subcortical, Ventricular };
inline constexpr std::array<Section, 3> kSections{Section::Cortical, Section::Subcortical, Section::Ventricular};

std::string_view to_string(Section s);
// Regions of the "other" domain are reported with the subcortical section.
Section section_for(Domain d);

struct ReportOptions {
  double asymmetry_threshold = 1.0;
  double diffuse_fraction = 0.7;
};

// Structured content of a report, independent of wording.
struct ReportFindings {
  std::string subject_id;
  // Indexed by Section; each sorted most severe first, ties in taxonomy order.
  std::array<std::vector<Finding>, 3> sections;
  std::map<Lobe, LobarPattern> lobar_patterns;
  std::vector<std::string> warnings;
  // Grade wording taken from the severity scale.
  std::array<std::string, kNumGrades> grade_names{"normal",   "normal-to-mild",     "mild",  "mild-to-moderate",
                                                  "moderate", "moderate-to-severe", "severe"};

  std::vector<Finding> all() const;
  nlohmann::json to_json() const;
  bool operator==(const ReportFindings& o) const {
    return subject_id == o.subject_id && sections == o.sections && lobar_patterns == o.lobar_patterns;
  }
};

ReportFindings build_findings(std::string subject_id, const std::vector<SdsRecord>& records,
                              const RegionTaxonomy& taxonomy, const SeverityScale& scale,
                              const ReportOptions& options = {});

// Sentence pools keyed by pattern kind ("bilateral", "unilateral",
// "lobar_diffuse", ...). A key "<section>.<kind>" overrides "<kind>" inside
// that section. Placeholders are {name}; {Name} inserts the capitalized value.
struct TemplateSet {
  std::string id;
  std::string title;
  std::vector<std::string> header;
  std::map<std::string, std::string> section_titles;
  std::map<std::string, std::vector<std::string>> pools;

  static TemplateSet parse(const nlohmann::json& doc);
  const std::vector<std::string>& pool(Section s, std::string_view kind) const;
};

class TemplateLibrary {
 public:
  // standard, narrative, concise.
  static const TemplateLibrary& builtin();

  void add(TemplateSet set);
  void load_file(const std::filesystem::path& path);
  // Throws UnknownTemplateSet.
  const TemplateSet& get(std::string_view id) const;
  std::vector<std::string> ids() const;
  std::size_t size() const { return sets_.size(); }

 private:
  std::vector<TemplateSet> sets_;
};

// Rendering is a pure function of (findings, template set, seed).
std::string render_report(const ReportFindings& findings, const TemplateSet& templates, std::uint64_t seed);

struct RadiologyReport {
  ReportFindings findings;
  std::string text;
  std::string template_set;
  std::uint64_t seed = 0;

  const std::string& subject_id() const { return findings.subject_id; }
  // Sidecar document: findings plus template set and seed.
  nlohmann::json to_json() const;
};

RadiologyReport generate_report(std::string subject_id, const std::vector<SdsRecord>& records,
                                const RegionTaxonomy& taxonomy, const SeverityScale& scale,
                                std::string_view template_set, std::uint64_t seed, const ReportOptions& options = {},
                                const TemplateLibrary& library = TemplateLibrary::builtin());

// Variant i uses template set i mod |library| and seed + i / |library|; later
// variants that would duplicate an earlier text are re-seeded. Variant 0 is
// generate_report(..., library.ids()[0], seed).
std::vector<RadiologyReport> generate_report_variants(std::string subject_id, const std::vector<SdsRecord>& records,
                                                      const RegionTaxonomy& taxonomy, const SeverityScale& scale,
                                                      int n, std::uint64_t seed, const ReportOptions& options = {},
                                                      const TemplateLibrary& library = TemplateLibrary::builtin());

}  // namespace neurodx
