#pragma once

#include <compare>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace neurodx {

enum class Sex { M, F };
enum class Hemisphere { Left, Right, Midline };

std::string_view to_string(Sex s);
std::string_view to_string(Hemisphere h);
std::optional<Sex> parse_sex(std::string_view s);
std::optional<Hemisphere> parse_hemisphere(std::string_view s);

// A region instance: (name, hemisphere). Paired regions have a left and a
// right instance, unpaired ones a single midline instance.
struct StructureKey {
  std::string name;
  Hemisphere hemisphere = Hemisphere::Midline;

  auto operator<=>(const StructureKey&) const = default;
  bool operator==(const StructureKey&) const = default;
};

// "left hippocampus", "third ventricle".
std::string display_name(const StructureKey& key);
// Region name with underscores turned into spaces.
std::string display_name(std::string_view region_name);

struct RegionVolume {
  std::string name;
  Hemisphere hemisphere = Hemisphere::Midline;
  double volume_mm3 = 0.0;

  StructureKey key() const { return {name, hemisphere}; }
  bool operator==(const RegionVolume&) const = default;
};

struct SubjectVolumetrics {
  std::string subject_id;
  double age_years = 0.0;
  Sex sex = Sex::F;
  double icv_mm3 = 0.0;
  std::vector<RegionVolume> regions;

  bool operator==(const SubjectVolumetrics&) const = default;
};

// Throws Error(NonPositiveIcv | DuplicateRegion | MalformedFile) naming the
// offending field.
void validate(const SubjectVolumetrics& s);

SubjectVolumetrics parse_subject(const nlohmann::json& doc);
SubjectVolumetrics load_subject(const std::filesystem::path& path);
nlohmann::json to_json(const SubjectVolumetrics& s);

enum class Domain { Cortical, Subcortical, Ventricular, Other };
enum class Lobe { Frontal, Temporal, Parietal, Occipital, Insular, Limbic, None };

std::string_view to_string(Domain d);
std::string_view to_string(Lobe l);
std::optional<Domain> parse_domain(std::string_view s);
std::optional<Lobe> parse_lobe(std::string_view s);

struct TaxonomyEntry {
  std::string name;
  Domain domain = Domain::Other;
  Lobe lobe = Lobe::None;
  std::optional<std::string> parent;
  bool paired = false;
};

// Region catalogue. Entry order is the order of the source file and defines
// "taxonomy order" everywhere downstream.
class RegionTaxonomy {
 public:
  RegionTaxonomy() = default;
  // Validates parent references, parent cycles and lobe/domain consistency.
  explicit RegionTaxonomy(std::vector<TaxonomyEntry> entries);

  // Taxonomy file: {"regions": {name: {domain, lobe, parent, paired}}}.
  static RegionTaxonomy parse(std::string_view json_text);
  static RegionTaxonomy load(const std::filesystem::path& path);
  // The taxonomy shipped in resources/taxonomy.json.
  static const RegionTaxonomy& builtin();

  const std::vector<TaxonomyEntry>& entries() const { return entries_; }
  const TaxonomyEntry* find(std::string_view name) const;
  bool contains(std::string_view name) const { return find(name) != nullptr; }

  // Left/right instances for paired entries, midline otherwise, in taxonomy order.
  std::vector<StructureKey> structures() const;
  // Position of a structure in taxonomy order; nullopt when not in the taxonomy.
  std::optional<std::size_t> order_of(const StructureKey& key) const;
  // Entries of a lobe that are not themselves parents of another entry.
  std::vector<const TaxonomyEntry*> lobe_subregions(Lobe lobe) const;

 private:
  std::vector<TaxonomyEntry> entries_;
  std::map<std::string, std::size_t, std::less<>> index_;
  std::vector<std::size_t> first_slot_;  // position of each entry's first structure
};

struct RegionRatio {
  std::string name;
  Hemisphere hemisphere = Hemisphere::Midline;
  double ratio = 0.0;

  StructureKey key() const { return {name, hemisphere}; }
};

struct VolumeRatioTable {
  std::vector<RegionRatio> rows;
};

// One row per input region, in input order; ratio = volume / icv.
VolumeRatioTable compute_volume_ratios(const SubjectVolumetrics& s);

struct CoverageReport {
  std::vector<StructureKey> missing;  // expected by the taxonomy, absent from the subject
  std::vector<StructureKey> unknown;  // present in the subject, not expected by the taxonomy

  bool complete() const { return missing.empty() && unknown.empty(); }
};

CoverageReport validate_against_taxonomy(const SubjectVolumetrics& s, const RegionTaxonomy& t);

}  // namespace neurodx
