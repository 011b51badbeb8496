#include "neurodx/volumetrics.hpp"

#include <cmath>
#include <set>

#include <nlohmann/json.hpp>

#include "neurodx/error.hpp"
#include "neurodx/io.hpp"
#include "neurodx/resources.hpp"

namespace neurodx {

using nlohmann::json;

std::string_view to_string(Sex s) { return s == Sex::M ? "M" : "F"; }

std::string_view to_string(Hemisphere h) {
  switch (h) {
    case Hemisphere::Left: return "left";
    case Hemisphere::Right: return "right";
    case Hemisphere::Midline: return "midline";
  }
  return "midline";
}

std::optional<Sex> parse_sex(std::string_view s) {
  if (s == "M") return Sex::M;
  if (s == "F") return Sex::F;
  return std::nullopt;
}

std::optional<Hemisphere> parse_hemisphere(std::string_view s) {
  if (s == "left") return Hemisphere::Left;
  if (s == "right") return Hemisphere::Right;
  if (s == "midline") return Hemisphere::Midline;
  return std::nullopt;
}

std::string display_name(std::string_view region_name) {
  std::string out(region_name);
  for (char& c : out)
    if (c == '_') c = ' ';
  return out;
}

std::string display_name(const StructureKey& key) {
  if (key.hemisphere == Hemisphere::Midline) return display_name(key.name);
  return std::string(to_string(key.hemisphere)) + " " + display_name(key.name);
}

namespace {

const json& require(const json& obj, const char* key, const std::string& path) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) throw Error(ErrorCode::MissingField, "required field absent", path + key);
  return *it;
}

double require_number(const json& obj, const char* key, const std::string& path) {
  const json& v = require(obj, key, path);
  if (!v.is_number()) throw Error(ErrorCode::MalformedFile, "expected a number", path + key);
  double d = v.get<double>();
  if (!std::isfinite(d)) throw Error(ErrorCode::MalformedFile, "expected a finite number", path + key);
  return d;
}

std::string require_string(const json& obj, const char* key, const std::string& path) {
  const json& v = require(obj, key, path);
  if (!v.is_string()) throw Error(ErrorCode::MalformedFile, "expected a string", path + key);
  return v.get<std::string>();
}

}  // namespace

void validate(const SubjectVolumetrics& s) {
  if (!(s.icv_mm3 > 0.0) || !std::isfinite(s.icv_mm3))
    throw Error(ErrorCode::NonPositiveIcv, "icv_mm3 must be positive", "icv_mm3");
  if (!(s.age_years >= 0.0) || !std::isfinite(s.age_years))
    throw Error(ErrorCode::MalformedFile, "age_years must be non-negative", "age_years");
  std::set<StructureKey> seen;
  for (std::size_t i = 0; i < s.regions.size(); ++i) {
    const auto& r = s.regions[i];
    const std::string row = "regions[" + std::to_string(i) + "]";
    if (r.name.empty()) throw Error(ErrorCode::MissingField, "region name is empty", row + ".name");
    if (!(r.volume_mm3 >= 0.0) || !std::isfinite(r.volume_mm3))
      throw Error(ErrorCode::MalformedFile, "volume_mm3 must be non-negative", row + ".volume_mm3");
    if (r.volume_mm3 > s.icv_mm3)
      throw Error(ErrorCode::MalformedFile, "volume_mm3 exceeds icv_mm3", row + ".volume_mm3");
    if (!seen.insert(r.key()).second)
      throw Error(ErrorCode::DuplicateRegion, "region listed twice: " + display_name(r.key()), row);
  }
}

SubjectVolumetrics parse_subject(const json& doc) {
  if (!doc.is_object()) throw Error(ErrorCode::MalformedFile, "subject document must be a JSON object");
  SubjectVolumetrics s;
  s.subject_id = require_string(doc, "subject_id", "");
  s.age_years = require_number(doc, "age_years", "");
  auto sex = parse_sex(require_string(doc, "sex", ""));
  if (!sex) throw Error(ErrorCode::MalformedFile, "sex must be \"M\" or \"F\"", "sex");
  s.sex = *sex;
  s.icv_mm3 = require_number(doc, "icv_mm3", "");
  const json& regions = require(doc, "regions", "");
  if (!regions.is_array()) throw Error(ErrorCode::MalformedFile, "expected an array", "regions");
  s.regions.reserve(regions.size());
  for (std::size_t i = 0; i < regions.size(); ++i) {
    const std::string row = "regions[" + std::to_string(i) + "].";
    const json& r = regions[i];
    if (!r.is_object()) throw Error(ErrorCode::MalformedFile, "expected an object", row.substr(0, row.size() - 1));
    RegionVolume rv;
    rv.name = require_string(r, "name", row);
    auto hemi = parse_hemisphere(require_string(r, "hemisphere", row));
    if (!hemi) throw Error(ErrorCode::MalformedFile, "hemisphere must be left, right or midline", row + "hemisphere");
    rv.hemisphere = *hemi;
    rv.volume_mm3 = require_number(r, "volume_mm3", row);
    s.regions.push_back(std::move(rv));
  }
  validate(s);
  return s;
}

SubjectVolumetrics load_subject(const std::filesystem::path& path) {
  std::string text = read_text_file(path);
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::MalformedFile, std::string("invalid JSON: ") + e.what(), path.string());
  }
  return parse_subject(doc);
}

json to_json(const SubjectVolumetrics& s) {
  json regions = json::array();
  for (const auto& r : s.regions)
    regions.push_back({{"name", r.name}, {"hemisphere", to_string(r.hemisphere)}, {"volume_mm3", r.volume_mm3}});
  return {{"subject_id", s.subject_id},
          {"age_years", s.age_years},
          {"sex", to_string(s.sex)},
          {"icv_mm3", s.icv_mm3},
          {"regions", std::move(regions)}};
}

std::string_view to_string(Domain d) {
  switch (d) {
    case Domain::Cortical: return "cortical";
    case Domain::Subcortical: return "subcortical";
    case Domain::Ventricular: return "ventricular";
    case Domain::Other: return "other";
  }
  return "other";
}

std::string_view to_string(Lobe l) {
  switch (l) {
    case Lobe::Frontal: return "frontal";
    case Lobe::Temporal: return "temporal";
    case Lobe::Parietal: return "parietal";
    case Lobe::Occipital: return "occipital";
    case Lobe::Insular: return "insular";
    case Lobe::Limbic: return "limbic";
    case Lobe::None: return "none";
  }
  return "none";
}

std::optional<Domain> parse_domain(std::string_view s) {
  for (Domain d : {Domain::Cortical, Domain::Subcortical, Domain::Ventricular, Domain::Other})
    if (s == to_string(d)) return d;
  return std::nullopt;
}

std::optional<Lobe> parse_lobe(std::string_view s) {
  for (Lobe l : {Lobe::Frontal, Lobe::Temporal, Lobe::Parietal, Lobe::Occipital, Lobe::Insular, Lobe::Limbic,
                 Lobe::None})
    if (s == to_string(l)) return l;
  return std::nullopt;
}

RegionTaxonomy::RegionTaxonomy(std::vector<TaxonomyEntry> entries) : entries_(std::move(entries)) {
  std::size_t slot = 0;
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    const auto& e = entries_[i];
    first_slot_.push_back(slot);
    slot += e.paired ? 2 : 1;
    if (e.name.empty()) throw Error(ErrorCode::MalformedFile, "taxonomy entry without a name");
    if (!index_.emplace(e.name, i).second)
      throw Error(ErrorCode::DuplicateRegion, "taxonomy lists a region twice", e.name);
    if (e.lobe != Lobe::None && e.domain != Domain::Cortical)
      throw Error(ErrorCode::MalformedFile, "only cortical regions may belong to a lobe", e.name);
  }
  for (const auto& e : entries_) {
    if (e.parent && !index_.contains(*e.parent))
      throw Error(ErrorCode::MalformedFile, "parent region not in taxonomy: " + *e.parent, e.name);
  }
  // A parent chain longer than the entry count must revisit an entry.
  for (const auto& e : entries_) {
    const TaxonomyEntry* cur = &e;
    std::size_t hops = 0;
    while (cur->parent) {
      cur = &entries_[index_.find(*cur->parent)->second];
      if (++hops > entries_.size()) throw Error(ErrorCode::MalformedFile, "cycle in parent relations", e.name);
    }
  }
}

RegionTaxonomy RegionTaxonomy::parse(std::string_view json_text) {
  nlohmann::ordered_json doc;
  try {
    doc = nlohmann::ordered_json::parse(json_text);
  } catch (const nlohmann::ordered_json::parse_error& e) {
    throw Error(ErrorCode::MalformedFile, std::string("invalid taxonomy JSON: ") + e.what());
  }
  auto regions = doc.find("regions");
  if (regions == doc.end()) throw Error(ErrorCode::MissingField, "taxonomy has no regions", "regions");
  if (!regions->is_object()) throw Error(ErrorCode::MalformedFile, "expected an object", "regions");
  std::vector<TaxonomyEntry> entries;
  for (const auto& [name, v] : regions->items()) {
    const std::string path = "regions." + name + ".";
    if (!v.is_object()) throw Error(ErrorCode::MalformedFile, "expected an object", "regions." + name);
    TaxonomyEntry e;
    e.name = name;
    auto field = [&](const char* key) -> const nlohmann::ordered_json& {
      auto it = v.find(key);
      if (it == v.end()) throw Error(ErrorCode::MissingField, "required field absent", path + key);
      return *it;
    };
    const auto& domain = field("domain");
    const auto& lobe = field("lobe");
    auto d = domain.is_string() ? parse_domain(domain.get<std::string>()) : std::nullopt;
    auto l = lobe.is_string() ? parse_lobe(lobe.get<std::string>()) : std::nullopt;
    if (!d) throw Error(ErrorCode::MalformedFile, "unknown domain", path + "domain");
    if (!l) throw Error(ErrorCode::MalformedFile, "unknown lobe", path + "lobe");
    e.domain = *d;
    e.lobe = *l;
    auto parent = v.find("parent");
    if (parent != v.end() && !parent->is_null()) {
      if (!parent->is_string()) throw Error(ErrorCode::MalformedFile, "parent must be a string or null", path + "parent");
      e.parent = parent->get<std::string>();
    }
    const auto& paired = field("paired");
    if (!paired.is_boolean()) throw Error(ErrorCode::MalformedFile, "paired must be a boolean", path + "paired");
    e.paired = paired.get<bool>();
    entries.push_back(std::move(e));
  }
  return RegionTaxonomy(std::move(entries));
}

RegionTaxonomy RegionTaxonomy::load(const std::filesystem::path& path) {
  try {
    return parse(read_text_file(path));
  } catch (const Error& e) {
    if (e.code() == ErrorCode::Io) throw;
    throw Error(e.code(), std::string(e.what()) + " in " + path.string(), e.field());
  }
}

const RegionTaxonomy& RegionTaxonomy::builtin() {
  static const RegionTaxonomy t = parse(resources::get("taxonomy.json"));
  return t;
}

const TaxonomyEntry* RegionTaxonomy::find(std::string_view name) const {
  auto it = index_.find(name);
  return it == index_.end() ? nullptr : &entries_[it->second];
}

std::vector<StructureKey> RegionTaxonomy::structures() const {
  std::vector<StructureKey> out;
  for (const auto& e : entries_) {
    if (e.paired) {
      out.push_back({e.name, Hemisphere::Left});
      out.push_back({e.name, Hemisphere::Right});
    } else {
      out.push_back({e.name, Hemisphere::Midline});
    }
  }
  return out;
}

std::optional<std::size_t> RegionTaxonomy::order_of(const StructureKey& key) const {
  auto it = index_.find(key.name);
  if (it == index_.end()) return std::nullopt;
  const auto& e = entries_[it->second];
  const std::size_t base = first_slot_[it->second];
  if (e.paired) {
    if (key.hemisphere == Hemisphere::Left) return base;
    if (key.hemisphere == Hemisphere::Right) return base + 1;
    return std::nullopt;
  }
  if (key.hemisphere != Hemisphere::Midline) return std::nullopt;
  return base;
}

std::vector<const TaxonomyEntry*> RegionTaxonomy::lobe_subregions(Lobe lobe) const {
  std::set<std::string_view> parents;
  for (const auto& e : entries_)
    if (e.parent) parents.insert(*e.parent);
  std::vector<const TaxonomyEntry*> out;
  for (const auto& e : entries_)
    if (e.lobe == lobe && !parents.contains(e.name)) out.push_back(&e);
  return out;
}

VolumeRatioTable compute_volume_ratios(const SubjectVolumetrics& s) {
  VolumeRatioTable t;
  t.rows.reserve(s.regions.size());
  for (const auto& r : s.regions) t.rows.push_back({r.name, r.hemisphere, r.volume_mm3 / s.icv_mm3});
  return t;
}

CoverageReport validate_against_taxonomy(const SubjectVolumetrics& s, const RegionTaxonomy& t) {
  CoverageReport rep;
  std::set<StructureKey> present;
  for (const auto& r : s.regions) present.insert(r.key());
  for (const auto& k : t.structures())
    if (!present.contains(k)) rep.missing.push_back(k);
  for (const auto& r : s.regions)
    if (!t.order_of(r.key())) rep.unknown.push_back(r.key());
  return rep;
}

}  // namespace neurodx
