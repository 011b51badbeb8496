#include "neurodx/reporting.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <random>
#include <set>

#include <nlohmann/json.hpp>

#include "neurodx/error.hpp"
#include "neurodx/io.hpp"
#include "neurodx/resources.hpp"

namespace neurodx {

using nlohmann::json;

std::string_view to_string(Direction d) {
  switch (d) {
    case Direction::Atrophy: return "atrophy";
    case Direction::Enlargement: return "enlargement";
    case Direction::None: return "none";
  }
  return "none";
}

std::optional<Direction> parse_direction(std::string_view s) {
  if (s == "atrophy") return Direction::Atrophy;
  if (s == "enlargement") return Direction::Enlargement;
  if (s == "none") return Direction::None;
  return std::nullopt;
}

std::string_view to_string(LobarPattern p) {
  switch (p) {
    case LobarPattern::Diffuse: return "diffuse";
    case LobarPattern::Focal: return "focal";
    case LobarPattern::Spared: return "spared";
  }
  return "spared";
}

std::string_view to_string(Section s) {
  switch (s) {
    case Section::Cortical: return "cortical";
    case Section::Subcortical: return "subcortical";
    case Section::Ventricular: return "ventricular";
  }
  return "cortical";
}

Section section_for(Domain d) {
  switch (d) {
    case Domain::Cortical: return Section::Cortical;
    case Domain::Ventricular: return Section::Ventricular;
    case Domain::Subcortical:
    case Domain::Other: return Section::Subcortical;
  }
  return Section::Subcortical;
}

// ---- severity scale ----

SeverityScale::SeverityScale(std::array<std::string, kNumGrades> names, std::array<double, kNumGrades - 1> atrophy,
                             std::array<double, kNumGrades - 1> enlargement)
    : names_(std::move(names)), atrophy_(atrophy), enlargement_(enlargement) {
  std::set<std::string> seen;
  for (const auto& n : names_) {
    if (n.empty()) throw Error(ErrorCode::InvalidConfig, "grade names must be non-empty", "grades");
    if (!seen.insert(n).second) throw Error(ErrorCode::InvalidConfig, "grade names must be distinct", "grades");
  }
  for (std::size_t i = 0; i < atrophy_.size(); ++i) {
    if (!std::isfinite(atrophy_[i]) || atrophy_[i] >= 0.0 || (i > 0 && !(atrophy_[i] < atrophy_[i - 1])))
      throw Error(ErrorCode::InvalidConfig, "atrophy thresholds must be negative and strictly decreasing",
                  "atrophy_thresholds");
    if (!std::isfinite(enlargement_[i]) || enlargement_[i] <= 0.0 ||
        (i > 0 && !(enlargement_[i] > enlargement_[i - 1])))
      throw Error(ErrorCode::InvalidConfig, "enlargement thresholds must be positive and strictly increasing",
                  "enlargement_thresholds");
  }
}

const SeverityScale& SeverityScale::defaults() {
  static const SeverityScale s = parse(json::parse(resources::get("severity_scale.json")));
  return s;
}

SeverityScale SeverityScale::parse(const json& doc) {
  auto read = [&](const char* key, std::size_t n) -> const json& {
    auto it = doc.find(key);
    if (it == doc.end()) throw Error(ErrorCode::MissingField, "severity scale field absent", key);
    if (!it->is_array() || it->size() != n)
      throw Error(ErrorCode::InvalidConfig, "expected an array of " + std::to_string(n), key);
    return *it;
  };
  if (!doc.is_object()) throw Error(ErrorCode::MalformedFile, "severity scale must be a JSON object");
  std::array<std::string, kNumGrades> names;
  std::array<double, kNumGrades - 1> atrophy{}, enlargement{};
  try {
    const json& g = read("grades", kNumGrades);
    for (std::size_t i = 0; i < kNumGrades; ++i) names[i] = g[i].get<std::string>();
    const json& a = read("atrophy_thresholds", kNumGrades - 1);
    const json& e = read("enlargement_thresholds", kNumGrades - 1);
    for (std::size_t i = 0; i + 1 < kNumGrades; ++i) {
      atrophy[i] = a[i].get<double>();
      enlargement[i] = e[i].get<double>();
    }
  } catch (const json::exception& ex) {
    throw Error(ErrorCode::InvalidConfig, std::string("severity scale: ") + ex.what());
  }
  return SeverityScale(std::move(names), atrophy, enlargement);
}

SeverityScale SeverityScale::load(const std::filesystem::path& path) {
  try {
    return parse(json::parse(read_text_file(path)));
  } catch (const json::parse_error& ex) {
    throw Error(ErrorCode::MalformedFile, ex.what(), path.string());
  }
}

json SeverityScale::to_json() const {
  return {{"grades", names_}, {"atrophy_thresholds", atrophy_}, {"enlargement_thresholds", enlargement_}};
}

GradeResult grade(double sds, const SeverityScale& scale) {
  if (std::isnan(sds)) return {};
  std::size_t k = 0;
  if (sds < 0.0) {
    for (double t : scale.atrophy_thresholds())
      if (sds <= t) ++k;
    if (k > 0) return {static_cast<Grade>(k), Direction::Atrophy};
  } else {
    for (double t : scale.enlargement_thresholds())
      if (sds >= t) ++k;
    if (k > 0) return {static_cast<Grade>(k), Direction::Enlargement};
  }
  return {};
}

int signed_severity(const GradeResult& g) {
  int k = static_cast<int>(g.grade);
  if (g.direction == Direction::Atrophy) return -k;
  if (g.direction == Direction::Enlargement) return k;
  return 0;
}

std::optional<Asymmetry> detect_asymmetry(const SdsRecord& left, const SdsRecord& right, double threshold) {
  if (left.hemisphere != Hemisphere::Left || right.hemisphere != Hemisphere::Right ||
      left.region_name != right.region_name)
    throw Error(ErrorCode::MismatchedStructure, "asymmetry needs the left and right instance of one region",
                display_name(left.key()) + " / " + display_name(right.key()));
  const double l = left.sds, r = right.sds;
  const double delta = std::fabs(l - r);
  if (!(delta >= threshold)) return std::nullopt;
  Hemisphere more;
  if (l + r > 0.0) more = l >= r ? Hemisphere::Left : Hemisphere::Right;
  else more = l <= r ? Hemisphere::Left : Hemisphere::Right;
  return Asymmetry{more, delta};
}

LobarPattern classify_lobar_pattern(Lobe lobe, const std::vector<Finding>& findings, const RegionTaxonomy& taxonomy,
                                    double diffuse_fraction) {
  if (lobe == Lobe::None) throw Error(ErrorCode::UnknownLobe, "lobe none has no subregions");
  auto subs = taxonomy.lobe_subregions(lobe);
  if (subs.empty()) throw Error(ErrorCode::UnknownLobe, "no taxonomy entries for lobe", std::string(to_string(lobe)));
  std::set<std::string_view> names;
  for (const auto* e : subs) names.insert(e->name);
  std::size_t assessed = 0, affected = 0;
  for (const auto& f : findings) {
    if (!names.contains(f.region_name)) continue;
    ++assessed;
    if (f.direction == Direction::Atrophy && f.grade >= Grade::Mild) ++affected;
  }
  if (affected == 0) return LobarPattern::Spared;
  if (static_cast<double>(affected) >= diffuse_fraction * static_cast<double>(assessed)) return LobarPattern::Diffuse;
  return LobarPattern::Focal;
}

// ---- findings ----

std::vector<Finding> ReportFindings::all() const {
  std::vector<Finding> out;
  for (const auto& s : sections) out.insert(out.end(), s.begin(), s.end());
  return out;
}

json ReportFindings::to_json() const {
  json secs = json::object();
  for (Section s : kSections) {
    json arr = json::array();
    for (const auto& f : sections[static_cast<std::size_t>(s)]) {
      json o = {{"region", f.region_name},
                {"hemisphere", to_string(f.hemisphere)},
                {"sds", f.sds},
                {"grade", grade_names[static_cast<std::size_t>(f.grade)]},
                {"direction", to_string(f.direction)}};
      if (f.asymmetry)
        o["asymmetry"] = {{"more_affected", to_string(f.asymmetry->more_affected)},
                          {"delta_sds", f.asymmetry->delta_sds}};
      arr.push_back(std::move(o));
    }
    secs[std::string(to_string(s))] = std::move(arr);
  }
  json lobes = json::object();
  for (const auto& [l, p] : lobar_patterns) lobes[std::string(to_string(l))] = to_string(p);
  return {{"subject_id", subject_id}, {"sections", secs}, {"lobar_patterns", lobes}, {"warnings", warnings}};
}

ReportFindings build_findings(std::string subject_id, const std::vector<SdsRecord>& records,
                              const RegionTaxonomy& taxonomy, const SeverityScale& scale,
                              const ReportOptions& options) {
  ReportFindings out;
  out.subject_id = std::move(subject_id);
  for (std::size_t g = 0; g < kNumGrades; ++g) out.grade_names[g] = scale.name(static_cast<Grade>(g));

  struct Slot {
    Finding f;
    std::size_t order;
    Section section;
  };
  std::vector<Slot> slots;
  std::map<StructureKey, std::size_t> by_key;
  for (const auto& r : records) {
    auto order = taxonomy.order_of(r.key());
    if (!order) {
      out.warnings.push_back(display_name(r.key()) + " is not in the region taxonomy; not reported");
      continue;
    }
    if (by_key.contains(r.key())) {
      out.warnings.push_back(display_name(r.key()) + " listed twice; later record ignored");
      continue;
    }
    auto g = grade(r.sds, scale);
    Finding f{r.region_name, r.hemisphere, r.sds, g.grade, g.direction, std::nullopt};
    by_key.emplace(r.key(), slots.size());
    slots.push_back({std::move(f), *order, section_for(taxonomy.find(r.region_name)->domain)});
  }

  for (const auto& e : taxonomy.entries()) {
    if (!e.paired) continue;
    auto l = by_key.find({e.name, Hemisphere::Left});
    auto r = by_key.find({e.name, Hemisphere::Right});
    if (l == by_key.end() || r == by_key.end()) continue;
    Finding& fl = slots[l->second].f;
    Finding& fr = slots[r->second].f;
    SdsRecord rl{fl.region_name, Hemisphere::Left, 0, 0, 1, fl.sds, false};
    SdsRecord rr{fr.region_name, Hemisphere::Right, 0, 0, 1, fr.sds, false};
    auto a = detect_asymmetry(rl, rr, options.asymmetry_threshold);
    fl.asymmetry = a;
    fr.asymmetry = a;
  }

  std::stable_sort(slots.begin(), slots.end(), [](const Slot& a, const Slot& b) {
    int sa = std::abs(signed_severity({a.f.grade, a.f.direction}));
    int sb = std::abs(signed_severity({b.f.grade, b.f.direction}));
    if (sa != sb) return sa > sb;
    return a.order < b.order;
  });
  for (auto& s : slots) out.sections[static_cast<std::size_t>(s.section)].push_back(std::move(s.f));

  const auto& cortical = out.sections[static_cast<std::size_t>(Section::Cortical)];
  for (Lobe l : {Lobe::Frontal, Lobe::Temporal, Lobe::Parietal, Lobe::Occipital, Lobe::Insular, Lobe::Limbic}) {
    if (taxonomy.lobe_subregions(l).empty()) continue;
    bool assessed = std::any_of(cortical.begin(), cortical.end(), [&](const Finding& f) {
      const auto* e = taxonomy.find(f.region_name);
      return e && e->lobe == l;
    });
    if (!assessed) continue;
    out.lobar_patterns[l] = classify_lobar_pattern(l, cortical, taxonomy, options.diffuse_fraction);
  }
  return out;
}

// ---- templates ----

namespace {

const std::vector<std::string_view> kRequiredPools = {
    "midline",      "bilateral",     "bilateral_asymmetric", "two_sided",  "unilateral", "asymmetry",
    "lobar_diffuse", "lobar_focal", "normal_rest",          "normal_all", "empty"};

}  // namespace

TemplateSet TemplateSet::parse(const json& doc) {
  if (!doc.is_object()) throw Error(ErrorCode::MalformedFile, "template set must be a JSON object");
  TemplateSet t;
  try {
    t.id = doc.at("id").get<std::string>();
    t.title = doc.at("title").get<std::string>();
    t.header = doc.value("header", std::vector<std::string>{});
    t.section_titles = doc.at("section_titles").get<std::map<std::string, std::string>>();
    t.pools = doc.at("pools").get<std::map<std::string, std::vector<std::string>>>();
  } catch (const json::exception& ex) {
    throw Error(ErrorCode::MalformedFile, std::string("template set: ") + ex.what());
  }
  if (t.id.empty()) throw Error(ErrorCode::MalformedFile, "template set id must be non-empty", "id");
  for (Section s : kSections)
    if (!t.section_titles.contains(std::string(to_string(s))))
      throw Error(ErrorCode::MissingField, "section title absent", "section_titles." + std::string(to_string(s)));
  for (auto kind : kRequiredPools)
    if (!t.pools.contains(std::string(kind)))
      throw Error(ErrorCode::MissingField, "sentence pool absent", "pools." + std::string(kind));
  for (const auto& [k, v] : t.pools)
    if (v.empty()) throw Error(ErrorCode::MalformedFile, "sentence pool is empty", "pools." + k);
  return t;
}

const std::vector<std::string>& TemplateSet::pool(Section s, std::string_view kind) const {
  auto it = pools.find(std::string(to_string(s)) + "." + std::string(kind));
  if (it != pools.end()) return it->second;
  it = pools.find(std::string(kind));
  if (it == pools.end()) throw Error(ErrorCode::MalformedFile, "sentence pool absent", "pools." + std::string(kind));
  return it->second;
}

const TemplateLibrary& TemplateLibrary::builtin() {
  static const TemplateLibrary lib = [] {
    TemplateLibrary l;
    for (const char* name : {"templates/standard.json", "templates/narrative.json", "templates/concise.json"})
      l.add(TemplateSet::parse(json::parse(resources::get(name))));
    return l;
  }();
  return lib;
}

void TemplateLibrary::add(TemplateSet set) {
  for (auto& s : sets_)
    if (s.id == set.id) {
      s = std::move(set);
      return;
    }
  sets_.push_back(std::move(set));
}

void TemplateLibrary::load_file(const std::filesystem::path& path) {
  try {
    add(TemplateSet::parse(json::parse(read_text_file(path))));
  } catch (const json::parse_error& ex) {
    throw Error(ErrorCode::MalformedFile, ex.what(), path.string());
  }
}

const TemplateSet& TemplateLibrary::get(std::string_view id) const {
  for (const auto& s : sets_)
    if (s.id == id) return s;
  throw Error(ErrorCode::UnknownTemplateSet, "no template set named " + std::string(id));
}

std::vector<std::string> TemplateLibrary::ids() const {
  std::vector<std::string> out;
  for (const auto& s : sets_) out.push_back(s.id);
  return out;
}

// ---- rendering ----

namespace {

using Vars = std::map<std::string, std::string, std::less<>>;

std::string capitalize(std::string s) {
  if (!s.empty()) s[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(s[0])));
  return s;
}

std::string fill(std::string_view pattern, const Vars& vars) {
  std::string out;
  std::size_t i = 0;
  while (i < pattern.size()) {
    if (pattern[i] != '{') {
      out += pattern[i++];
      continue;
    }
    auto close = pattern.find('}', i);
    if (close == std::string_view::npos) throw Error(ErrorCode::MalformedFile, "unterminated placeholder");
    std::string_view key = pattern.substr(i + 1, close - i - 1);
    auto it = vars.find(key);
    if (it != vars.end()) {
      out += it->second;
    } else {
      std::string lower(key);
      if (!lower.empty()) lower[0] = static_cast<char>(std::tolower(static_cast<unsigned char>(lower[0])));
      auto lt = vars.find(lower);
      if (lower == key || lt == vars.end())
        throw Error(ErrorCode::MalformedFile, "unknown placeholder {" + std::string(key) + "}");
      out += capitalize(lt->second);
    }
    i = close + 1;
  }
  return out;
}

std::string_view side(Hemisphere h) { return h == Hemisphere::Left ? "left" : "right"; }
std::string_view other(Hemisphere h) { return h == Hemisphere::Left ? "right" : "left"; }

class Renderer {
 public:
  Renderer(const ReportFindings& f, const TemplateSet& t, std::uint64_t seed)
      : f_(f), t_(t), rng_(seed ^ fnv1a64(t.id)) {}

  std::string sentence(Section s, std::string_view kind, const Vars& vars) {
    const auto& pool = t_.pool(s, kind);
    const auto& pattern = pool[uniform_index(rng_, pool.size())];
    return fill(pattern, vars);
  }

  std::string grade_word(Grade g) const { return f_.grade_names[static_cast<std::size_t>(g)]; }

  std::string asymmetry_clause(Section s, const std::optional<Asymmetry>& a) {
    if (!a) return "";
    return sentence(s, "asymmetry",
                    {{"predominant", std::string(side(a->more_affected))},
                     {"other_side", std::string(other(a->more_affected))}});
  }

  std::vector<std::string> section_lines(Section s) {
    const auto& fs = f_.sections[static_cast<std::size_t>(s)];
    const std::string sec(to_string(s));
    std::vector<std::string> lines;
    if (fs.empty()) {
      lines.push_back(sentence(s, "empty", {{"section", sec}}));
      return lines;
    }
    if (s == Section::Cortical) {
      for (const auto& [lobe, pattern] : f_.lobar_patterns) {
        if (pattern == LobarPattern::Spared) continue;
        lines.push_back(sentence(s, pattern == LobarPattern::Diffuse ? "lobar_diffuse" : "lobar_focal",
                                 {{"lobe", std::string(to_string(lobe))}, {"section", sec}}));
      }
    }

    std::vector<std::string> order;
    std::map<std::string, std::vector<const Finding*>> by_region;
    for (const auto& f : fs) {
      if (!by_region.contains(f.region_name)) order.push_back(f.region_name);
      by_region[f.region_name].push_back(&f);
    }

    std::vector<std::string> normal;
    bool any_abnormal = false;
    for (const auto& name : order) {
      const auto& group = by_region[name];
      const Finding* left = nullptr;
      const Finding* right = nullptr;
      const Finding* mid = nullptr;
      for (const auto* f : group) {
        if (f->hemisphere == Hemisphere::Left) left = f;
        else if (f->hemisphere == Hemisphere::Right) right = f;
        else mid = f;
      }
      auto abnormal = [](const Finding* f) { return f && f->direction != Direction::None; };
      const std::string region = display_name(name);
      if (mid) {
        if (!abnormal(mid)) {
          normal.push_back(region);
          continue;
        }
        lines.push_back(sentence(s, "midline",
                                 {{"grade", grade_word(mid->grade)},
                                  {"direction", std::string(to_string(mid->direction))},
                                  {"region", region},
                                  {"section", sec}}));
        any_abnormal = true;
        continue;
      }
      if (!abnormal(left) && !abnormal(right)) {
        normal.push_back(region);
        continue;
      }
      any_abnormal = true;
      if (abnormal(left) && abnormal(right)) {
        const auto& a = left->asymmetry;
        if (left->grade == right->grade && left->direction == right->direction) {
          Vars v{{"grade", grade_word(left->grade)},
                 {"direction", std::string(to_string(left->direction))},
                 {"region", region},
                 {"section", sec}};
          if (a) {
            v["predominant"] = side(a->more_affected);
            v["other_side"] = other(a->more_affected);
            lines.push_back(sentence(s, "bilateral_asymmetric", v));
          } else {
            lines.push_back(sentence(s, "bilateral", v));
          }
        } else {
          std::string clause = asymmetry_clause(s, a);
          lines.push_back(sentence(s, "two_sided",
                                   {{"grade_left", grade_word(left->grade)},
                                    {"direction_left", std::string(to_string(left->direction))},
                                    {"grade_right", grade_word(right->grade)},
                                    {"direction_right", std::string(to_string(right->direction))},
                                    {"region", region},
                                    {"asymmetry", clause},
                                    {"section", sec}}));
        }
        continue;
      }
      const Finding* hit = abnormal(left) ? left : right;
      std::string clause = asymmetry_clause(s, hit->asymmetry);
      lines.push_back(sentence(s, "unilateral",
                               {{"grade", grade_word(hit->grade)},
                                {"direction", std::string(to_string(hit->direction))},
                                {"region", region},
                                {"side", std::string(side(hit->hemisphere))},
                                {"other_side", std::string(other(hit->hemisphere))},
                                {"asymmetry", clause},
                                {"section", sec}}));
    }
    if (!normal.empty()) {
      std::string list;
      for (std::size_t i = 0; i < normal.size(); ++i) list += (i ? ", " : "") + normal[i];
      lines.push_back(sentence(s, any_abnormal ? "normal_rest" : "normal_all", {{"section", sec}, {"list", list}}));
    }
    for (auto& l : lines) l = capitalize(std::move(l));
    return lines;
  }

  std::string render() {
    std::string out = t_.title + "\n";
    out += "Subject: " + f_.subject_id + "\n";
    for (const auto& h : t_.header) out += h + "\n";
    for (Section s : kSections) {
      out += "\n" + t_.section_titles.at(std::string(to_string(s))) + "\n";
      for (const auto& l : section_lines(s)) out += l + "\n";
    }
    return out;
  }

 private:
  const ReportFindings& f_;
  const TemplateSet& t_;
  std::mt19937_64 rng_;
};

}  // namespace

std::string render_report(const ReportFindings& findings, const TemplateSet& templates, std::uint64_t seed) {
  return Renderer(findings, templates, seed).render();
}

json RadiologyReport::to_json() const {
  json j = findings.to_json();
  j["template_set"] = template_set;
  j["seed"] = seed;
  return j;
}

RadiologyReport generate_report(std::string subject_id, const std::vector<SdsRecord>& records,
                                const RegionTaxonomy& taxonomy, const SeverityScale& scale,
                                std::string_view template_set, std::uint64_t seed, const ReportOptions& options,
                                const TemplateLibrary& library) {
  const TemplateSet& t = library.get(template_set);
  RadiologyReport r;
  r.findings = build_findings(std::move(subject_id), records, taxonomy, scale, options);
  r.text = render_report(r.findings, t, seed);
  r.template_set = t.id;
  r.seed = seed;
  return r;
}

std::vector<RadiologyReport> generate_report_variants(std::string subject_id, const std::vector<SdsRecord>& records,
                                                      const RegionTaxonomy& taxonomy, const SeverityScale& scale,
                                                      int n, std::uint64_t seed, const ReportOptions& options,
                                                      const TemplateLibrary& library) {
  if (n < 1) throw Error(ErrorCode::InvalidConfig, "need at least one report variant", "n_reports");
  if (library.size() == 0) throw Error(ErrorCode::UnknownTemplateSet, "template library is empty");
  const auto ids = library.ids();
  const std::size_t L = ids.size();
  ReportFindings findings = build_findings(std::move(subject_id), records, taxonomy, scale, options);
  std::vector<RadiologyReport> out;
  std::set<std::string> texts;
  for (int i = 0; i < n; ++i) {
    const TemplateSet& t = library.get(ids[static_cast<std::size_t>(i) % L]);
    std::uint64_t s = seed + static_cast<std::uint64_t>(i) / L;
    std::string text = render_report(findings, t, s);
    for (int attempt = 1; texts.contains(text) && attempt <= 64; ++attempt) {
      s = seed + static_cast<std::uint64_t>(n) + static_cast<std::uint64_t>(attempt) * 0x9E3779B97F4A7C15ULL +
          static_cast<std::uint64_t>(i);
      text = render_report(findings, t, s);
    }
    texts.insert(text);
    out.push_back({findings, std::move(text), t.id, s});
  }
  return out;
}

}  // namespace neurodx
