#include "neurodx/normative.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <random>
#include <sstream>

#include "neurodx/error.hpp"
#include "neurodx/io.hpp"

namespace neurodx {

NormativeCurve::NormativeCurve(StructureKey structure, Sex sex, std::vector<Knot> knots)
    : structure_(std::move(structure)), sex_(sex), knots_(std::move(knots)) {
  const std::string where = display_name(structure_) + " (" + std::string(to_string(sex_)) + ")";
  if (knots_.size() < 2) throw Error(ErrorCode::MalformedFile, "normative curve needs at least 2 knots", where);
  for (std::size_t i = 0; i < knots_.size(); ++i) {
    const auto& k = knots_[i];
    if (!std::isfinite(k.age_years) || !std::isfinite(k.mu))
      throw Error(ErrorCode::MalformedFile, "non-finite knot value", where);
    if (!(k.sigma > 0.0) || !std::isfinite(k.sigma))
      throw Error(ErrorCode::NonPositiveSigma, "sigma must be positive at every knot", where);
    if (i > 0 && !(k.age_years > knots_[i - 1].age_years))
      throw Error(ErrorCode::MalformedFile, "knot ages must be strictly increasing", where);
  }
}

NormativeModel::NormativeModel(std::vector<NormativeCurve> curves) {
  for (auto& c : curves) {
    auto key = std::make_pair(c.structure(), c.sex());
    if (curves_.contains(key))
      throw Error(ErrorCode::DuplicateRegion, "two curves for one structure and sex", display_name(c.structure()));
    curves_.emplace(std::move(key), std::move(c));
  }
}

bool NormativeModel::has_curve(const StructureKey& structure, Sex sex) const {
  return curves_.contains({structure, sex});
}

NormativeLookup NormativeModel::lookup(const StructureKey& structure, double age_years, Sex sex) const {
  auto it = curves_.find({structure, sex});
  if (it == curves_.end()) {
    Sex other = sex == Sex::M ? Sex::F : Sex::M;
    if (curves_.contains({structure, other}))
      throw Error(ErrorCode::UnknownSex, "no curve for sex " + std::string(to_string(sex)), display_name(structure));
    throw Error(ErrorCode::UnknownStructure, "no normative curve", display_name(structure));
  }
  const auto& knots = it->second.knots();
  if (age_years <= knots.front().age_years) {
    const auto& k = knots.front();
    return {k.mu, k.sigma, age_years < k.age_years};
  }
  if (age_years >= knots.back().age_years) {
    const auto& k = knots.back();
    return {k.mu, k.sigma, age_years > k.age_years};
  }
  auto hi = std::upper_bound(knots.begin(), knots.end(), age_years,
                             [](double a, const Knot& k) { return a < k.age_years; });
  auto lo = hi - 1;
  double t = (age_years - lo->age_years) / (hi->age_years - lo->age_years);
  return {lo->mu + t * (hi->mu - lo->mu), lo->sigma + t * (hi->sigma - lo->sigma), false};
}

std::pair<double, double> NormativeModel::age_range() const {
  if (curves_.empty()) return {0.0, 0.0};
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (const auto& [key, c] : curves_) {
    lo = std::min(lo, c.knots().front().age_years);
    hi = std::max(hi, c.knots().back().age_years);
  }
  return {lo, hi};
}

std::vector<std::pair<StructureKey, Sex>> NormativeModel::missing_curves(const RegionTaxonomy& t) const {
  std::vector<std::pair<StructureKey, Sex>> out;
  for (const auto& e : t.entries()) {
    if (!e.paired) continue;
    for (Sex s : {Sex::M, Sex::F})
      for (Hemisphere h : {Hemisphere::Left, Hemisphere::Right}) {
        StructureKey k{e.name, h};
        if (!has_curve(k, s)) out.emplace_back(k, s);
      }
  }
  return out;
}

namespace {

std::vector<std::string_view> split_csv(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    auto pos = line.find(',', start);
    out.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

double parse_double(std::string_view s, const std::string& where) {
  s = trim(s);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) throw Error(ErrorCode::MalformedFile, "bad number", where);
  return v;
}

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

}  // namespace

NormativeModel NormativeModel::read_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorCode::MalformedFile, "empty normative model file");
  if (line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);
  if (trim(line) != "structure,hemisphere,sex,age_years,mu,sigma")
    throw Error(ErrorCode::MalformedFile, "expected header structure,hemisphere,sex,age_years,mu,sigma", "line 1");

  std::vector<std::pair<std::pair<StructureKey, Sex>, std::vector<Knot>>> groups;
  std::map<std::pair<StructureKey, Sex>, std::size_t> index;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const std::string where = "line " + std::to_string(lineno);
    auto cols = split_csv(line);
    if (cols.size() != 6) throw Error(ErrorCode::MalformedFile, "expected 6 columns", where);
    auto hemi = parse_hemisphere(trim(cols[1]));
    if (!hemi) throw Error(ErrorCode::MalformedFile, "bad hemisphere", where);
    auto sex = parse_sex(trim(cols[2]));
    if (!sex) throw Error(ErrorCode::MalformedFile, "bad sex", where);
    Knot k{parse_double(cols[3], where), parse_double(cols[4], where), parse_double(cols[5], where)};
    auto key = std::make_pair(StructureKey{std::string(trim(cols[0])), *hemi}, *sex);
    auto [it, fresh] = index.emplace(key, groups.size());
    if (fresh) groups.emplace_back(key, std::vector<Knot>{});
    groups[it->second].second.push_back(k);
  }
  std::vector<NormativeCurve> curves;
  curves.reserve(groups.size());
  for (auto& [key, knots] : groups) curves.emplace_back(key.first, key.second, std::move(knots));
  return NormativeModel(std::move(curves));
}

NormativeModel NormativeModel::load_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open normative model", path.string());
  return read_csv(in);
}

void NormativeModel::write_csv(std::ostream& out) const {
  out << "structure,hemisphere,sex,age_years,mu,sigma\n";
  for (const auto& [key, curve] : curves_) {
    for (const auto& k : curve.knots()) {
      out << key.first.name << ',' << to_string(key.first.hemisphere) << ',' << to_string(key.second) << ','
          << format_double(k.age_years) << ',' << format_double(k.mu) << ',' << format_double(k.sigma) << '\n';
    }
  }
}

double compute_sds(double ratio, double mu, double sigma) {
  if (!(sigma > 0.0) || !std::isfinite(sigma)) throw Error(ErrorCode::NonPositiveSigma, "sigma must be positive");
  return (ratio - mu) / sigma;
}

namespace {

SdsTable sds_in_subject_order(const SubjectVolumetrics& s, const NormativeModel& m) {
  SdsTable t;
  t.records.reserve(s.regions.size());
  for (const auto& r : s.regions) {
    if (!m.has_curve(r.key(), s.sex)) {
      t.warnings.push_back("no normative curve for " + display_name(r.key()) + " (sex " +
                           std::string(to_string(s.sex)) + "); region skipped");
      continue;
    }
    const double ratio = r.volume_mm3 / s.icv_mm3;
    auto norm = m.lookup(r.key(), s.age_years, s.sex);
    t.records.push_back({r.name, r.hemisphere, ratio, norm.mu, norm.sigma, compute_sds(ratio, norm.mu, norm.sigma),
                         norm.extrapolated});
  }
  return t;
}

}  // namespace

SdsTable sds_table(const SubjectVolumetrics& s, const NormativeModel& m) { return sds_in_subject_order(s, m); }

SdsTable sds_table(const SubjectVolumetrics& s, const NormativeModel& m, const RegionTaxonomy& t) {
  SdsTable out = sds_in_subject_order(s, m);
  const std::size_t outside = std::numeric_limits<std::size_t>::max();
  std::stable_sort(out.records.begin(), out.records.end(), [&](const SdsRecord& a, const SdsRecord& b) {
    return t.order_of(a.key()).value_or(outside) < t.order_of(b.key()).value_or(outside);
  });
  return out;
}

NormativeModel synth_normative_model(std::uint64_t seed, const RegionTaxonomy& taxonomy) {
  std::vector<NormativeCurve> curves;
  for (const auto& e : taxonomy.entries()) {
    // Region-level draws are shared by both hemispheres and sexes.
    std::mt19937_64 region_rng(fnv1a64(e.name, seed * 0x9E3779B97F4A7C15ULL + 1));
    double lo = 0.0015, hi = 0.0045;
    switch (e.domain) {
      case Domain::Cortical: break;
      case Domain::Subcortical: lo = 0.0004; hi = 0.0030; break;
      case Domain::Ventricular: lo = 0.0008; hi = 0.0060; break;
      case Domain::Other: lo = 0.0100; hi = 0.0160; break;
    }
    const double base = lo + (hi - lo) * uniform01(region_rng);
    const bool expands = e.domain == Domain::Ventricular;
    const double rate = expands ? 0.8 + 1.2 * uniform01(region_rng) : 0.12 + 0.18 * uniform01(region_rng);

    std::vector<Hemisphere> hemis;
    if (e.paired) hemis = {Hemisphere::Left, Hemisphere::Right};
    else hemis = {Hemisphere::Midline};
    for (Hemisphere h : hemis) {
      for (Sex sex : {Sex::M, Sex::F}) {
        std::string tag = e.name + "|" + std::string(to_string(h)) + "|" + std::string(to_string(sex));
        std::mt19937_64 rng(fnv1a64(tag, seed * 0x9E3779B97F4A7C15ULL + 2));
        const double jitter = 1.0 + 0.06 * (uniform01(rng) - 0.5);
        const double sex_scale = sex == Sex::F ? 1.01 : 1.0;
        const double frac = 0.05 + 0.10 * uniform01(rng);
        std::vector<Knot> knots;
        for (int age = 20; age <= 95; age += 5) {
          const double x = std::pow((age - 20) / 75.0, 1.5);
          const double shape = expands ? 1.0 + rate * x : 1.0 - rate * x;
          const double mu = base * jitter * sex_scale * shape;
          knots.push_back({static_cast<double>(age), mu, frac * mu});
        }
        curves.emplace_back(StructureKey{e.name, h}, sex, std::move(knots));
      }
    }
  }
  return NormativeModel(std::move(curves));
}

}  // namespace neurodx
