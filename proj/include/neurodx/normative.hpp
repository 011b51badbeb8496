#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "neurodx/volumetrics.hpp"

namespace neurodx {

struct Knot {
  double age_years = 0.0;
  double mu = 0.0;
  double sigma = 0.0;

  bool operator==(const Knot&) const = default;
};

// Piecewise-linear lifespan curve of a structure's volume ratio for one sex.
class NormativeCurve {
 public:
  // Requires >= 2 knots, strictly increasing ages and sigma > 0 everywhere.
  NormativeCurve(StructureKey structure, Sex sex, std::vector<Knot> knots);

  const StructureKey& structure() const { return structure_; }
  Sex sex() const { return sex_; }
  const std::vector<Knot>& knots() const { return knots_; }

  bool operator==(const NormativeCurve&) const = default;

 private:
  StructureKey structure_;
  Sex sex_;
  std::vector<Knot> knots_;
};

struct NormativeLookup {
  double mu = 0.0;
  double sigma = 0.0;
  bool extrapolated = false;
};

class NormativeModel {
 public:
  NormativeModel() = default;
  explicit NormativeModel(std::vector<NormativeCurve> curves);

  // Linear interpolation between bracketing knots. Ages outside the knot range
  // clamp to the nearest knot and report extrapolated = true.
  // Throws UnknownStructure, or UnknownSex when only the other sex has a curve.
  NormativeLookup lookup(const StructureKey& structure, double age_years, Sex sex) const;

  bool has_curve(const StructureKey& structure, Sex sex) const;
  const std::map<std::pair<StructureKey, Sex>, NormativeCurve>& curves() const { return curves_; }
  // (min, max) age over all curves; (0, 0) for an empty model.
  std::pair<double, double> age_range() const;

  // Paired taxonomy entries lacking a left or right curve for either sex.
  std::vector<std::pair<StructureKey, Sex>> missing_curves(const RegionTaxonomy& t) const;

  // CSV: structure,hemisphere,sex,age_years,mu,sigma with a header row.
  static NormativeModel read_csv(std::istream& in);
  static NormativeModel load_csv(const std::filesystem::path& path);
  void write_csv(std::ostream& out) const;

  bool operator==(const NormativeModel&) const = default;

 private:
  std::map<std::pair<StructureKey, Sex>, NormativeCurve> curves_;
};

// (ratio - mu) / sigma. Throws NonPositiveSigma unless sigma > 0 and finite.
double compute_sds(double ratio, double mu, double sigma);

struct SdsRecord {
  std::string region_name;
  Hemisphere hemisphere = Hemisphere::Midline;
  double ratio = 0.0;
  double mu = 0.0;
  double sigma = 0.0;
  double sds = 0.0;
  bool extrapolated = false;

  StructureKey key() const { return {region_name, hemisphere}; }
  bool operator==(const SdsRecord&) const = default;
};

struct SdsTable {
  std::vector<SdsRecord> records;
  // One line per skipped region (no curve for this structure and sex).
  std::vector<std::string> warnings;
};

// Records in subject order.
SdsTable sds_table(const SubjectVolumetrics& s, const NormativeModel& m);
// Records in taxonomy order; regions outside the taxonomy follow in subject order.
SdsTable sds_table(const SubjectVolumetrics& s, const NormativeModel& m, const RegionTaxonomy& t);

// Test-fixture curves for every taxonomy structure and both sexes on ages 20..95.
// Tissue curves decline monotonically with age, ventricular curves expand;
// sigma is a fixed per-curve fraction of mu in [5%, 15%]. Deterministic per seed.
NormativeModel synth_normative_model(std::uint64_t seed, const RegionTaxonomy& taxonomy);

}  // namespace neurodx
