#pragma once

#include <cstdlib>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "neurodx/consensus.hpp"
#include "neurodx/io.hpp"

namespace support {

inline std::filesystem::path fixture(const std::string& name) { return std::filesystem::path(NEURODX_FIXTURES_DIR) / name; }
inline std::filesystem::path golden(const std::string& name) { return std::filesystem::path(NEURODX_GOLDEN_DIR) / name; }

inline const neurodx::NormativeModel& fixture_model() {
  static const auto m = neurodx::NormativeModel::load_csv(fixture("normative_model.csv"));
  return m;
}

inline neurodx::PipelineContext fixture_context() {
  neurodx::PipelineContext ctx;
  ctx.model = fixture_model();
  return ctx;
}

inline const std::vector<std::string>& curated_names() {
  static const std::vector<std::string> v{"cn", "ad", "bvftd", "nfvppa", "svppa"};
  return v;
}

inline constexpr std::uint64_t kGoldenSeed = 11;
inline constexpr int kGoldenVariants = 3;

inline std::string golden_name(const std::string& subject, int variant) {
  return subject + "_" + std::to_string(variant + 1) + ".txt";
}

inline bool update_goldens() {
  const char* v = std::getenv("NEURODX_UPDATE_GOLDEN");
  return v && *v && std::string(v) != "0";
}

// Subject whose every taxonomy structure sits at a random SDS under `model`.
inline neurodx::SubjectVolumetrics random_subject(std::mt19937_64& rng, const std::string& id,
                                                  const neurodx::NormativeModel& model) {
  using namespace neurodx;
  std::uniform_real_distribution<double> age(50, 88), icv(1.2e6, 1.6e6), u(0, 1);
  std::normal_distribution<double> z(0.0, 1.0);
  SubjectVolumetrics s;
  s.subject_id = id;
  s.age_years = age(rng);
  s.sex = u(rng) < 0.5 ? Sex::F : Sex::M;
  s.icv_mm3 = icv(rng);
  const double spread = 0.5 + 2.5 * u(rng);
  for (const auto& key : RegionTaxonomy::builtin().structures()) {
    const auto n = model.lookup(key, s.age_years, s.sex);
    const double sds = z(rng) * spread;
    s.regions.push_back({key.name, key.hemisphere, std::max(0.0, (n.mu + sds * n.sigma) * s.icv_mm3)});
  }
  return s;
}

}  // namespace support
