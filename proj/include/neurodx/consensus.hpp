#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "neurodx/diagnosis.hpp"
#include "neurodx/llm_client.hpp"
#include "neurodx/normative.hpp"
#include "neurodx/reporting.hpp"

namespace neurodx {

using ClassCounts = std::array<int, kNumClasses>;

struct VoteSample {
  std::optional<DiagnosisClass> top;
  // (rank, class) pairs of the mapped entries.
  std::vector<std::pair<int, DiagnosisClass>> ranking;
};

VoteSample vote_sample(const ParsedCompletion& parsed);

struct VoteResult {
  DiagnosisClass winner = DiagnosisClass::CN;
  bool tie_broken = false;
  ClassCounts histogram{};
  int excluded = 0;  // samples without a mapped top class
};

// Plurality over samples with a top class. Ties go to the higher Borda score
// (rank r earns K - r points, best rank per class and sample), then to the
// fixed order CN < AD < bvFTD < nfvPPA < svPPA. Throws NoValidSamples.
VoteResult majority_vote(std::span<const VoteSample> samples);

struct SampleRecord {
  int report_index = 0;
  int sample_index = 0;
  std::string text;
  ParsedCompletion parsed;
  std::optional<DiagnosisClass> top;
};

struct CasePrediction {
  std::string subject_id;
  std::vector<SampleRecord> samples;
  DiagnosisClass consensus = DiagnosisClass::CN;
  bool tie_broken = false;
  std::string supporting_reasoning;
  int supporting_sample = -1;  // index into samples
  ClassCounts vote_histogram{};
  int excluded = 0;

  nlohmann::json to_json() const;
};

struct PipelineContext {
  RegionTaxonomy taxonomy = RegionTaxonomy::builtin();
  NormativeModel model;
  SeverityScale scale = SeverityScale::defaults();
  TemplateLibrary templates = TemplateLibrary::builtin();
  PromptTemplate prompt = PromptTemplate::builtin();
  ReportOptions report_options;
};

// Sampling seed for report r of a case run with the given seed.
std::uint64_t sample_seed(std::uint64_t case_seed, int report_index);

// n_reports report variants x n_samples completions each, pooled into one
// vote. Client errors are rethrown with report_index/sample_index set.
CasePrediction run_case(const SubjectVolumetrics& subject, const PipelineContext& ctx, CompletionSource& source,
                        SamplingConfig sampling, int n_reports, int n_samples, std::uint64_t seed);

struct EvaluationResult {
  // rows = gold, columns = predicted, in kAllClasses order.
  std::array<std::array<long, kNumClasses>, kNumClasses> confusion{};
  std::array<double, kNumClasses> precision{};
  std::array<double, kNumClasses> recall{};
  std::array<double, kNumClasses> per_class_f1{};
  double macro_f1 = 0.0;
  double balanced_accuracy = 0.0;
  long n = 0;

  nlohmann::json to_json() const;
  std::string confusion_csv() const;
};

// BACC = mean recall over classes present in gold; F1 = 0 when P + R = 0;
// macro F1 over all five classes. Throws EmptyInput.
EvaluationResult evaluate(std::span<const std::pair<DiagnosisClass, DiagnosisClass>> gold_pred);

struct ManifestEntry {
  std::string subject_id;
  DiagnosisClass gold = DiagnosisClass::CN;
  std::filesystem::path volumes_path;  // resolved against the manifest directory
};

// JSONL {subject_id, gold, volumes_path}. Throws MalformedFile naming the line.
std::vector<ManifestEntry> load_manifest(const std::filesystem::path& path);

struct CaseOutcome {
  ManifestEntry entry;
  std::optional<CasePrediction> prediction;  // empty when no sample was usable
  std::string error;
};

struct ManifestRun {
  std::vector<CaseOutcome> cases;  // manifest order
  EvaluationResult metrics;
  int abstained = 0;  // cases without a usable sample, left out of the metrics
};

// Case i runs with seed + i. Cases run on up to `jobs` threads.
ManifestRun run_manifest(const std::vector<ManifestEntry>& entries, const PipelineContext& ctx,
                         CompletionSource& source, const SamplingConfig& sampling, int n_reports, int n_samples,
                         std::uint64_t seed, int jobs = 1);

}  // namespace neurodx
