#include "neurodx/consensus.hpp"

#include <algorithm>
#include <atomic>
#include <fstream>
#include <random>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "neurodx/error.hpp"
#include "neurodx/io.hpp"

namespace neurodx {

using nlohmann::json;

VoteSample vote_sample(const ParsedCompletion& parsed) {
  VoteSample v;
  if (auto top = top_diagnosis(parsed)) v.top = top->cls;
  for (const auto& e : parsed.ranked)
    if (e.mapped) v.ranking.emplace_back(e.rank, *e.mapped);
  return v;
}

VoteResult majority_vote(std::span<const VoteSample> samples) {
  VoteResult r;
  std::array<long, kNumClasses> borda{};
  for (const auto& s : samples) {
    if (!s.top) {
      ++r.excluded;
      continue;
    }
    ++r.histogram[index_of(*s.top)];
    std::array<int, kNumClasses> best;
    best.fill(0);
    for (const auto& [rank, cls] : s.ranking) {
      int& b = best[index_of(cls)];
      if (b == 0 || rank < b) b = rank;
    }
    for (std::size_t k = 0; k < kNumClasses; ++k)
      if (best[k] > 0) borda[k] += std::max(0, static_cast<int>(kNumClasses) - best[k]);
  }
  const int top = *std::max_element(r.histogram.begin(), r.histogram.end());
  if (top == 0) throw Error(ErrorCode::NoValidSamples, "no sample has a usable top diagnosis");
  std::vector<std::size_t> tied;
  for (std::size_t k = 0; k < kNumClasses; ++k)
    if (r.histogram[k] == top) tied.push_back(k);
  r.tie_broken = tied.size() > 1;
  std::size_t winner = tied.front();
  for (std::size_t k : tied)
    if (borda[k] > borda[winner]) winner = k;
  r.winner = kAllClasses[winner];
  return r;
}

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

json histogram_json(const ClassCounts& h) {
  json o = json::object();
  for (DiagnosisClass c : kAllClasses) o[std::string(class_id(c))] = h[index_of(c)];
  return o;
}

}  // namespace

std::uint64_t sample_seed(std::uint64_t case_seed, int report_index) {
  return splitmix64(case_seed ^ splitmix64(static_cast<std::uint64_t>(report_index) + 1));
}

json CasePrediction::to_json() const {
  json s = json::array();
  for (const auto& r : samples) {
    json o = {{"report_index", r.report_index}, {"sample_index", r.sample_index}};
    o["top"] = r.top ? json(class_id(*r.top)) : json(nullptr);
    o["text"] = r.text;
    s.push_back(std::move(o));
  }
  return {{"subject_id", subject_id},
          {"consensus", class_id(consensus)},
          {"consensus_name", display_name(consensus)},
          {"tie_broken", tie_broken},
          {"vote_histogram", histogram_json(vote_histogram)},
          {"excluded", excluded},
          {"supporting_sample", supporting_sample},
          {"supporting_reasoning", supporting_reasoning},
          {"samples", s}};
}

CasePrediction run_case(const SubjectVolumetrics& subject, const PipelineContext& ctx, CompletionSource& source,
                        SamplingConfig sampling, int n_reports, int n_samples, std::uint64_t seed) {
  if (n_reports < 1) throw Error(ErrorCode::InvalidConfig, "n_reports must be positive", "reports");
  if (n_samples < 1) throw Error(ErrorCode::InvalidConfig, "n_samples must be positive", "samples");
  sampling.n_samples = n_samples;
  validate(sampling);

  const SdsTable table = sds_table(subject, ctx.model, ctx.taxonomy);
  const auto reports = generate_report_variants(subject.subject_id, table.records, ctx.taxonomy, ctx.scale, n_reports,
                                                seed, ctx.report_options, ctx.templates);
  CasePrediction out;
  out.subject_id = subject.subject_id;
  for (int r = 0; r < n_reports; ++r) {
    const PromptBundle prompt = build_prompt(reports[static_cast<std::size_t>(r)], ctx.prompt);
    SamplingConfig cfg = sampling;
    cfg.seed = sample_seed(seed, r);
    std::vector<std::string> texts;
    try {
      texts = source.complete(prompt, cfg);
    } catch (ClientError& e) {
      e.report_index = r;
      throw;
    }
    if (static_cast<int>(texts.size()) != n_samples)
      throw ClientError(ErrorCode::MalformedResponse,
                        "expected " + std::to_string(n_samples) + " completions, got " + std::to_string(texts.size()),
                        1);
    for (int k = 0; k < n_samples; ++k) {
      SampleRecord rec;
      rec.report_index = r;
      rec.sample_index = k;
      rec.text = std::move(texts[static_cast<std::size_t>(k)]);
      rec.parsed = parse_completion(rec.text);
      if (auto top = top_diagnosis(rec.parsed)) rec.top = top->cls;
      out.samples.push_back(std::move(rec));
    }
  }

  std::vector<VoteSample> votes;
  for (const auto& s : out.samples) votes.push_back(vote_sample(s.parsed));
  const VoteResult vr = majority_vote(votes);
  out.consensus = vr.winner;
  out.tie_broken = vr.tie_broken;
  out.vote_histogram = vr.histogram;
  out.excluded = vr.excluded;

  std::vector<int> aligned;
  for (std::size_t i = 0; i < out.samples.size(); ++i)
    if (out.samples[i].top == out.consensus) aligned.push_back(static_cast<int>(i));
  std::mt19937_64 rng(splitmix64(seed ^ 0x5u));
  out.supporting_sample = aligned[uniform_index(rng, aligned.size())];
  const auto& think = out.samples[static_cast<std::size_t>(out.supporting_sample)].parsed.think_text;
  out.supporting_reasoning = think.value_or("");
  return out;
}

// ---- metrics ----

EvaluationResult evaluate(std::span<const std::pair<DiagnosisClass, DiagnosisClass>> gold_pred) {
  if (gold_pred.empty()) throw Error(ErrorCode::EmptyInput, "no predictions to evaluate");
  EvaluationResult r;
  for (const auto& [g, p] : gold_pred) ++r.confusion[index_of(g)][index_of(p)];
  r.n = static_cast<long>(gold_pred.size());
  double recall_sum = 0.0;
  int present = 0;
  double f1_sum = 0.0;
  for (std::size_t k = 0; k < kNumClasses; ++k) {
    long tp = r.confusion[k][k];
    long row = 0, col = 0;
    for (std::size_t j = 0; j < kNumClasses; ++j) {
      row += r.confusion[k][j];
      col += r.confusion[j][k];
    }
    r.precision[k] = col > 0 ? static_cast<double>(tp) / static_cast<double>(col) : 0.0;
    r.recall[k] = row > 0 ? static_cast<double>(tp) / static_cast<double>(row) : 0.0;
    const double pr = r.precision[k] + r.recall[k];
    r.per_class_f1[k] = pr > 0.0 ? 2.0 * r.precision[k] * r.recall[k] / pr : 0.0;
    f1_sum += r.per_class_f1[k];
    if (row > 0) {
      recall_sum += r.recall[k];
      ++present;
    }
  }
  r.macro_f1 = f1_sum / static_cast<double>(kNumClasses);
  r.balanced_accuracy = recall_sum / static_cast<double>(present);
  return r;
}

json EvaluationResult::to_json() const {
  json per = json::object();
  for (DiagnosisClass c : kAllClasses) {
    const std::size_t k = index_of(c);
    per[std::string(class_id(c))] = {{"precision", precision[k]}, {"recall", recall[k]}, {"f1", per_class_f1[k]}};
  }
  json conf = json::array();
  for (const auto& row : confusion) conf.push_back(row);
  json labels = json::array();
  for (DiagnosisClass c : kAllClasses) labels.push_back(class_id(c));
  return {{"n", n},
          {"balanced_accuracy", balanced_accuracy},
          {"macro_f1", macro_f1},
          {"per_class", per},
          {"labels", labels},
          {"confusion", conf}};
}

std::string EvaluationResult::confusion_csv() const {
  std::ostringstream out;
  out << "gold\\pred";
  for (DiagnosisClass c : kAllClasses) out << ',' << class_id(c);
  out << '\n';
  for (DiagnosisClass g : kAllClasses) {
    out << class_id(g);
    for (DiagnosisClass p : kAllClasses) out << ',' << confusion[index_of(g)][index_of(p)];
    out << '\n';
  }
  return out.str();
}

// ---- manifest ----

std::vector<ManifestEntry> load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open manifest", path.string());
  const auto dir = path.parent_path();
  std::vector<ManifestEntry> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = path.string() + ":" + std::to_string(lineno);
    json doc = json::parse(line, nullptr, false);
    if (doc.is_discarded() || !doc.is_object()) throw Error(ErrorCode::MalformedFile, "not a JSON object", where);
    auto str = [&](const char* key) {
      auto it = doc.find(key);
      if (it == doc.end() || !it->is_string())
        throw Error(ErrorCode::MissingField, std::string(key) + " must be a string", where);
      return it->get<std::string>();
    };
    ManifestEntry e;
    e.subject_id = str("subject_id");
    const std::string gold = str("gold");
    auto cls = parse_class_id(gold);
    if (!cls) cls = map_label(gold);
    if (!cls) throw Error(ErrorCode::MalformedFile, "unknown gold class " + gold, where);
    e.gold = *cls;
    std::filesystem::path vp = str("volumes_path");
    e.volumes_path = vp.is_absolute() ? vp : dir / vp;
    out.push_back(std::move(e));
  }
  if (out.empty()) throw Error(ErrorCode::EmptyInput, "manifest lists no cases", path.string());
  return out;
}

ManifestRun run_manifest(const std::vector<ManifestEntry>& entries, const PipelineContext& ctx,
                         CompletionSource& source, const SamplingConfig& sampling, int n_reports, int n_samples,
                         std::uint64_t seed, int jobs) {
  ManifestRun run;
  run.cases.resize(entries.size());
  std::vector<std::exception_ptr> errors(entries.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < entries.size();) {
      CaseOutcome& c = run.cases[i];
      c.entry = entries[i];
      try {
        const SubjectVolumetrics s = load_subject(c.entry.volumes_path);
        c.prediction = run_case(s, ctx, source, sampling, n_reports, n_samples, seed + i);
      } catch (const Error& e) {
        if (e.code() == ErrorCode::NoValidSamples) c.error = e.what();
        else errors[i] = std::current_exception();
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t n_threads = std::clamp<std::size_t>(static_cast<std::size_t>(std::max(jobs, 1)), 1, entries.size());
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < n_threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);

  std::vector<std::pair<DiagnosisClass, DiagnosisClass>> pairs;
  for (const auto& c : run.cases) {
    if (c.prediction) pairs.emplace_back(c.entry.gold, c.prediction->consensus);
    else ++run.abstained;
  }
  if (!pairs.empty()) run.metrics = evaluate(pairs);
  return run;
}

}  // namespace neurodx
