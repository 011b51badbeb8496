// neurodx command-line tool.
#include <csignal>
#include <pthread.h>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <mutex>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "neurodx/consensus.hpp"
#include "neurodx/error.hpp"
#include "neurodx/grpo.hpp"
#include "neurodx/io.hpp"
#include "neurodx/reward_service.hpp"
#include "neurodx/rewards.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace neurodx;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitRuntime = 2;
constexpr std::uint64_t kDefaultModelSeed = 7;

// Flat JSON config: {"option": value, ...}, optionally nested under the
// subcommand name. Keys are long option names without dashes.
class JsonConfig : public CLI::Config {
 public:
  explicit JsonConfig(const CLI::App* app) : app_(app) {}

  std::string to_config(const CLI::App* app, bool, bool, std::string) const override {
    json out = json::object();
    for (const CLI::Option* opt : app->get_options()) {
      if (opt->get_lnames().empty() || !opt->get_configurable()) continue;
      const auto& name = opt->get_lnames().front();
      if (name == "help" || name == "config") continue;
      if (opt->count() > 0) {
        auto r = opt->results();
        out[name] = r.size() == 1 ? json(r.front()) : json(r);
      } else if (!opt->get_default_str().empty()) {
        out[name] = opt->get_default_str();
      }
    }
    return out.dump(2) + "\n";
  }

  std::vector<CLI::ConfigItem> from_config(std::istream& in) const override {
    json doc = json::parse(in, nullptr, false);
    if (doc.is_discarded() || !doc.is_object()) throw CLI::ConversionError("config file must be a JSON object");
    std::string sub;
    if (auto subs = app_->get_subcommands(); !subs.empty()) sub = subs.front()->get_name();
    std::vector<CLI::ConfigItem> items;
    auto add = [&](const std::string& key, const json& v) {
      CLI::ConfigItem item;
      if (!sub.empty()) item.parents = {sub};
      item.name = key;
      if (v.is_array()) {
        for (const auto& e : v) item.inputs.push_back(scalar(e));
      } else {
        item.inputs.push_back(scalar(v));
      }
      items.push_back(std::move(item));
    };
    for (const auto& [k, v] : doc.items()) {
      if (v.is_object()) {
        if (k != sub) continue;
        for (const auto& [k2, v2] : v.items()) add(k2, v2);
      } else {
        add(k, v);
      }
    }
    return items;
  }

 private:
  static std::string scalar(const json& v) {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
    return v.dump();
  }
  const CLI::App* app_;
};

json echo_options(const CLI::App* sub) {
  return json::parse(JsonConfig(nullptr).to_config(sub, true, false, ""));
}

void write_output(const std::string& path, std::string_view content) {
  if (path.empty() || path == "-") {
    std::cout << content;
    std::cout.flush();
    return;
  }
  const fs::path p(path);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  write_file_atomic(p, content);
}

void write_echo(const fs::path& where, const CLI::App* sub) {
  json echo = {{"command", sub->get_name()}, {"version", version()}, {"options", echo_options(sub)}};
  if (where.has_parent_path()) fs::create_directories(where.parent_path());
  write_file_atomic(where, echo.dump(2) + "\n");
}

void warn(const std::string& msg) { std::cerr << "warning: " << msg << "\n"; }

// ---- shared pipeline options ----

struct PipelineOpts {
  std::string taxonomy;
  std::string normative;
  std::string scale;
  std::vector<std::string> templates;
  std::string prompt;
  double asymmetry = 1.0;
  double diffuse = 0.7;

  void add(CLI::App* app, bool with_reporting, bool with_prompt) {
    app->add_option("--taxonomy", taxonomy, "Region taxonomy JSON (default: built-in)")->check(CLI::ExistingFile);
    app->add_option("--normative-model", normative, "Normative model CSV (default: synthetic, seed 7)")
        ->check(CLI::ExistingFile);
    if (with_reporting) {
      app->add_option("--severity-scale", scale, "Severity scale JSON (default: built-in)")->check(CLI::ExistingFile);
      app->add_option("--templates", templates, "Additional template set JSON files")->check(CLI::ExistingFile);
      app->add_option("--asymmetry-threshold", asymmetry, "Minimum |left - right| SDS for an asymmetry note")
          ->capture_default_str();
      app->add_option("--diffuse-fraction", diffuse, "Share of lobe subregions for a diffuse pattern")
          ->capture_default_str();
    }
    if (with_prompt) app->add_option("--prompt", prompt, "Prompt resource file (default: built-in)")->check(CLI::ExistingFile);
  }

  PipelineContext context() const {
    PipelineContext ctx;
    if (!taxonomy.empty()) ctx.taxonomy = RegionTaxonomy::load(taxonomy);
    if (!normative.empty()) {
      ctx.model = NormativeModel::load_csv(normative);
    } else {
      warn("no --normative-model given; using the synthetic test model (seed 7), not real normative data");
      ctx.model = synth_normative_model(kDefaultModelSeed, ctx.taxonomy);
    }
    for (const auto& [key, sex] : ctx.model.missing_curves(ctx.taxonomy))
      warn("normative model lacks " + display_name(key) + " (" + std::string(to_string(sex)) + ")");
    if (!scale.empty()) ctx.scale = SeverityScale::load(scale);
    for (const auto& t : templates) ctx.templates.load_file(t);
    if (!prompt.empty()) ctx.prompt = PromptTemplate::parse(read_text_file(prompt));
    if (!(asymmetry >= 0.0)) throw Error(ErrorCode::InvalidConfig, "must be >= 0", "asymmetry-threshold");
    if (!(diffuse > 0.0 && diffuse <= 1.0)) throw Error(ErrorCode::InvalidConfig, "must be in (0, 1]", "diffuse-fraction");
    ctx.report_options = {asymmetry, diffuse};
    return ctx;
  }
};

// ---- endpoint options ----

struct EndpointOpts {
  std::string endpoint;
  std::string model_id = "default";
  std::string mock_script;
  int timeout_ms = 120000;
  int max_attempts = 3;
  int max_in_flight = 4;
  double temperature = 0.9;
  int max_tokens = 3000;
  std::string request_log;

  void add(CLI::App* app) {
    app->add_option("--endpoint", endpoint, "Chat-completions base URL, or 'mock' for the built-in mock")->required();
    app->add_option("--model-id", model_id, "Model identifier sent with each request")->capture_default_str();
    app->add_option("--mock-script", mock_script, "Mock script JSON used with --endpoint mock")->check(CLI::ExistingFile);
    app->add_option("--timeout-ms", timeout_ms, "Per-request timeout")->capture_default_str();
    app->add_option("--max-attempts", max_attempts, "Attempts per request")->capture_default_str();
    app->add_option("--max-in-flight", max_in_flight, "Concurrent requests")->capture_default_str();
    app->add_option("--temperature", temperature, "Sampling temperature")->capture_default_str();
    app->add_option("--max-tokens", max_tokens, "Maximum new tokens per completion")->capture_default_str();
    app->add_option("--request-log", request_log, "Append redacted request/response lines to this file");
  }

  struct Live {
    std::unique_ptr<MockServer> mock;
    std::unique_ptr<LlmClient> client;
    std::shared_ptr<std::ofstream> log;
  };

  Live connect() const {
    Live live;
    ClientConfig cfg;
    if (endpoint == "mock") {
      MockScript script = mock_script.empty() ? MockScript{} : MockScript::load(mock_script);
      live.mock = std::make_unique<MockServer>(std::move(script));
      cfg.endpoint = live.mock->url();
    } else {
      if (!mock_script.empty()) warn("--mock-script is ignored unless --endpoint mock");
      cfg.endpoint = endpoint;
    }
    cfg.model_id = model_id;
    cfg.api_key = api_key_from_env();
    cfg.timeout = std::chrono::milliseconds(timeout_ms);
    cfg.max_attempts = max_attempts;
    cfg.max_in_flight = max_in_flight;
    if (!request_log.empty()) {
      live.log = std::make_shared<std::ofstream>(request_log, std::ios::app);
      if (!*live.log) throw Error(ErrorCode::Io, "cannot open request log", request_log);
      auto log = live.log;
      auto mu = std::make_shared<std::mutex>();
      cfg.log = [log, mu](std::string_view line) {
        std::lock_guard lock(*mu);
        *log << line << '\n';
        log->flush();
      };
    }
    live.client = std::make_unique<LlmClient>(cfg);
    return live;
  }

  SamplingConfig sampling() const {
    SamplingConfig s;
    s.temperature = temperature;
    s.max_new_tokens = max_tokens;
    return s;
  }
};

std::string sds_csv(const SdsTable& t) {
  std::ostringstream out;
  out.precision(17);
  out << "region,hemisphere,ratio,mu,sigma,sds,extrapolated\n";
  for (const auto& r : t.records)
    out << r.region_name << ',' << to_string(r.hemisphere) << ',' << r.ratio << ',' << r.mu << ',' << r.sigma << ','
        << r.sds << ',' << (r.extrapolated ? "true" : "false") << '\n';
  return out.str();
}

std::string jsonl(const std::vector<json>& docs) {
  std::string out;
  for (const auto& d : docs) out += d.dump() + "\n";
  return out;
}

// Blocked before any server thread starts so that sigwait receives them.
sigset_t termination_signals() {
  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &set, nullptr);
  return set;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Volumetric MRI reports, LLM differential diagnosis and GRPO reward tooling"};
  app.require_subcommand(1);
  app.config_formatter(std::make_shared<JsonConfig>(&app));
  app.set_config("--config", "", "JSON file of option values; command-line flags take precedence");
  app.set_version_flag("--version", [] {
    return json{{"name", "neurodx"},
                {"version", version()},
                {"prompt", PromptTemplate::builtin().version()},
                {"templates", TemplateLibrary::builtin().ids()}}
        .dump();
  });

  std::uint64_t seed = 0;
  std::string subject_path, out, out_dir;
  std::string report_dir = ".";

  // sds
  PipelineOpts sds_p;
  auto* sds = app.add_subcommand("sds", "Compute the SDS table of one subject");
  sds->add_option("--subject", subject_path, "Subject volumetrics JSON")->required()->check(CLI::ExistingFile);
  sds->add_option("--out", out, "Output CSV (default: stdout)");
  sds_p.add(sds, false, false);

  // report
  PipelineOpts rep_p;
  int n_reports = 3;
  std::string template_set;
  auto* report = app.add_subcommand("report", "Render radiology report variants for one subject");
  report->add_option("--subject", subject_path, "Subject volumetrics JSON")->required()->check(CLI::ExistingFile);
  report->add_option("--n", n_reports, "Number of report variants")->capture_default_str();
  report->add_option("--template-set", template_set, "Render a single report with this template set");
  report->add_option("--seed", seed, "Rendering seed")->capture_default_str();
  report->add_option("--out-dir", report_dir, "Output directory")->capture_default_str();
  rep_p.add(report, true, false);

  // diagnose
  PipelineOpts dx_p;
  EndpointOpts dx_e;
  int n_samples = 3;
  auto* diagnose = app.add_subcommand("diagnose", "Dual-sampling diagnosis of one subject");
  diagnose->add_option("--subject", subject_path, "Subject volumetrics JSON")->required()->check(CLI::ExistingFile);
  diagnose->add_option("--reports", n_reports, "Report variants per case")->capture_default_str();
  diagnose->add_option("--samples", n_samples, "Completions per report")->capture_default_str();
  diagnose->add_option("--seed", seed, "Case seed")->capture_default_str();
  diagnose->add_option("--out", out, "Prediction JSON (default: stdout)");
  dx_p.add(diagnose, true, true);
  dx_e.add(diagnose);

  // evaluate
  PipelineOpts ev_p;
  EndpointOpts ev_e;
  std::string manifest;
  int jobs = 1;
  auto* evaluate_cmd = app.add_subcommand("evaluate", "Run a dataset manifest and compute metrics");
  evaluate_cmd->add_option("--manifest", manifest, "Manifest JSONL")->required()->check(CLI::ExistingFile);
  evaluate_cmd->add_option("--reports", n_reports, "Report variants per case")->capture_default_str();
  evaluate_cmd->add_option("--samples", n_samples, "Completions per report")->capture_default_str();
  evaluate_cmd->add_option("--seed", seed, "Base seed; case i uses seed + i")->capture_default_str();
  evaluate_cmd->add_option("--jobs", jobs, "Cases processed in parallel")->capture_default_str();
  evaluate_cmd->add_option("--out-dir", out_dir, "Output directory (default: metrics JSON on stdout only)");
  ev_p.add(evaluate_cmd, true, true);
  ev_e.add(evaluate_cmd);

  // reward
  std::string in_path;
  bool with_adv = false;
  auto* reward = app.add_subcommand("reward", "Score a completions JSONL file");
  reward->add_option("--in", in_path, "Input JSONL with query_id, text, gold")->required()->check(CLI::ExistingFile);
  reward->add_option("--out", out, "Output JSONL (default: stdout)");
  reward->add_flag("--advantages", with_adv, "Add group advantages per query_id");

  // serve
  ServiceConfig svc;
  std::string access_log;
  auto* serve = app.add_subcommand("serve", "Run the HTTP reward service");
  serve->add_option("--host", svc.host, "Bind address")->capture_default_str();
  serve->add_option("--port", svc.port, "Port (0 picks a free port)")->capture_default_str()->envname("NEURODX_REWARD_PORT");
  serve->add_option("--payload-limit", svc.payload_limit, "Maximum request body in bytes")
      ->capture_default_str()
      ->envname("NEURODX_REWARD_PAYLOAD_LIMIT");
  serve->add_option("--access-log", access_log, "JSONL access log file (default: stderr)");

  // grpo-sim
  grpo::SandboxConfig sim;
  auto* grpo_cmd = app.add_subcommand("grpo-sim", "Run the toy GRPO training loop");
  grpo_cmd->add_option("--steps", sim.steps, "Training steps")->capture_default_str();
  grpo_cmd->add_option("--seed", sim.seed, "Seed")->capture_default_str();
  grpo_cmd->add_option("--group-size", sim.G, "Completions per group (G)")->capture_default_str();
  grpo_cmd->add_option("--epsilon", sim.epsilon, "Clip range")->capture_default_str();
  grpo_cmd->add_option("--beta", sim.beta, "KL penalty weight")->capture_default_str();
  grpo_cmd->add_option("--learning-rate", sim.learning_rate, "Step size")->capture_default_str();
  grpo_cmd->add_option("--temperature", sim.temperature, "Sampling temperature")->capture_default_str();
  grpo_cmd->add_option("--cases", sim.n_cases, "Synthetic dataset size")->capture_default_str();
  grpo_cmd->add_option("--noise", sim.noise, "Per-feature grade noise probability")->capture_default_str();
  grpo_cmd->add_option("--inner-updates", sim.inner_updates, "Gradient steps per group")->capture_default_str();
  grpo_cmd->add_option("--out", out, "Curve CSV (default: stdout)");

  // synth-model
  std::uint64_t model_seed = kDefaultModelSeed;
  std::string taxonomy_path;
  auto* synth = app.add_subcommand("synth-model", "Write the synthetic normative model used by the test fixtures");
  synth->add_option("--seed", model_seed, "Seed")->capture_default_str();
  synth->add_option("--taxonomy", taxonomy_path, "Region taxonomy JSON")->check(CLI::ExistingFile);
  synth->add_option("--out", out, "Output CSV (default: stdout)");

  // mock-serve
  std::string mock_script;
  int mock_port = 8080;
  auto* mock = app.add_subcommand("mock-serve", "Run the deterministic chat-completions mock");
  mock->add_option("--port", mock_port, "Port (0 picks a free port)")->capture_default_str();
  mock->add_option("--script", mock_script, "Mock script JSON")->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitValidation;
  }

  try {
    if (*sds) {
      const auto ctx = sds_p.context();
      const auto s = load_subject(subject_path);
      const auto cov = validate_against_taxonomy(s, ctx.taxonomy);
      for (const auto& k : cov.unknown) warn(display_name(k) + " is not in the region taxonomy");
      const auto t = sds_table(s, ctx.model, ctx.taxonomy);
      for (const auto& w : t.warnings) warn(w);
      write_output(out, sds_csv(t));
      if (!out.empty() && out != "-") write_echo(fs::path(out).concat(".config.json"), sds);
    } else if (*report) {
      const auto ctx = rep_p.context();
      const auto s = load_subject(subject_path);
      const auto t = sds_table(s, ctx.model, ctx.taxonomy);
      for (const auto& w : t.warnings) warn(w);
      std::vector<RadiologyReport> reports;
      if (!template_set.empty())
        reports.push_back(generate_report(s.subject_id, t.records, ctx.taxonomy, ctx.scale, template_set, seed,
                                          ctx.report_options, ctx.templates));
      else
        reports = generate_report_variants(s.subject_id, t.records, ctx.taxonomy, ctx.scale, n_reports, seed,
                                           ctx.report_options, ctx.templates);
      const fs::path dir(report_dir);
      fs::create_directories(dir);
      json variants = json::array();
      for (std::size_t i = 0; i < reports.size(); ++i) {
        const auto name = s.subject_id + "_report_" + std::to_string(i + 1) + ".txt";
        write_file_atomic(dir / name, reports[i].text);
        variants.push_back({{"file", name}, {"template_set", reports[i].template_set}, {"seed", reports[i].seed}});
      }
      json side = reports.front().to_json();
      side["variants"] = variants;
      write_file_atomic(dir / (s.subject_id + "_findings.json"), side.dump(2) + "\n");
      write_echo(dir / "config.json", report);
    } else if (*diagnose) {
      const auto ctx = dx_p.context();
      const auto s = load_subject(subject_path);
      auto live = dx_e.connect();
      const auto pred = run_case(s, ctx, *live.client, dx_e.sampling(), n_reports, n_samples, seed);
      write_output(out, pred.to_json().dump(2) + "\n");
      if (!out.empty() && out != "-") write_echo(fs::path(out).concat(".config.json"), diagnose);
    } else if (*evaluate_cmd) {
      const auto ctx = ev_p.context();
      const auto entries = load_manifest(manifest);
      auto live = ev_e.connect();
      const auto run = run_manifest(entries, ctx, *live.client, ev_e.sampling(), n_reports, n_samples, seed, jobs);
      std::vector<json> preds;
      for (const auto& c : run.cases) {
        json o = {{"subject_id", c.entry.subject_id}, {"gold", class_id(c.entry.gold)}};
        if (c.prediction) {
          o["prediction"] = c.prediction->to_json();
        } else {
          o["prediction"] = nullptr;
          o["error"] = c.error;
          warn(c.entry.subject_id + ": " + c.error);
        }
        preds.push_back(std::move(o));
      }
      json metrics = run.abstained < static_cast<int>(run.cases.size()) ? run.metrics.to_json() : json::object();
      metrics["cases"] = run.cases.size();
      metrics["abstained"] = run.abstained;
      if (out_dir.empty()) {
        std::cout << metrics.dump(2) << "\n";
      } else {
        const fs::path dir(out_dir);
        fs::create_directories(dir);
        write_file_atomic(dir / "predictions.jsonl", jsonl(preds));
        write_file_atomic(dir / "metrics.json", metrics.dump(2) + "\n");
        write_file_atomic(dir / "confusion.csv", run.metrics.confusion_csv());
        write_echo(dir / "config.json", evaluate_cmd);
      }
      std::cerr << "cases " << run.cases.size() << ", abstained " << run.abstained << ", BACC "
                << run.metrics.balanced_accuracy << ", macro-F1 " << run.metrics.macro_f1 << "\n";
    } else if (*reward) {
      std::ifstream in(in_path);
      if (!in) throw Error(ErrorCode::Io, "cannot open", in_path);
      std::ostringstream buf;
      const auto n = score_jsonl(in, buf, with_adv);
      write_output(out, buf.str());
      if (!out.empty() && out != "-") write_echo(fs::path(out).concat(".config.json"), reward);
      std::cerr << "scored " << n << " completions\n";
    } else if (*serve) {
      std::shared_ptr<std::ofstream> log;
      if (!access_log.empty()) {
        log = std::make_shared<std::ofstream>(access_log, std::ios::app);
        if (!*log) throw Error(ErrorCode::Io, "cannot open access log", access_log);
      }
      auto mu = std::make_shared<std::mutex>();
      svc.access_log = [log, mu](std::string_view line) {
        std::lock_guard lock(*mu);
        if (log) {
          *log << line << '\n';
          log->flush();
        } else {
          std::cerr << line << '\n';
        }
      };
      if (const char* s = std::getenv("NEURODX_REWARD_SECRET")) svc.shared_secret = s;
      const sigset_t set = termination_signals();
      RewardService service(svc);
      service.start();
      std::cerr << "reward service listening on http://" << svc.host << ":" << service.port() << "\n";
      int sig = 0;
      sigwait(&set, &sig);
      service.stop();
    } else if (*grpo_cmd) {
      const auto result = grpo::train(sim);
      std::ostringstream csv;
      grpo::write_curve_csv(csv, result.curve);
      write_output(out, csv.str());
      std::cerr << "sampled accuracy " << result.initial_accuracy << " -> " << result.final_accuracy << "\n";
      if (!out.empty() && out != "-") write_echo(fs::path(out).concat(".config.json"), grpo_cmd);
    } else if (*synth) {
      const RegionTaxonomy t = taxonomy_path.empty() ? RegionTaxonomy::builtin() : RegionTaxonomy::load(taxonomy_path);
      std::ostringstream csv;
      synth_normative_model(model_seed, t).write_csv(csv);
      write_output(out, csv.str());
    } else if (*mock) {
      MockScript script = mock_script.empty() ? MockScript{} : MockScript::load(mock_script);
      const sigset_t set = termination_signals();
      MockServer server(std::move(script), mock_port);
      std::cerr << "mock endpoint listening on " << server.url() << "\n";
      int sig = 0;
      sigwait(&set, &sig);
      server.stop();
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return is_validation_error(e.code()) ? kExitValidation : kExitRuntime;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitOk;
}
