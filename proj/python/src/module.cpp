// Python bindings. Structured results cross the boundary as JSON strings; the
// neurodx package decodes them.
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <nlohmann/json.hpp>

#include "neurodx/consensus.hpp"
#include "neurodx/error.hpp"
#include "neurodx/grpo.hpp"
#include "neurodx/reward_service.hpp"
#include "neurodx/rewards.hpp"

namespace py = pybind11;
using nlohmann::json;
using namespace neurodx;

namespace {

DiagnosisClass class_arg(const std::string& s) {
  if (auto c = parse_class_id(s)) return *c;
  if (auto c = map_label(s)) return *c;
  throw Error(ErrorCode::MissingField, "unknown diagnosis class: " + s, "gold");
}

NormativeModel model_arg(const std::string& path) {
  return path.empty() ? synth_normative_model(7, RegionTaxonomy::builtin()) : NormativeModel::load_csv(path);
}

json breakdown_json(const RewardBreakdown& b) {
  return {{"think_then_json", b.components.think_then_json},
          {"single_wellformed_json", b.components.single_wellformed_json},
          {"top_extractable", b.components.top_extractable},
          {"full_class_coverage", b.components.full_class_coverage},
          {"format_reward", b.format_reward},
          {"ambiguity_capped", b.ambiguity_capped},
          {"accuracy_reward", b.accuracy_reward},
          {"total", b.total}};
}

std::string sds_table_json(const std::string& subject, const std::string& model_path) {
  const auto s = parse_subject(json::parse(subject));
  const auto t = sds_table(s, model_arg(model_path), RegionTaxonomy::builtin());
  json rows = json::array();
  for (const auto& r : t.records)
    rows.push_back({{"region", r.region_name},
                    {"hemisphere", to_string(r.hemisphere)},
                    {"ratio", r.ratio},
                    {"mu", r.mu},
                    {"sigma", r.sigma},
                    {"sds", r.sds},
                    {"extrapolated", r.extrapolated}});
  return json{{"records", rows}, {"warnings", t.warnings}}.dump();
}

std::string reports_json(const std::string& subject, int n, std::uint64_t seed, const std::string& model_path) {
  const auto s = parse_subject(json::parse(subject));
  const auto& tax = RegionTaxonomy::builtin();
  const auto t = sds_table(s, model_arg(model_path), tax);
  json out = json::array();
  for (const auto& r : generate_report_variants(s.subject_id, t.records, tax, SeverityScale::defaults(), n, seed)) {
    json doc = r.to_json();
    doc["text"] = r.text;
    out.push_back(std::move(doc));
  }
  return out.dump();
}

std::string parse_json(const std::string& text) {
  const auto p = parse_completion(text);
  json out = {{"has_think", p.flags.has_think},
              {"think_then_json", p.think_then_json},
              {"single_json_block", p.flags.single_json_block},
              {"top_extractable", p.flags.top_extractable},
              {"full_coverage", p.flags.full_coverage},
              {"ambiguous_top", p.flags.ambiguous_top},
              {"json_block_count", p.json_block_count},
              {"top", nullptr}};
  if (auto top = top_diagnosis(p)) out["top"] = class_id(top->cls);
  json ranked = json::array();
  for (const auto& e : p.ranked)
    ranked.push_back({{"rank", e.rank},
                      {"label", e.raw_label},
                      {"class", e.mapped ? json(class_id(*e.mapped)) : json(nullptr)}});
  out["ranked"] = ranked;
  return out.dump();
}

std::string evaluate_json(const std::vector<std::pair<std::string, std::string>>& pairs) {
  std::vector<std::pair<DiagnosisClass, DiagnosisClass>> gp;
  for (const auto& [g, p] : pairs) gp.emplace_back(class_arg(g), class_arg(p));
  return evaluate(gp).to_json().dump();
}

std::string train_json(int steps, std::uint64_t seed, int group_size, double epsilon, double beta) {
  grpo::SandboxConfig cfg;
  cfg.steps = steps;
  cfg.seed = seed;
  cfg.G = group_size;
  cfg.epsilon = epsilon;
  cfg.beta = beta;
  const auto r = grpo::train(cfg);
  json curve = json::array();
  for (const auto& p : r.curve)
    curve.push_back({{"step", p.step},
                     {"mean_reward", p.mean_reward},
                     {"mean_accuracy_reward", p.mean_accuracy_reward},
                     {"mean_format_reward", p.mean_format_reward},
                     {"mean_len", p.mean_len},
                     {"kl", p.kl}});
  return json{{"initial_accuracy", r.initial_accuracy}, {"final_accuracy", r.final_accuracy}, {"curve", curve}}.dump();
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  static py::exception<Error> error(m, "NeurodxError", PyExc_ValueError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      PyErr_SetObject(error.ptr(), py::make_tuple(e.what(), std::string(to_string(e.code())), e.field()).ptr());
    } catch (const json::exception& e) {
      PyErr_SetString(PyExc_ValueError, e.what());
    }
  });

  m.def("version", [] { return std::string(version()); });
  m.def("compute_sds", &compute_sds, py::arg("ratio"), py::arg("mu"), py::arg("sigma"));
  m.def(
      "grade",
      [](double sds) {
        const auto g = grade(sds, SeverityScale::defaults());
        return py::make_tuple(SeverityScale::defaults().name(g.grade), std::string(to_string(g.direction)),
                              signed_severity(g));
      },
      py::arg("sds"));
  m.def("sds_table", &sds_table_json, py::arg("subject_json"), py::arg("normative_model") = "");
  m.def("generate_reports", &reports_json, py::arg("subject_json"), py::arg("n") = 3, py::arg("seed") = 0,
        py::arg("normative_model") = "");
  m.def("parse_completion", &parse_json, py::arg("text"));
  m.def(
      "score_completion",
      [](const std::string& text, const std::string& gold) {
        return breakdown_json(score_completion(text, class_arg(gold))).dump();
      },
      py::arg("text"), py::arg("gold"));
  m.def(
      "group_advantages", [](const std::vector<double>& r) { return group_advantages(r); }, py::arg("rewards"));
  m.def(
      "handle_rewards_request",
      [](const std::string& body) {
        const auto r = handle_rewards_request(body);
        return py::make_tuple(r.status, r.body.dump());
      },
      py::arg("body"));
  m.def("evaluate", &evaluate_json, py::arg("pairs"));
  m.def(
      "majority_vote",
      [](const std::vector<std::string>& completions) {
        std::vector<VoteSample> votes;
        for (const auto& t : completions) votes.push_back(vote_sample(parse_completion(t)));
        const auto r = majority_vote(votes);
        return py::make_tuple(std::string(class_id(r.winner)), r.tie_broken, r.excluded);
      },
      py::arg("completions"));
  m.def("grpo_train", &train_json, py::arg("steps") = 500, py::arg("seed") = 1, py::arg("group_size") = 6,
        py::arg("epsilon") = 0.2, py::arg("beta") = 0.005, py::call_guard<py::gil_scoped_release>());

  py::class_<RewardService>(m, "RewardService")
      .def(py::init([](const std::string& host, int port, std::size_t payload_limit, const std::string& secret) {
             ServiceConfig cfg;
             cfg.host = host;
             cfg.port = port;
             cfg.payload_limit = payload_limit;
             cfg.shared_secret = secret;
             return std::make_unique<RewardService>(cfg);
           }),
           py::arg("host") = "127.0.0.1", py::arg("port") = 0, py::arg("payload_limit") = std::size_t{8u << 20},
           py::arg("shared_secret") = "")
      .def("start", &RewardService::start)
      .def("stop", &RewardService::stop, py::call_guard<py::gil_scoped_release>())
      .def_property_readonly("port", &RewardService::port);
}
