#include "neurodx/grpo.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "neurodx/error.hpp"
#include "neurodx/io.hpp"

namespace neurodx::grpo {

const std::vector<std::string>& feature_names() {
  static const std::vector<std::string> names{
      "hippocampus",           "entorhinal_cortex",          "precuneus",   "orbitofrontal_cortex",
      "anterior_cingulate_gyrus", "anterior_insula",         "left_inferior_frontal_gyrus",
      "left_posterior_insula", "temporal_pole",              "fusiform_gyrus"};
  return names;
}

const std::array<std::vector<int>, kNumClasses>& class_signatures() {
  static const std::array<std::vector<int>, kNumClasses> sig{{
      {0, 0, 0, 0, 0, 0, 0, 0, 0, 0},  // CN
      {5, 5, 4, 0, 1, 0, 0, 0, 1, 1},  // AD
      {1, 1, 0, 5, 5, 4, 1, 1, 1, 0},  // bvFTD
      {0, 0, 0, 1, 0, 1, 5, 4, 0, 0},  // nfvPPA
      {2, 2, 0, 0, 0, 1, 0, 0, 6, 5},  // svPPA
  }};
  return sig;
}

std::vector<SyntheticCase> sample_dataset(std::uint64_t seed, int n_cases, double noise) {
  if (n_cases < 1) throw Error(ErrorCode::InvalidConfig, "n_cases must be positive", "n_cases");
  if (!(noise >= 0.0 && noise <= 1.0)) throw Error(ErrorCode::InvalidConfig, "noise must be in [0, 1]", "noise");
  std::mt19937_64 rng(seed);
  std::vector<SyntheticCase> out;
  out.reserve(static_cast<std::size_t>(n_cases));
  for (int i = 0; i < n_cases; ++i) {
    SyntheticCase c;
    c.gold = kAllClasses[static_cast<std::size_t>(i) % kNumClasses];
    c.features = class_signatures()[index_of(c.gold)];
    for (int& f : c.features) {
      const double u = uniform01(rng);
      const double v = uniform01(rng);
      if (u < noise) f = std::clamp(f + (v < 0.5 ? -1 : 1), 0, 6);
    }
    out.push_back(std::move(c));
  }
  return out;
}

// ---- policy ----

namespace {

constexpr std::size_t K = kNumClasses;

struct Eval {
  std::array<double, K> z{};  // class logits / T
  double stop = 0.0;          // stop logit / T
  double think_p = 0.5;
};

double sigmoid(double x) { return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); }

double logsumexp(const double* v, std::size_t n) {
  double m = -INFINITY;
  for (std::size_t i = 0; i < n; ++i) m = std::max(m, v[i]);
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += std::exp(v[i] - m);
  return m + std::log(s);
}

// Options at one Plackett-Luce step: remaining classes, plus stop after the first pick.
struct Step {
  std::array<double, K + 1> logit{};
  std::array<int, K + 1> option{};  // class index, or -1 for stop
  std::size_t n = 0;
};

Step make_step(const Eval& e, const std::array<bool, K>& used, bool allow_stop) {
  Step s;
  for (std::size_t c = 0; c < K; ++c)
    if (!used[c]) {
      s.logit[s.n] = e.z[c];
      s.option[s.n++] = static_cast<int>(c);
    }
  if (allow_stop) {
    s.logit[s.n] = e.stop;
    s.option[s.n++] = -1;
  }
  return s;
}

double think_log_prob(double p, bool think) { return think ? std::log(p) : std::log1p(-p); }

}  // namespace

ToyPolicy::ToyPolicy(int n_features, double stop_logit, double think_logit)
    : n_features_(n_features), params_(static_cast<std::size_t>(n_features + 1) * K + 2, 0.0) {
  if (n_features < 0) throw Error(ErrorCode::InvalidConfig, "n_features must be >= 0");
  params_[params_.size() - 2] = think_logit;
  params_[params_.size() - 1] = stop_logit;
}

double& ToyPolicy::weight(int j, DiagnosisClass c) { return params_[static_cast<std::size_t>(j) * K + index_of(c)]; }
double ToyPolicy::weight(int j, DiagnosisClass c) const {
  return params_[static_cast<std::size_t>(j) * K + index_of(c)];
}

std::array<double, kNumClasses> ToyPolicy::class_logits(const std::vector<int>& features) const {
  std::array<double, K> z{};
  for (std::size_t c = 0; c < K; ++c) z[c] = params_[static_cast<std::size_t>(n_features_) * K + c];
  for (int j = 0; j < n_features_; ++j) {
    const double x = features[static_cast<std::size_t>(j)] / 6.0;
    if (x == 0.0) continue;
    for (std::size_t c = 0; c < K; ++c) z[c] += x * params_[static_cast<std::size_t>(j) * K + c];
  }
  return z;
}

namespace {

Eval evaluate_policy(const ToyPolicy& p, const std::vector<int>& features, double T) {
  Eval e;
  e.z = p.class_logits(features);
  for (double& v : e.z) v /= T;
  e.stop = p.stop_logit() / T;
  e.think_p = sigmoid(p.think_logit() / T);
  return e;
}

double order_log_prob(const Eval& e, const std::vector<DiagnosisClass>& order) {
  std::array<bool, K> used{};
  double lp = 0.0;
  for (std::size_t i = 0; i <= order.size() && i < K; ++i) {
    Step s = make_step(e, used, i > 0);
    const double lse = logsumexp(s.logit.data(), s.n);
    if (i == order.size()) {
      lp += s.logit[s.n - 1] - lse;  // stop option is last
      break;
    }
    const std::size_t c = index_of(order[i]);
    for (std::size_t k = 0; k < s.n; ++k)
      if (s.option[k] == static_cast<int>(c)) lp += s.logit[k] - lse;
    used[c] = true;
  }
  return lp;
}

// d log P(order) / d (class logits, stop logit), before the 1/T factor.
void order_logit_gradient(const Eval& e, const std::vector<DiagnosisClass>& order, double scale,
                          std::array<double, K>& dz, double& dstop) {
  std::array<bool, K> used{};
  for (std::size_t i = 0; i <= order.size() && i < K; ++i) {
    Step s = make_step(e, used, i > 0);
    const double lse = logsumexp(s.logit.data(), s.n);
    const int chosen = i == order.size() ? -1 : static_cast<int>(index_of(order[i]));
    for (std::size_t k = 0; k < s.n; ++k) {
      const double p = std::exp(s.logit[k] - lse);
      const double g = scale * ((s.option[k] == chosen ? 1.0 : 0.0) - p);
      if (s.option[k] < 0) dstop += g;
      else dz[static_cast<std::size_t>(s.option[k])] += g;
    }
    if (chosen < 0) break;
    used[static_cast<std::size_t>(chosen)] = true;
  }
}

void scatter(const ToyPolicy& p, const std::vector<int>& features, double T, const std::array<double, K>& dz,
             double dstop, double dthink, std::vector<double>& grad) {
  const std::size_t D = static_cast<std::size_t>(p.n_features());
  for (std::size_t c = 0; c < K; ++c) grad[D * K + c] += dz[c] / T;
  for (std::size_t j = 0; j < D; ++j) {
    const double x = features[j] / 6.0;
    if (x == 0.0) continue;
    for (std::size_t c = 0; c < K; ++c) grad[j * K + c] += x * dz[c] / T;
  }
  grad[grad.size() - 2] += dthink / T;
  grad[grad.size() - 1] += dstop / T;
}

}  // namespace

double ToyPolicy::top_probability(const std::vector<int>& features, DiagnosisClass c, double temperature) const {
  const Eval e = evaluate_policy(*this, features, temperature);
  return std::exp(e.z[index_of(c)] - logsumexp(e.z.data(), K));
}

Ranking ToyPolicy::sample(const std::vector<int>& features, double temperature, std::mt19937_64& rng) const {
  const Eval e = evaluate_policy(*this, features, temperature);
  Ranking r;
  r.think = uniform01(rng) < e.think_p;
  std::array<bool, K> used{};
  for (std::size_t i = 0; i < K; ++i) {
    Step s = make_step(e, used, i > 0);
    const double lse = logsumexp(s.logit.data(), s.n);
    double u = uniform01(rng);
    std::size_t pick = s.n - 1;
    for (std::size_t k = 0; k < s.n; ++k) {
      u -= std::exp(s.logit[k] - lse);
      if (u < 0.0) {
        pick = k;
        break;
      }
    }
    if (s.option[pick] < 0) break;
    used[static_cast<std::size_t>(s.option[pick])] = true;
    r.order.push_back(kAllClasses[static_cast<std::size_t>(s.option[pick])]);
  }
  return r;
}

double ToyPolicy::log_prob(const std::vector<int>& features, const Ranking& r, double temperature) const {
  const Eval e = evaluate_policy(*this, features, temperature);
  return think_log_prob(e.think_p, r.think) + order_log_prob(e, r.order);
}

void ToyPolicy::add_log_prob_gradient(const std::vector<int>& features, const Ranking& r, double temperature,
                                      double scale, std::vector<double>& grad) const {
  const Eval e = evaluate_policy(*this, features, temperature);
  std::array<double, K> dz{};
  double dstop = 0.0;
  order_logit_gradient(e, r.order, scale, dz, dstop);
  const double dthink = scale * ((r.think ? 1.0 : 0.0) - e.think_p);
  scatter(*this, features, temperature, dz, dstop, dthink, grad);
}

const std::vector<std::vector<DiagnosisClass>>& all_orders() {
  static const std::vector<std::vector<DiagnosisClass>> orders = [] {
    std::vector<std::vector<DiagnosisClass>> out;
    std::vector<DiagnosisClass> cur;
    std::array<bool, K> used{};
    auto rec = [&](auto&& self) -> void {
      if (!cur.empty()) out.push_back(cur);
      if (cur.size() == K) return;
      for (std::size_t c = 0; c < K; ++c) {
        if (used[c]) continue;
        used[c] = true;
        cur.push_back(kAllClasses[c]);
        self(self);
        cur.pop_back();
        used[c] = false;
      }
    };
    rec(rec);
    return out;
  }();
  return orders;
}

double ToyPolicy::kl(const ToyPolicy& ref, const std::vector<int>& features, double temperature) const {
  const Eval e = evaluate_policy(*this, features, temperature);
  const Eval q = evaluate_policy(ref, features, temperature);
  double total = 0.0;
  for (const auto& o : all_orders()) {
    const double lp = order_log_prob(e, o);
    total += std::exp(lp) * (lp - order_log_prob(q, o));
  }
  const double p = e.think_p, r = q.think_p;
  total += p * (std::log(p) - std::log(r)) + (1 - p) * (std::log1p(-p) - std::log1p(-r));
  return std::max(total, 0.0);
}

void ToyPolicy::add_kl_gradient(const ToyPolicy& ref, const std::vector<int>& features, double temperature,
                                double scale, std::vector<double>& grad) const {
  const Eval e = evaluate_policy(*this, features, temperature);
  const Eval q = evaluate_policy(ref, features, temperature);
  std::array<double, K> dz{};
  double dstop = 0.0;
  for (const auto& o : all_orders()) {
    const double lp = order_log_prob(e, o);
    const double w = std::exp(lp) * (lp - order_log_prob(q, o));
    if (w != 0.0) order_logit_gradient(e, o, scale * w, dz, dstop);
  }
  const double p = e.think_p, r = q.think_p;
  const double dkl_dp = (std::log(p) - std::log(r)) - (std::log1p(-p) - std::log1p(-r));
  // dp/d(logit/T) = p(1 - p); scatter applies the 1/T.
  const double dthink = scale * dkl_dp * p * (1 - p);
  scatter(*this, features, temperature, dz, dstop, dthink, grad);
}

std::string render_output(const SyntheticCase& c, const Ranking& r) {
  std::string think = "Regional grades:";
  const auto& names = feature_names();
  for (std::size_t j = 0; j < c.features.size() && j < names.size(); ++j)
    if (c.features[j] > 0) think += " " + names[j] + "=" + std::to_string(c.features[j]);
  if (think.back() == ':') think += " none";
  std::string text = render_completion(think, r.order);
  if (!r.think) text.erase(0, text.find("</think>\n") + 9);
  return text;
}

void validate(const SandboxConfig& cfg) {
  auto bad = [](const char* field, const char* msg) { throw Error(ErrorCode::InvalidConfig, msg, field); };
  if (cfg.G < 2) bad("G", "G must be >= 2");
  if (!(cfg.epsilon > 0.0 && cfg.epsilon < 1.0)) bad("epsilon", "epsilon must be in (0, 1)");
  if (!(cfg.beta >= 0.0) || !std::isfinite(cfg.beta)) bad("beta", "beta must be >= 0");
  if (!(cfg.learning_rate > 0.0) || !std::isfinite(cfg.learning_rate)) bad("learning_rate", "learning rate must be > 0");
  if (cfg.steps < 1) bad("steps", "steps must be >= 1");
  if (!(cfg.temperature > 0.0) || !std::isfinite(cfg.temperature)) bad("temperature", "temperature must be > 0");
  if (cfg.n_cases < 1) bad("n_cases", "n_cases must be >= 1");
  if (!(cfg.noise >= 0.0 && cfg.noise <= 1.0)) bad("noise", "noise must be in [0, 1]");
  if (cfg.inner_updates < 1) bad("inner_updates", "inner_updates must be >= 1");
  if (cfg.eval_rollouts < 1) bad("eval_rollouts", "eval_rollouts must be >= 1");
}

std::vector<Ranking> sample_rankings(const ToyPolicy& policy, const SyntheticCase& c, int G, double temperature,
                                     std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<Ranking> out;
  out.reserve(static_cast<std::size_t>(std::max(G, 0)));
  for (int i = 0; i < G; ++i) out.push_back(policy.sample(c.features, temperature, rng));
  return out;
}

std::vector<std::string> rollout(const ToyPolicy& policy, const SyntheticCase& c, int G, double temperature,
                                 std::uint64_t seed) {
  std::vector<std::string> out;
  for (const auto& r : sample_rankings(policy, c, G, temperature, seed)) out.push_back(render_output(c, r));
  return out;
}

RolloutGroup rollout_group(const ToyPolicy& policy, const SyntheticCase& c, int G, double temperature,
                           std::uint64_t seed, std::string query_id) {
  RolloutGroup g;
  g.source = c;
  g.rankings = sample_rankings(policy, c, G, temperature, seed);
  std::vector<std::string> texts;
  for (const auto& r : g.rankings) texts.push_back(render_output(c, r));
  g.group = CompletionGroup::score(std::move(query_id), std::move(texts), c.gold);
  return g;
}

double clipped_surrogate(double ratio, double advantage, double epsilon) {
  const double clipped = std::clamp(ratio, 1.0 - epsilon, 1.0 + epsilon);
  return std::min(ratio * advantage, clipped * advantage);
}

StepStats grpo_step(ToyPolicy& policy, const ToyPolicy& reference, const RolloutGroup& ro, const SandboxConfig& cfg) {
  const auto& feats = ro.source.features;
  const auto& adv = ro.group.advantages;
  const std::size_t G = ro.rankings.size();
  if (G == 0 || adv.size() != G) throw Error(ErrorCode::EmptyGroup, "rollout group has no scored outputs");
  const double T = cfg.temperature;

  StepStats st;
  for (std::size_t i = 0; i < G; ++i) {
    st.mean_reward += ro.group.rewards[i];
    st.mean_accuracy_reward += ro.group.breakdowns[i].accuracy_reward;
    st.mean_format_reward += ro.group.breakdowns[i].format_reward;
    st.mean_len += static_cast<double>(ro.group.outputs[i].size());
    st.mean_abs_advantage += std::fabs(adv[i]);
  }
  const double g = static_cast<double>(G);
  st.mean_reward /= g;
  st.mean_accuracy_reward /= g;
  st.mean_format_reward /= g;
  st.mean_len /= g;
  st.mean_abs_advantage /= g;
  st.kl_before = policy.kl(reference, feats, T);

  std::vector<double> old_lp(G);
  for (std::size_t i = 0; i < G; ++i) old_lp[i] = policy.log_prob(feats, ro.rankings[i], T);

  for (int u = 0; u < cfg.inner_updates; ++u) {
    std::vector<double> grad(policy.n_params(), 0.0);
    double surrogate = 0.0;
    for (std::size_t i = 0; i < G; ++i) {
      const double ratio = std::exp(policy.log_prob(feats, ro.rankings[i], T) - old_lp[i]);
      const double a = adv[i];
      surrogate += clipped_surrogate(ratio, a, cfg.epsilon);
      const double clipped = std::clamp(ratio, 1.0 - cfg.epsilon, 1.0 + cfg.epsilon);
      // The clipped branch carries no gradient when it is the strict minimum.
      if (clipped * a < ratio * a) continue;
      if (a != 0.0) policy.add_log_prob_gradient(feats, ro.rankings[i], T, ratio * a / g, grad);
    }
    const double kl = cfg.beta > 0.0 ? policy.kl(reference, feats, T) : 0.0;
    if (cfg.beta > 0.0) policy.add_kl_gradient(reference, feats, T, -cfg.beta, grad);
    st.objective = surrogate / g - cfg.beta * kl;
    for (double v : grad)
      if (!std::isfinite(v)) throw Error(ErrorCode::NonFiniteGradient, "non-finite GRPO gradient");
    auto& p = policy.params();
    for (std::size_t k = 0; k < p.size(); ++k) p[k] += cfg.learning_rate * grad[k];
  }
  policy.bump_version();
  st.kl_after = policy.kl(reference, feats, T);
  return st;
}

double mean_sampled_accuracy(const ToyPolicy& policy, const std::vector<SyntheticCase>& cases, int rollouts_per_case,
                             double temperature, std::uint64_t seed) {
  if (cases.empty() || rollouts_per_case < 1) return 0.0;
  std::mt19937_64 rng(seed);
  double hits = 0.0;
  for (const auto& c : cases)
    for (int k = 0; k < rollouts_per_case; ++k) {
      const Ranking r = policy.sample(c.features, temperature, rng);
      hits += accuracy_reward(render_output(c, r), c.gold);
    }
  return hits / static_cast<double>(cases.size() * static_cast<std::size_t>(rollouts_per_case));
}

TrainResult train(const SandboxConfig& cfg) {
  validate(cfg);
  const auto data = sample_dataset(cfg.seed, cfg.n_cases, cfg.noise);
  const int D = static_cast<int>(feature_names().size());
  TrainResult out;
  out.policy = ToyPolicy(D);
  const ToyPolicy reference = out.policy;
  std::mt19937_64 rng(cfg.seed ^ 0xA5A5A5A5DEADBEEFULL);
  out.initial_accuracy =
      mean_sampled_accuracy(out.policy, data, cfg.eval_rollouts, cfg.temperature, cfg.seed ^ 0x1111ULL);
  out.curve.reserve(static_cast<std::size_t>(cfg.steps));
  for (int step = 0; step < cfg.steps; ++step) {
    const SyntheticCase& c = data[uniform_index(rng, data.size())];
    const std::uint64_t rollout_seed = rng();
    const RolloutGroup ro = rollout_group(out.policy, c, cfg.G, cfg.temperature, rollout_seed,
                                          "step-" + std::to_string(step));
    const StepStats st = grpo_step(out.policy, reference, ro, cfg);
    out.curve.push_back({step, st.mean_reward, st.mean_accuracy_reward, st.mean_format_reward, st.mean_len,
                         st.kl_before});
  }
  out.final_accuracy =
      mean_sampled_accuracy(out.policy, data, cfg.eval_rollouts, cfg.temperature, cfg.seed ^ 0x2222ULL);
  return out;
}

void write_curve_csv(std::ostream& out, const std::vector<CurvePoint>& curve) {
  out << "step,mean_reward,mean_accuracy_reward,mean_format_reward,mean_len,kl\n";
  out.precision(10);
  for (const auto& p : curve)
    out << p.step << ',' << p.mean_reward << ',' << p.mean_accuracy_reward << ',' << p.mean_format_reward << ','
        << p.mean_len << ',' << p.kl << '\n';
}

}  // namespace neurodx::grpo
