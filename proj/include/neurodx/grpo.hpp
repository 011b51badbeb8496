#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <random>
#include <string>
#include <vector>

#include "neurodx/diagnosis.hpp"
#include "neurodx/rewards.hpp"

namespace neurodx::grpo {

// Per-region severity grades (0 = normal .. 6 = severe) for a fixed feature
// list, plus the gold class.
struct SyntheticCase {
  std::vector<int> features;
  DiagnosisClass gold = DiagnosisClass::CN;
};

const std::vector<std::string>& feature_names();
// Noise-free grade vector of each class, indexed by index_of(class).
const std::array<std::vector<int>, kNumClasses>& class_signatures();

// Gold classes cycle through the five classes; each feature of the class
// signature is independently shifted by +-1 grade with probability `noise`
// (clamped to 0..6). Deterministic per seed.
std::vector<SyntheticCase> sample_dataset(std::uint64_t seed, int n_cases, double noise = 0.0);

// A sampled output: classes in rank order (possibly cut short by the stop
// option), and whether a think block is emitted.
struct Ranking {
  std::vector<DiagnosisClass> order;
  bool think = true;

  bool operator==(const Ranking&) const = default;
};

// Linear policy over (features / 6, 1) -> K class logits, plus a think-gate
// logit and a stop logit. Rankings are Plackett-Luce draws: pick a class from
// the softmax over the remaining classes; after the first pick the stop
// option competes with the remaining classes. All logits are divided by the
// sampling temperature.
class ToyPolicy {
 public:
  explicit ToyPolicy(int n_features, double stop_logit = -1.0, double think_logit = 0.0);

  int n_features() const { return n_features_; }
  std::size_t n_params() const { return params_.size(); }
  const std::vector<double>& params() const { return params_; }
  std::vector<double>& params() { return params_; }
  std::uint64_t version() const { return version_; }
  void bump_version() { ++version_; }

  double& weight(int feature_or_bias, DiagnosisClass c);
  double weight(int feature_or_bias, DiagnosisClass c) const;
  double think_logit() const { return params_[params_.size() - 2]; }
  double stop_logit() const { return params_[params_.size() - 1]; }

  std::array<double, kNumClasses> class_logits(const std::vector<int>& features) const;
  // Probability that `c` is ranked first.
  double top_probability(const std::vector<int>& features, DiagnosisClass c, double temperature) const;

  Ranking sample(const std::vector<int>& features, double temperature, std::mt19937_64& rng) const;
  double log_prob(const std::vector<int>& features, const Ranking& r, double temperature) const;
  // d log_prob / d params, accumulated into grad scaled by `scale`.
  void add_log_prob_gradient(const std::vector<int>& features, const Ranking& r, double temperature, double scale,
                             std::vector<double>& grad) const;

  // Exact KL(this || ref) over all rankings and think choices.
  double kl(const ToyPolicy& ref, const std::vector<int>& features, double temperature) const;
  void add_kl_gradient(const ToyPolicy& ref, const std::vector<int>& features, double temperature, double scale,
                       std::vector<double>& grad) const;

 private:
  int n_features_;
  std::vector<double> params_;  // (n_features + 1) x K row-major, think, stop
  std::uint64_t version_ = 0;
};

// Every ranking the policy can emit (325 orders; think flag not included).
const std::vector<std::vector<DiagnosisClass>>& all_orders();

// Canonical completion text for a sampled output; the think block holds a
// short stub summarizing the case.
std::string render_output(const SyntheticCase& c, const Ranking& r);

struct SandboxConfig {
  int G = 6;
  double epsilon = 0.2;
  double beta = 0.005;
  double learning_rate = 0.05;
  int steps = 500;
  std::uint64_t seed = 1;
  double temperature = 0.9;
  int n_cases = 200;
  double noise = 0.0;
  // Gradient steps per sampled group; ratios differ from 1 after the first.
  int inner_updates = 4;
  // Rollouts per case when estimating accuracy before and after training.
  int eval_rollouts = 10;
};

// Throws InvalidConfig.
void validate(const SandboxConfig& cfg);

struct RolloutGroup {
  SyntheticCase source;
  std::vector<Ranking> rankings;
  CompletionGroup group;
};

std::vector<Ranking> sample_rankings(const ToyPolicy& policy, const SyntheticCase& c, int G, double temperature,
                                     std::uint64_t seed);
// G rendered completions; deterministic per seed.
std::vector<std::string> rollout(const ToyPolicy& policy, const SyntheticCase& c, int G, double temperature,
                                 std::uint64_t seed);
// Samples, renders and scores a group with the reward functions.
RolloutGroup rollout_group(const ToyPolicy& policy, const SyntheticCase& c, int G, double temperature,
                           std::uint64_t seed, std::string query_id = "q");

// Clipped surrogate min(rho * A, clip(rho, 1 - eps, 1 + eps) * A).
double clipped_surrogate(double ratio, double advantage, double epsilon);

struct StepStats {
  double mean_reward = 0.0;
  double mean_accuracy_reward = 0.0;
  double mean_format_reward = 0.0;
  double mean_len = 0.0;
  double kl_before = 0.0;  // KL(policy || reference) of the sampling policy
  double kl_after = 0.0;
  double mean_abs_advantage = 0.0;
  double objective = 0.0;  // surrogate minus beta * KL, at the last inner update
};

// Gradient ascent on mean_i clipped_surrogate(pi(o_i) / pi_old(o_i), A_i) -
// beta * KL(pi || pi_ref), using the group's advantages. Throws NonFiniteGradient.
StepStats grpo_step(ToyPolicy& policy, const ToyPolicy& reference, const RolloutGroup& rollout,
                    const SandboxConfig& cfg);

struct CurvePoint {
  int step = 0;
  double mean_reward = 0.0;
  double mean_accuracy_reward = 0.0;
  double mean_format_reward = 0.0;
  double mean_len = 0.0;
  double kl = 0.0;
};

struct TrainResult {
  std::vector<CurvePoint> curve;
  ToyPolicy policy{0};
  // Mean accuracy reward of sampled rollouts over the dataset.
  double initial_accuracy = 0.0;
  double final_accuracy = 0.0;
};

// Sample case -> rollout with the pre-update policy -> rewards -> advantages
// -> grpo_step, `steps` times. Bit-reproducible per seed on one build.
TrainResult train(const SandboxConfig& cfg);

double mean_sampled_accuracy(const ToyPolicy& policy, const std::vector<SyntheticCase>& cases, int rollouts_per_case,
                             double temperature, std::uint64_t seed);

// Header: step,mean_reward,mean_accuracy_reward,mean_format_reward,mean_len,kl
void write_curve_csv(std::ostream& out, const std::vector<CurvePoint>& curve);

}  // namespace neurodx::grpo
