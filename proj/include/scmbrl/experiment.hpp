#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "scmbrl/mdp.hpp"
#include "scmbrl/model.hpp"
#include "scmbrl/planning.hpp"
#include "scmbrl/rng.hpp"
#include "scmbrl/value.hpp"

namespace scmbrl {

enum class Task { kEvaluation, kControl };
enum class Algorithm { kModelFree, kDyna, kScResidual, kScDirect, kScReverse };
enum class ModelObjective { kMle, kVe };
enum class CollectionMode { kStreams, kIidUniform };
enum class NoiseTarget { kRewardInit, kValueInit };

struct ExperimentConfig {
  Task task = Task::kEvaluation;
  Algorithm algorithm = Algorithm::kModelFree;
  ModelObjective model_objective = ModelObjective::kMle;

  int n_states = 20;
  int n_actions = 4;
  double discount = 0.99;
  std::optional<double> epsilon;  // control only; resolves to 0.1
  int batch_size = 8;
  int horizon = 2;  // planning rollout length K
  int iterations = 2000;
  int eval_interval = 1;
  int n_replicas = 30;
  std::uint64_t base_seed = 1;

  double alpha_td = 0.03;
  double alpha_r = 1.0;
  std::optional<double> alpha_model;  // default 1.0 (MLE) / 3.0 (VE)
  std::optional<double> alpha_plan;   // default 10.0 (MLE) / 0.3 (VE)

  StartMode starts;
  ImaginationMode imagination;
  CollectionMode collection = CollectionMode::kStreams;

  // Noisy-initialization study: start reward_hat at r + N(0, sigma_r^2)
  // and/or v_hat at v_ref + N(0, sigma_v^2).
  std::optional<double> reward_init_sigma;
  std::optional<double> value_init_sigma;

  // Control metric on the greedy policy instead of the behaviour policy.
  bool eval_greedy_policy = false;

  int threads = 0;  // 0 -> hardware concurrency

  // When set, every replica uses this MDP instead of generating its own.
  std::optional<TabularMdp> fixed_mdp;
};

struct MetricRecord {
  int replica = 0;
  int iteration = 0;
  std::optional<double> value_error;        // evaluation task
  std::optional<double> normalized_return;  // control task
  double sc_loss = 0.0;
  double model_tv = 0.0;
  double model_reward_err = 0.0;
};

struct SummaryStat {
  double x = 0.0;  // iteration or noise level
  double mean = 0.0;
  double ci_lo = 0.0;
  double ci_hi = 0.0;
};

struct ReplicaFinal {
  ModelParams params;
  ValueTable v_hat;
};

struct RunResult {
  std::vector<MetricRecord> records;  // ordered by (replica, iteration)
  std::vector<ReplicaFinal> finals;   // one per replica
};

// Thrown when a recorded metric becomes non-finite.
struct NumericalError : std::runtime_error {
  NumericalError(const std::string& msg, int replica_, int iteration_)
      : std::runtime_error(msg), replica(replica_), iteration(iteration_) {}
  int replica;
  int iteration;
};

double resolve_alpha_model(const ExperimentConfig& config);
double resolve_alpha_plan(const ExperimentConfig& config);
double resolve_epsilon(const ExperimentConfig& config);

// Throws std::invalid_argument on any violated configuration invariant.
void validate_config(const ExperimentConfig& config);

// Alternating grounded/planning loop evaluating a fixed uniform-random
// policy; records the relative value error against the exact policy value.
RunResult run_policy_evaluation(const ExperimentConfig& config);

// Same loop with an epsilon-greedy behaviour policy over model-based Q
// values, recomputed every iteration; records the behaviour policy's true
// value normalized by the optimal value.
RunResult run_control(const ExperimentConfig& config);

// Mean over states of v_policy(s) / max(v_star(s), floor).
double compute_normalized_return(const TabularMdp& mdp, const Policy& policy,
                                 const ValueTable& v_star);

struct RobustnessRow {
  double sigma = 0.0;
  SummaryStat auc;
};

// For each sigma, runs the evaluation task with the chosen initialization
// noised at that level and reports the area under the per-replica value
// error curve with a bootstrap confidence interval.
std::vector<RobustnessRow> run_robustness_sweep(const ExperimentConfig& config,
                                                std::span<const double> sigma_grid,
                                                NoiseTarget target);

// Rectangular rule with unit spacing between recorded points:
// mean of the values times the number of values.
double compute_auc(std::span<const double> errors);

// Mean plus percentile-bootstrap interval; level 0 collapses to the mean.
SummaryStat aggregate_ci(std::span<const double> values, double level, int resamples,
                         Rng& rng);

// Per-iteration mean and confidence band of the task metric across replicas.
std::vector<SummaryStat> summarize_by_iteration(std::span<const MetricRecord> records,
                                                Task task, std::uint64_t seed);

struct LrGrids {
  std::vector<double> alpha_td;
  std::vector<double> alpha_model;
  std::vector<double> sc_multiplier;  // planning rate = multiplier * alpha_model
};

struct SweepCell {
  double alpha_td = 0.0;
  double alpha_model = 0.0;
  double sc_multiplier = 0.0;
  double alpha_plan = 0.0;
  SummaryStat final_metric;
};

// Cartesian sweep over the grids; each cell reports the final task metric
// across replicas.
std::vector<SweepCell> run_lr_sweep(const ExperimentConfig& config, const LrGrids& grids);

const char* to_string(Task task);
const char* to_string(Algorithm algorithm);
const char* to_string(ModelObjective objective);

}  // namespace scmbrl
