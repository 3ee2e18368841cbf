#include "scmbrl/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <map>
#include <mutex>
#include <numeric>
#include <thread>

namespace scmbrl {

namespace {

constexpr double kReturnDenomFloor = 0.01;

ScVariant variant_of(Algorithm algorithm) {
  switch (algorithm) {
    case Algorithm::kDyna: return ScVariant::kDynaValueOnly;
    case Algorithm::kScResidual: return ScVariant::kResidual;
    case Algorithm::kScDirect: return ScVariant::kDirect;
    case Algorithm::kScReverse: return ScVariant::kReverse;
    case Algorithm::kModelFree: break;
  }
  throw std::logic_error("no planning variant for this algorithm");
}

bool is_record_point(int iteration, const ExperimentConfig& config) {
  if (iteration == 0 || iteration == config.iterations) return true;
  return iteration % config.eval_interval == 0;
}

std::vector<TransitionSample> collect_batch(const TabularMdp& mdp, const Policy& policy,
                                            CollectionMode mode,
                                            std::vector<int>& stream_states, Rng& rng,
                                            int batch_size) {
  std::vector<TransitionSample> batch;
  batch.reserve(batch_size);
  for (int i = 0; i < batch_size; ++i) {
    int state = (mode == CollectionMode::kStreams) ? stream_states[i]
                                                   : draw_index(rng, mdp.n_states);
    int action = sample_action(policy, state, rng);
    TransitionSample t = sample_transition(mdp, state, action, rng);
    if (mode == CollectionMode::kStreams) stream_states[i] = t.next_state;
    batch.push_back(t);
  }
  return batch;
}

void grounded_model_update(ModelParams& params, std::span<const TransitionSample> batch,
                           const ExperimentConfig& config, const Policy& policy,
                           const ValueTable& v_hat, double alpha_model) {
  if (config.model_objective == ModelObjective::kMle) {
    mle_model_update(params, batch, alpha_model);
  } else {
    ve_model_update(params, batch, v_hat, policy, alpha_model);
  }
}

struct ReplicaOutput {
  std::vector<MetricRecord> records;
  ReplicaFinal final_state;
};

// The run's environment: the configured MDP if one was supplied, otherwise a
// Garnet drawn from a stream of its own so that every replica of the run
// faces the same instance (replicas differ in initialization and sampling).
TabularMdp run_environment(const ExperimentConfig& config) {
  if (config.fixed_mdp) return *config.fixed_mdp;
  Rng rng = make_rng(derive_seed(config.base_seed, 0x6D6470ull));
  return generate_garnet(config.n_states, config.n_actions, rng, config.discount);
}

// One replica of the alternating grounded/planning loop. Everything the
// replica does is driven by a single stream derived from (base_seed,
// replica), so replicas are reproducible in isolation.
ReplicaOutput run_replica(const ExperimentConfig& config, const TabularMdp& mdp,
                          int replica) {
  const double alpha_model = resolve_alpha_model(config);
  const double alpha_plan = resolve_alpha_plan(config);
  const bool planning = config.algorithm != Algorithm::kModelFree;
  const bool control = config.task == Task::kControl;

  Rng rng = make_rng(derive_seed(config.base_seed, replica));

  Policy eval_policy = uniform_policy(mdp.n_states, mdp.n_actions);
  ValueTable v_ref;  // exact target for the evaluation error / value-noise init
  ValueTable v_star;
  if (control) {
    v_star = optimal_value_exact(mdp, 1e-9, 2000000);
  } else {
    v_ref = policy_value_exact(mdp, eval_policy);
  }

  ModelParams params =
      init_model(mdp.n_states, mdp.n_actions, rng, config.reward_init_sigma,
                 config.reward_init_sigma ? &mdp : nullptr);
  const ValueTable* noise_ref = nullptr;
  if (config.value_init_sigma) {
    if (control) {
      throw std::invalid_argument("value-initialization noise requires the evaluation task");
    }
    noise_ref = &v_ref;
  }
  ValueTable v_hat =
      init_value(mdp.n_states, rng, config.value_init_sigma, noise_ref);

  std::vector<int> stream_states(config.batch_size, 0);
  if (config.collection == CollectionMode::kStreams) {
    for (int& s : stream_states) s = draw_index(rng, mdp.n_states);
  }

  const double epsilon = control ? resolve_epsilon(config) : 0.0;
  std::vector<int> all_states(mdp.n_states);
  std::iota(all_states.begin(), all_states.end(), 0);

  ReplicaOutput out;
  Policy behaviour = eval_policy;

  auto record = [&](int iteration) {
    MetricRecord rec;
    rec.replica = replica;
    rec.iteration = iteration;
    Policy mu = imagination_policy(behaviour, config.imagination);
    rec.sc_loss = sc_loss(params, v_hat, mu, all_states, config.horizon,
                          ScVariant::kDirect, mdp.discount);
    ModelDiagnostics diag = model_diagnostics(params, mdp);
    rec.model_tv = diag.max_tv_distance;
    rec.model_reward_err = diag.max_reward_error;
    if (control) {
      Policy measured = behaviour;
      if (config.eval_greedy_policy) {
        measured = epsilon_greedy_policy(model_q_values(params, v_hat, mdp.discount),
                                         mdp.n_states, mdp.n_actions, 0.0);
      }
      rec.normalized_return = compute_normalized_return(mdp, measured, v_star);
    } else {
      rec.value_error = relative_value_error(v_hat, v_ref);
    }
    double metric = control ? *rec.normalized_return : *rec.value_error;
    if (!std::isfinite(metric) || !std::isfinite(rec.sc_loss)) {
      throw NumericalError("non-finite metric", replica, iteration);
    }
    out.records.push_back(std::move(rec));
  };

  if (control) {
    behaviour = epsilon_greedy_policy(model_q_values(params, v_hat, mdp.discount),
                                      mdp.n_states, mdp.n_actions, epsilon);
  }
  record(0);

  for (int iteration = 1; iteration <= config.iterations; ++iteration) {
    if (control) {
      behaviour = epsilon_greedy_policy(model_q_values(params, v_hat, mdp.discount),
                                        mdp.n_states, mdp.n_actions, epsilon);
    }
    std::vector<TransitionSample> batch = collect_batch(
        mdp, behaviour, config.collection, stream_states, rng, config.batch_size);

    grounded_reward_update(params, batch, config.alpha_r);
    grounded_td0_update(v_hat, batch, config.alpha_td, mdp.discount);
    grounded_model_update(params, batch, config, behaviour, v_hat, alpha_model);

    if (planning) {
      std::vector<int> starts =
          select_planning_starts(mdp.n_states, config.starts, rng);
      Policy mu = imagination_policy(behaviour, config.imagination);
      PlanningGradients grads =
          sc_gradients(params, v_hat, mu, starts, config.horizon,
                       variant_of(config.algorithm), mdp.discount);
      // The planning rate is a per-term rate: the loss sums (K+1) squared
      // errors per start state, so the summed gradients are averaged over
      // all terms. Keeps the step scale independent of the start-batch size
      // and bounded even when rollouts concentrate on few states.
      double n_terms = static_cast<double>(starts.size()) * (config.horizon + 1);
      apply_planning_update(params, v_hat, grads, alpha_plan / n_terms);
    }

    if (is_record_point(iteration, config)) record(iteration);
  }

  out.final_state = ReplicaFinal{std::move(params), std::move(v_hat)};
  return out;
}

RunResult run_replicated(const ExperimentConfig& config) {
  validate_config(config);
  const TabularMdp mdp = run_environment(config);
  const int n = config.n_replicas;
  std::vector<ReplicaOutput> outputs(n);
  std::vector<std::pair<int, std::exception_ptr>> failures;
  std::mutex failures_mutex;

  int hardware = static_cast<int>(std::thread::hardware_concurrency());
  int n_threads = config.threads > 0 ? config.threads : std::max(1, hardware);
  n_threads = std::min(n_threads, n);

  std::atomic<int> next_replica{0};
  auto worker = [&]() {
    while (true) {
      int replica = next_replica.fetch_add(1);
      if (replica >= n) return;
      try {
        outputs[replica] = run_replica(config, mdp, replica);
      } catch (...) {
        std::lock_guard<std::mutex> lock(failures_mutex);
        failures.emplace_back(replica, std::current_exception());
      }
    }
  };
  if (n_threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(n_threads);
    for (int i = 0; i < n_threads; ++i) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
  }

  if (!failures.empty()) {
    auto first = std::min_element(failures.begin(), failures.end(),
                                  [](const auto& a, const auto& b) { return a.first < b.first; });
    std::rethrow_exception(first->second);
  }

  RunResult result;
  for (ReplicaOutput& out : outputs) {
    result.records.insert(result.records.end(), out.records.begin(), out.records.end());
    result.finals.push_back(std::move(out.final_state));
  }
  return result;
}

}  // namespace

double resolve_alpha_model(const ExperimentConfig& config) {
  if (config.alpha_model) return *config.alpha_model;
  return config.model_objective == ModelObjective::kMle ? 1.0 : 3.0;
}

double resolve_alpha_plan(const ExperimentConfig& config) {
  if (config.alpha_plan) return *config.alpha_plan;
  // Dyna's value-only step keeps the TD rate; the self-consistency rates
  // resolve per grounded model objective.
  if (config.algorithm == Algorithm::kDyna) return config.alpha_td;
  return config.model_objective == ModelObjective::kMle ? 10.0 : 0.3;
}

double resolve_epsilon(const ExperimentConfig& config) {
  if (config.epsilon) return *config.epsilon;
  return 0.1;
}

void validate_config(const ExperimentConfig& config) {
  if (config.n_states < 1 || config.n_actions < 1) {
    throw std::invalid_argument("config: state and action counts must be positive");
  }
  if (!(config.discount >= 0.0 && config.discount < 1.0)) {
    throw std::invalid_argument("config: discount must lie in [0, 1)");
  }
  if (config.task == Task::kEvaluation && config.epsilon.has_value()) {
    throw std::invalid_argument("config: epsilon applies to the control task only");
  }
  if (config.epsilon && !(*config.epsilon >= 0.0 && *config.epsilon <= 1.0)) {
    throw std::invalid_argument("config: epsilon must lie in [0, 1]");
  }
  if (config.batch_size < 1) throw std::invalid_argument("config: batch_size must be positive");
  if (config.horizon < 0) throw std::invalid_argument("config: K must be non-negative");
  if (config.iterations < 0) throw std::invalid_argument("config: iterations must be non-negative");
  if (config.eval_interval < 1) throw std::invalid_argument("config: eval_interval must be positive");
  if (config.n_replicas < 1) throw std::invalid_argument("config: replicas must be positive");
  if (!(config.alpha_td > 0.0 && config.alpha_td <= 1.0)) {
    throw std::invalid_argument("config: alpha_td must lie in (0, 1]");
  }
  if (!(config.alpha_r > 0.0 && config.alpha_r <= 1.0)) {
    throw std::invalid_argument("config: alpha_r must lie in (0, 1]");
  }
  if (config.alpha_model && !(*config.alpha_model > 0.0)) {
    throw std::invalid_argument("config: alpha_model must be positive");
  }
  if (config.alpha_plan && !(*config.alpha_plan > 0.0)) {
    throw std::invalid_argument("config: alpha_plan must be positive");
  }
  if (config.starts.kind == StartMode::Kind::kSample && config.starts.sample_count < 1) {
    throw std::invalid_argument("config: sampled start count must be at least 1");
  }
  if (config.imagination.kind == ImaginationMode::Kind::kEpsilonMix &&
      !(config.imagination.epsilon >= 0.0 && config.imagination.epsilon <= 1.0)) {
    throw std::invalid_argument("config: imagination epsilon must lie in [0, 1]");
  }
  if (config.reward_init_sigma && *config.reward_init_sigma < 0.0) {
    throw std::invalid_argument("config: reward init sigma must be non-negative");
  }
  if (config.value_init_sigma && *config.value_init_sigma < 0.0) {
    throw std::invalid_argument("config: value init sigma must be non-negative");
  }
  if (config.value_init_sigma && config.task == Task::kControl) {
    throw std::invalid_argument("config: value init noise requires the evaluation task");
  }
  if (config.fixed_mdp) {
    validate_mdp(*config.fixed_mdp);
    if (config.fixed_mdp->n_states != config.n_states ||
        config.fixed_mdp->n_actions != config.n_actions) {
      throw std::invalid_argument("config: fixed MDP shape disagrees with configured counts");
    }
  }
}

RunResult run_policy_evaluation(const ExperimentConfig& config) {
  if (config.task != Task::kEvaluation) {
    throw std::invalid_argument("run_policy_evaluation requires the evaluation task");
  }
  return run_replicated(config);
}

RunResult run_control(const ExperimentConfig& config) {
  if (config.task != Task::kControl) {
    throw std::invalid_argument("run_control requires the control task");
  }
  return run_replicated(config);
}

double compute_normalized_return(const TabularMdp& mdp, const Policy& policy,
                                 const ValueTable& v_star) {
  ValueTable v_policy = policy_value_exact(mdp, policy);
  double total = 0.0;
  for (int s = 0; s < mdp.n_states; ++s) {
    total += v_policy[s] / std::max(v_star[s], kReturnDenomFloor);
  }
  return total / mdp.n_states;
}

std::vector<RobustnessRow> run_robustness_sweep(const ExperimentConfig& config,
                                                std::span<const double> sigma_grid,
                                                NoiseTarget target) {
  if (config.task != Task::kEvaluation) {
    throw std::invalid_argument("robustness sweep requires the evaluation task");
  }
  if (sigma_grid.empty()) throw std::invalid_argument("sigma grid must be non-empty");

  std::vector<RobustnessRow> rows;
  for (std::size_t i = 0; i < sigma_grid.size(); ++i) {
    ExperimentConfig noisy = config;
    if (target == NoiseTarget::kRewardInit) {
      noisy.reward_init_sigma = sigma_grid[i];
    } else {
      noisy.value_init_sigma = sigma_grid[i];
    }
    RunResult result = run_policy_evaluation(noisy);

    std::vector<double> aucs(config.n_replicas, 0.0);
    std::vector<std::vector<double>> per_replica(config.n_replicas);
    for (const MetricRecord& rec : result.records) {
      per_replica[rec.replica].push_back(*rec.value_error);
    }
    for (int r = 0; r < config.n_replicas; ++r) aucs[r] = compute_auc(per_replica[r]);

    Rng rng = make_rng(derive_seed(config.base_seed, 0x41756331ull + i));
    RobustnessRow row;
    row.sigma = sigma_grid[i];
    row.auc = aggregate_ci(aucs, 0.9, 1000, rng);
    row.auc.x = sigma_grid[i];
    rows.push_back(row);
  }
  return rows;
}

double compute_auc(std::span<const double> errors) {
  if (errors.empty()) throw std::invalid_argument("AUC of an empty series");
  double sum = std::accumulate(errors.begin(), errors.end(), 0.0);
  return sum;  // mean * span, unit spacing between recorded points
}

SummaryStat aggregate_ci(std::span<const double> values, double level, int resamples,
                         Rng& rng) {
  if (values.empty()) throw std::invalid_argument("confidence interval of an empty sample");
  if (!(level >= 0.0 && level < 1.0)) {
    throw std::invalid_argument("confidence level must lie in [0, 1)");
  }
  const int n = static_cast<int>(values.size());
  SummaryStat stat;
  stat.mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  if (level == 0.0) {
    stat.ci_lo = stat.ci_hi = stat.mean;
    return stat;
  }
  std::vector<double> means(resamples);
  for (int b = 0; b < resamples; ++b) {
    double sum = 0.0;
    for (int i = 0; i < n; ++i) sum += values[draw_index(rng, n)];
    means[b] = sum / n;
  }
  std::sort(means.begin(), means.end());
  auto quantile = [&](double q) {
    double pos = q * (resamples - 1);
    int lo = static_cast<int>(pos);
    int hi = std::min(lo + 1, resamples - 1);
    double frac = pos - lo;
    return means[lo] * (1.0 - frac) + means[hi] * frac;
  };
  stat.ci_lo = std::min(quantile((1.0 - level) / 2.0), stat.mean);
  stat.ci_hi = std::max(quantile(1.0 - (1.0 - level) / 2.0), stat.mean);
  return stat;
}

std::vector<SummaryStat> summarize_by_iteration(std::span<const MetricRecord> records,
                                                Task task, std::uint64_t seed) {
  std::map<int, std::vector<double>> by_iteration;
  for (const MetricRecord& rec : records) {
    double metric = task == Task::kControl ? rec.normalized_return.value()
                                           : rec.value_error.value();
    by_iteration[rec.iteration].push_back(metric);
  }
  std::vector<SummaryStat> summaries;
  summaries.reserve(by_iteration.size());
  for (const auto& [iteration, values] : by_iteration) {
    Rng rng = make_rng(derive_seed(seed, 0x53756d6dull + iteration));
    SummaryStat stat = aggregate_ci(values, 0.9, 1000, rng);
    stat.x = iteration;
    summaries.push_back(stat);
  }
  return summaries;
}

std::vector<SweepCell> run_lr_sweep(const ExperimentConfig& config, const LrGrids& grids) {
  if (grids.alpha_td.empty() || grids.alpha_model.empty() || grids.sc_multiplier.empty()) {
    throw std::invalid_argument("learning-rate grids must be non-empty");
  }
  std::vector<SweepCell> cells;
  for (double alpha_td : grids.alpha_td) {
    for (double alpha_model : grids.alpha_model) {
      for (double multiplier : grids.sc_multiplier) {
        ExperimentConfig cell_config = config;
        cell_config.alpha_td = alpha_td;
        cell_config.alpha_model = alpha_model;
        cell_config.alpha_plan = multiplier * alpha_model;
        RunResult result = cell_config.task == Task::kControl
                               ? run_control(cell_config)
                               : run_policy_evaluation(cell_config);

        std::vector<double> finals(cell_config.n_replicas, 0.0);
        std::vector<int> final_iteration(cell_config.n_replicas, -1);
        for (const MetricRecord& rec : result.records) {
          if (rec.iteration >= final_iteration[rec.replica]) {
            final_iteration[rec.replica] = rec.iteration;
            finals[rec.replica] = cell_config.task == Task::kControl
                                      ? rec.normalized_return.value()
                                      : rec.value_error.value();
          }
        }
        Rng rng = make_rng(derive_seed(config.base_seed, 0x53776565ull + cells.size()));
        SweepCell cell;
        cell.alpha_td = alpha_td;
        cell.alpha_model = alpha_model;
        cell.sc_multiplier = multiplier;
        cell.alpha_plan = *cell_config.alpha_plan;
        cell.final_metric = aggregate_ci(finals, 0.9, 1000, rng);
        cells.push_back(cell);
      }
    }
  }
  return cells;
}

const char* to_string(Task task) {
  return task == Task::kControl ? "control" : "evaluation";
}

const char* to_string(Algorithm algorithm) {
  switch (algorithm) {
    case Algorithm::kModelFree: return "model_free";
    case Algorithm::kDyna: return "dyna";
    case Algorithm::kScResidual: return "sc_residual";
    case Algorithm::kScDirect: return "sc_direct";
    case Algorithm::kScReverse: return "sc_reverse";
  }
  return "unknown";
}

const char* to_string(ModelObjective objective) {
  return objective == ModelObjective::kMle ? "mle" : "ve";
}

}  // namespace scmbrl
