// End-to-end acceptance suite. Each criterion prints exactly one PASS/FAIL
// line; the process exits non-zero if any criterion fails.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "scmbrl/cli.hpp"
#include "scmbrl/experiment.hpp"
#include "scmbrl/serialize.hpp"

using namespace scmbrl;
namespace fs = std::filesystem;

namespace {

int g_failures = 0;

void report(const std::string& name, bool pass, const std::string& detail) {
  if (pass) {
    std::printf("PASS %-24s %s\n", name.c_str(), detail.c_str());
  } else {
    std::printf("FAIL %-24s %s\n", name.c_str(), detail.c_str());
    ++g_failures;
  }
  std::fflush(stdout);
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

double max_abs(const std::vector<double>& v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

std::vector<int> all_states(int n) {
  std::vector<int> s(n);
  std::iota(s.begin(), s.end(), 0);
  return s;
}

ValueTable model_value(const ModelParams& params, const Policy& mu, double discount) {
  std::vector<double> probs = transition_probs(params);
  return value_under_model(probs, params.reward_hat, params.n_states,
                           params.n_actions, discount, mu);
}

// ---------------------------------------------------------------------------
// Criterion: exact solvers.

void exact_solver_suite() {
  auto start = std::chrono::steady_clock::now();
  Rng rng = make_rng(2024);
  double worst_policy_residual = 0.0;
  double worst_optimal_residual = 0.0;
  for (int i = 0; i < 100; ++i) {
    TabularMdp mdp = generate_garnet(20, 4, rng, 0.99);
    Policy pi = uniform_policy(20, 4);
    ValueTable v = policy_value_exact(mdp, pi);
    ValueTable tv = bellman_apply(mdp, pi, v);
    for (int s = 0; s < 20; ++s) {
      worst_policy_residual = std::max(worst_policy_residual, std::abs(tv[s] - v[s]));
    }
    ValueTable v_star = optimal_value_exact(mdp, 1e-9, 2000000);
    for (int s = 0; s < 20; ++s) {
      double best = -1e300;
      for (int a = 0; a < 4; ++a) {
        double q = mdp.reward(s, a);
        for (int j = 0; j < 20; ++j) q += mdp.discount * mdp.transition(s, a, j) * v_star[j];
        best = std::max(best, q);
      }
      worst_optimal_residual = std::max(worst_optimal_residual, std::abs(best - v_star[s]));
    }
  }
  double worst_brute_gap = 0.0;
  for (int i = 0; i < 20; ++i) {
    int n = 2 + draw_index(rng, 4);  // 2..5 states
    int m = 2 + draw_index(rng, 2);  // 2..3 actions
    TabularMdp mdp = generate_garnet(n, m, rng, 0.9);
    ValueTable vi = optimal_value_exact(mdp, 1e-10, 2000000);
    ValueTable brute = testing::optimal_value_bruteforce(mdp);
    for (int s = 0; s < n; ++s) {
      worst_brute_gap = std::max(worst_brute_gap, std::abs(vi[s] - brute[s]));
    }
  }
  double elapsed = seconds_since(start);
  bool pass = worst_policy_residual <= 1e-9 && worst_optimal_residual <= 1e-9 &&
              worst_brute_gap <= 1e-6 && elapsed < 10.0;
  std::ostringstream detail;
  detail << "policy residual " << worst_policy_residual << ", optimality residual "
         << worst_optimal_residual << ", brute-force gap " << worst_brute_gap << ", "
         << elapsed << " s";
  report("exact_solvers", pass, detail.str());
}

// ---------------------------------------------------------------------------
// Criterion: analytic gradients vs variant-aware finite differences.

void gradient_suite() {
  constexpr ScVariant kVariants[] = {ScVariant::kResidual, ScVariant::kDirect,
                                     ScVariant::kReverse, ScVariant::kDynaValueOnly};
  Rng rng = make_rng(4202);
  const double eps = 1e-5;
  double worst_planning = 0.0;
  for (int instance = 0; instance < 50; ++instance) {
    int n = 3 + draw_index(rng, 4);
    int m = 2 + draw_index(rng, 2);
    int horizon = draw_index(rng, 4);
    ModelParams params = testing::random_model(n, m, rng);
    Policy mu = testing::random_policy(n, m, rng);
    ValueTable v = testing::random_values(n, rng);
    std::vector<int> starts = all_states(n);
    const double discount = 0.9;

    for (ScVariant variant : kVariants) {
      testing::FrozenTerms frozen =
          testing::capture_frozen(variant, params, v, mu, starts, horizon, discount);
      PlanningGradients analytic =
          sc_gradients(params, v, mu, starts, horizon, variant, discount);

      auto fd_over = [&](std::vector<double>& block) {
        std::vector<double> grad(block.size(), 0.0);
        for (std::size_t i = 0; i < block.size(); ++i) {
          double saved = block[i];
          grad[i] = testing::central_difference(
              [&](double x) {
                block[i] = x;
                return testing::sc_loss_frozen(variant, params, v, mu, starts, horizon,
                                               discount, frozen);
              },
              saved, eps);
          block[i] = saved;
        }
        return grad;
      };
      worst_planning = std::max(
          worst_planning,
          testing::gradient_relative_error(analytic.grad_value, fd_over(v)));
      if (variant != ScVariant::kDynaValueOnly) {
        worst_planning = std::max(
            worst_planning,
            testing::gradient_relative_error(analytic.grad_logits, fd_over(params.logits)));
        worst_planning = std::max(worst_planning,
                                  testing::gradient_relative_error(
                                      analytic.grad_reward, fd_over(params.reward_hat)));
      }
    }
  }

  // Grounded model objectives against plain finite differences.
  double worst_mle = 0.0;
  double worst_ve = 0.0;
  for (int instance = 0; instance < 20; ++instance) {
    int n = 3 + draw_index(rng, 3);
    int m = 2 + draw_index(rng, 2);
    ModelParams params = testing::random_model(n, m, rng);
    ValueTable v = testing::random_values(n, rng);
    Policy pi = testing::random_policy(n, m, rng);
    TransitionSample t{draw_index(rng, n), draw_index(rng, m), 0.0, draw_index(rng, n)};

    ModelParams stepped = params;
    mle_model_update(stepped, {&t, 1}, 1.0);
    std::vector<double> mle_analytic(params.logits.size());
    for (std::size_t i = 0; i < mle_analytic.size(); ++i) {
      mle_analytic[i] = stepped.logits[i] - params.logits[i];
    }
    std::vector<double> mle_fd(params.logits.size());
    for (std::size_t i = 0; i < mle_fd.size(); ++i) {
      ModelParams probe = params;
      mle_fd[i] = testing::central_difference(
          [&](double x) {
            probe.logits[i] = x;
            std::vector<double> row(probe.logit_row(t.state, t.action).begin(),
                                    probe.logit_row(t.state, t.action).end());
            return std::log(testing::softmax_naive(row)[t.next_state]);
          },
          params.logits[i], eps);
    }
    worst_mle = std::max(worst_mle,
                         testing::gradient_relative_error(mle_analytic, mle_fd));

    ModelParams ve_stepped = params;
    ve_model_update(ve_stepped, {&t, 1}, v, pi, 1.0);
    std::vector<double> ve_analytic(params.logits.size());
    for (std::size_t i = 0; i < ve_analytic.size(); ++i) {
      ve_analytic[i] = params.logits[i] - ve_stepped.logits[i];
    }
    auto ve_loss = [&](const ModelParams& p) {
      double prediction = 0.0;
      for (int a = 0; a < m; ++a) {
        std::vector<double> row(p.logit_row(t.state, a).begin(),
                                p.logit_row(t.state, a).end());
        std::vector<double> probs = testing::softmax_naive(row);
        double mean = 0.0;
        for (int j = 0; j < n; ++j) mean += probs[j] * v[j];
        prediction += pi.prob(t.state, a) * mean;
      }
      double gap = prediction - v[t.next_state];
      return gap * gap;
    };
    std::vector<double> ve_fd(params.logits.size());
    for (std::size_t i = 0; i < ve_fd.size(); ++i) {
      ModelParams probe = params;
      ve_fd[i] = testing::central_difference(
          [&](double x) {
            probe.logits[i] = x;
            return ve_loss(probe);
          },
          params.logits[i], eps);
    }
    worst_ve = std::max(worst_ve, testing::gradient_relative_error(ve_analytic, ve_fd));
  }

  bool pass = worst_planning <= 1e-4 && worst_mle <= 1e-5 && worst_ve <= 1e-5;
  std::ostringstream detail;
  detail << "planning rel err " << worst_planning << ", mle " << worst_mle << ", ve "
         << worst_ve;
  report("gradients", pass, detail.str());
}

// ---------------------------------------------------------------------------
// Criterion: structural stop-gradient facts (exact).

void structural_suite() {
  Rng rng = make_rng(777);
  bool pass = true;
  std::string detail = "direct/reward, direct@K0, reverse@K0, dyna, zero-pair all hold";
  for (int trial = 0; trial < 20 && pass; ++trial) {
    int n = 3 + draw_index(rng, 4);
    int m = 2 + draw_index(rng, 2);
    int horizon = draw_index(rng, 4);
    ModelParams params = testing::random_model(n, m, rng);
    Policy mu = testing::random_policy(n, m, rng);
    ValueTable v = testing::random_values(n, rng);
    std::vector<int> starts = all_states(n);

    PlanningGradients direct =
        sc_gradients(params, v, mu, starts, horizon, ScVariant::kDirect, 0.99);
    if (max_abs(direct.grad_reward) != 0.0) {
      pass = false;
      detail = "direct produced a reward gradient";
    }
    PlanningGradients direct0 =
        sc_gradients(params, v, mu, starts, 0, ScVariant::kDirect, 0.99);
    if (max_abs(direct0.grad_logits) != 0.0 || max_abs(direct0.grad_reward) != 0.0) {
      pass = false;
      detail = "direct at K=0 touched model parameters";
    }
    PlanningGradients reverse0 =
        sc_gradients(params, v, mu, starts, 0, ScVariant::kReverse, 0.99);
    if (max_abs(reverse0.grad_logits) == 0.0 || max_abs(reverse0.grad_reward) == 0.0) {
      pass = false;
      detail = "reverse at K=0 missed a model parameter path";
    }
    PlanningGradients dyna =
        sc_gradients(params, v, mu, starts, horizon, ScVariant::kDynaValueOnly, 0.99);
    if (max_abs(dyna.grad_logits) != 0.0 || max_abs(dyna.grad_reward) != 0.0) {
      pass = false;
      detail = "dyna touched model parameters";
    }
    ModelParams zero_reward = params;
    zero_reward.reward_hat.assign(zero_reward.reward_hat.size(), 0.0);
    ValueTable zeros(n, 0.0);
    if (sc_loss(zero_reward, zeros, mu, starts, horizon, ScVariant::kResidual, 0.99) != 0.0) {
      pass = false;
      detail = "zero reward and value pair has nonzero loss";
    }
  }
  report("stop_gradients", pass, detail);
}

// ---------------------------------------------------------------------------
// Criterion: self-consistent fixed points are stationary.

void fixed_point_suite() {
  constexpr ScVariant kVariants[] = {ScVariant::kResidual, ScVariant::kDirect,
                                     ScVariant::kReverse, ScVariant::kDynaValueOnly};
  Rng rng = make_rng(990);
  double worst_loss = 0.0;
  double worst_grad = 0.0;
  double worst_dyna = 0.0;
  for (int trial = 0; trial < 10; ++trial) {
    TabularMdp mdp = generate_garnet(6, 3, rng, 0.95);
    Policy mu = testing::random_policy(6, 3, rng);
    ModelParams params = model_from_mdp(mdp);  // softmax floor 1e-12
    ValueTable v = model_value(params, mu, mdp.discount);
    worst_loss = std::max(
        worst_loss, sc_loss(params, v, mu, all_states(6), 2, ScVariant::kDirect, mdp.discount));
    for (ScVariant variant : kVariants) {
      PlanningGradients g =
          sc_gradients(params, v, mu, all_states(6), 2, variant, mdp.discount);
      worst_grad = std::max({worst_grad, max_abs(g.grad_value), max_abs(g.grad_reward),
                             max_abs(g.grad_logits)});
    }
    // Dyna at an arbitrary model's own value.
    ModelParams random_params = testing::random_model(6, 3, rng);
    ValueTable v_model = model_value(random_params, mu, mdp.discount);
    PlanningGradients dyna = sc_gradients(random_params, v_model, mu, all_states(6), 2,
                                          ScVariant::kDynaValueOnly, mdp.discount);
    worst_dyna = std::max(worst_dyna, max_abs(dyna.grad_value));
  }
  bool pass = worst_loss <= 1e-8 && worst_grad <= 1e-6 && worst_dyna <= 1e-8;
  std::ostringstream detail;
  detail << "loss " << worst_loss << ", gradient " << worst_grad << ", dyna " << worst_dyna;
  report("fixed_points", pass, detail.str());
}

// ---------------------------------------------------------------------------
// Policy-evaluation and control reproductions at full scale.

struct FinalStats {
  SummaryStat stat;
  std::vector<double> finals;
};

FinalStats final_metric(const RunResult& result, const ExperimentConfig& config) {
  FinalStats out;
  out.finals.assign(config.n_replicas, 0.0);
  for (const MetricRecord& rec : result.records) {
    if (rec.iteration != config.iterations) continue;
    out.finals[rec.replica] = config.task == Task::kControl ? *rec.normalized_return
                                                            : *rec.value_error;
  }
  Rng rng = make_rng(derive_seed(config.base_seed, 0xF17A1ull));
  out.stat = aggregate_ci(out.finals, 0.9, 1000, rng);
  return out;
}

ExperimentConfig full_scale_config(Task task, Algorithm algorithm,
                                    ModelObjective objective) {
  ExperimentConfig config;
  config.task = task;
  config.algorithm = algorithm;
  config.model_objective = objective;
  config.iterations = 2000;
  config.eval_interval = 20;
  config.n_replicas = 30;
  return config;  // library defaults elsewhere: 20 states, 4 actions, seed 1
}

void figure_eval_suite() {
  auto start = std::chrono::steady_clock::now();
  bool pass = true;
  std::ostringstream detail;
  for (ModelObjective objective : {ModelObjective::kMle, ModelObjective::kVe}) {
    std::map<Algorithm, FinalStats> stats;
    for (Algorithm algorithm : {Algorithm::kModelFree, Algorithm::kDyna,
                                Algorithm::kScDirect, Algorithm::kScReverse}) {
      ExperimentConfig config =
          full_scale_config(Task::kEvaluation, algorithm, objective);
      stats[algorithm] = final_metric(run_policy_evaluation(config), config);
    }
    double sc = stats[Algorithm::kScDirect].stat.mean;
    double dyna = stats[Algorithm::kDyna].stat.mean;
    double mf = stats[Algorithm::kModelFree].stat.mean;
    double reverse = stats[Algorithm::kScReverse].stat.mean;
    bool ordering = sc < dyna && dyna < mf;
    bool disjoint = stats[Algorithm::kScDirect].stat.ci_hi <
                    stats[Algorithm::kModelFree].stat.ci_lo;
    bool reverse_harmful = reverse > dyna;
    pass = pass && ordering && disjoint && reverse_harmful;
    detail << to_string(objective) << ": sc_direct " << sc << " < dyna " << dyna
           << " < model_free " << mf << " (reverse " << reverse << "); ";
  }
  double elapsed = seconds_since(start);
  detail << elapsed << " s";
  pass = pass && elapsed < 300.0;
  report("evaluation_ordering", pass, detail.str());
}

void figure_control_suite() {
  auto start = std::chrono::steady_clock::now();
  std::map<Algorithm, double> finals;
  for (Algorithm algorithm :
       {Algorithm::kModelFree, Algorithm::kDyna, Algorithm::kScResidual,
        Algorithm::kScDirect, Algorithm::kScReverse}) {
    ExperimentConfig config =
        full_scale_config(Task::kControl, algorithm, ModelObjective::kMle);
    finals[algorithm] = final_metric(run_control(config), config).stat.mean;
  }
  bool pass = true;
  for (const auto& [algorithm, value] : finals) {
    if (algorithm != Algorithm::kScDirect && value > finals[Algorithm::kScDirect]) {
      pass = false;
    }
  }
  double elapsed = seconds_since(start);
  std::ostringstream detail;
  detail << "normalized returns: sc_direct " << finals[Algorithm::kScDirect]
         << ", model_free " << finals[Algorithm::kModelFree] << ", dyna "
         << finals[Algorithm::kDyna] << ", sc_residual "
         << finals[Algorithm::kScResidual] << ", sc_reverse "
         << finals[Algorithm::kScReverse] << "; " << elapsed << " s";
  report("control_ordering", pass, detail.str());
}

void figure_robustness_suite() {
  auto start = std::chrono::steady_clock::now();
  std::vector<double> grid = {0.0, 0.25, 0.5, 1.0, 2.0};
  std::map<Algorithm, std::vector<RobustnessRow>> rows;
  for (Algorithm algorithm : {Algorithm::kScDirect, Algorithm::kDyna}) {
    ExperimentConfig config =
        full_scale_config(Task::kEvaluation, algorithm, ModelObjective::kMle);
    rows[algorithm] = run_robustness_sweep(config, grid, NoiseTarget::kRewardInit);
  }
  double sc_rise = rows[Algorithm::kScDirect].back().auc.mean -
                   rows[Algorithm::kScDirect].front().auc.mean;
  double dyna_rise = rows[Algorithm::kDyna].back().auc.mean -
                     rows[Algorithm::kDyna].front().auc.mean;
  double elapsed = seconds_since(start);
  bool pass = sc_rise > dyna_rise && elapsed < 600.0;
  std::ostringstream detail;
  detail << "AUC rise sc_direct " << sc_rise << " vs dyna " << dyna_rise << "; " << elapsed
         << " s";
  report("reward_noise_robustness", pass, detail.str());
}

// ---------------------------------------------------------------------------
// Criterion: determinism and serialization.

void determinism_io_suite() {
  bool pass = true;
  std::string detail = "identical invocations byte-identical; round-trips exact";
  fs::path base = fs::temp_directory_path() / "sc_mbrl_acceptance";
  fs::remove_all(base);
  fs::create_directories(base);

  auto invoke = [&](const std::vector<std::string>& args) {
    std::ostringstream sink;
    return run_cli(args, sink, sink);
  };
  std::vector<std::string> eval_args = {
      "evaluate",   "--algorithm", "sc_direct", "--model",    "mle",
      "--iterations", "40",        "--replicas", "3",         "--n-states",
      "6",          "--n-actions", "2",         "--eval-interval", "10",
      "--seed",     "5",           "--out",     (base / "run").string()};
  const char* outputs[] = {"metrics.jsonl", "metrics.csv", "summary_sc_direct_mle.csv",
                           "resolved_config.json"};
  std::map<std::string, std::string> first_pass;
  if (invoke(eval_args) != 0) {
    pass = false;
    detail = "evaluate invocation failed";
  }
  for (const char* name : outputs) {
    first_pass[name] = read_text_file((base / "run" / name).string());
  }
  if (invoke(eval_args) != 0) {
    pass = false;
    detail = "repeated evaluate invocation failed";
  }
  for (const char* name : outputs) {
    if (read_text_file((base / "run" / name).string()) != first_pass[name]) {
      pass = false;
      detail = std::string("file differs between identical invocations: ") + name;
    }
  }

  if (invoke({"generate", "--seed", "11", "--out", (base / "gen1").string()}) != 0 ||
      invoke({"generate", "--seed", "11", "--out", (base / "gen2").string()}) != 0) {
    pass = false;
    detail = "generate invocation failed";
  } else if (read_text_file((base / "gen1" / "mdp.json").string()) !=
             read_text_file((base / "gen2" / "mdp.json").string())) {
    pass = false;
    detail = "generated MDP files differ for equal seeds";
  }

  // Value-exact serialization round-trips.
  Rng rng = make_rng(0xAB);
  TabularMdp mdp = generate_garnet(9, 4, rng, 0.99);
  std::uint64_t seed_back = 0;
  TabularMdp mdp_back = mdp_from_json(mdp_to_json(mdp, 0xAB), &seed_back);
  if (mdp_back.transitions != mdp.transitions || mdp_back.rewards != mdp.rewards ||
      mdp_back.discount != mdp.discount || seed_back != 0xAB) {
    pass = false;
    detail = "MDP serialization is not value-exact";
  }
  ModelParams params = testing::random_model(5, 3, rng);
  ModelParams params_back = model_params_from_json(model_params_to_json(params));
  if (params_back.logits != params.logits || params_back.reward_hat != params.reward_hat) {
    pass = false;
    detail = "model serialization is not value-exact";
  }
  fs::remove_all(base);
  report("determinism_io", pass, detail);
}

}  // namespace

int main() {
  exact_solver_suite();
  gradient_suite();
  structural_suite();
  fixed_point_suite();
  figure_eval_suite();
  figure_control_suite();
  figure_robustness_suite();
  determinism_io_suite();
  if (g_failures > 0) {
    std::printf("%d criterion(s) failed\n", g_failures);
    return 1;
  }
  std::printf("all criteria passed\n");
  return 0;
}
