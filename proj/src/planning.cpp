#include "scmbrl/planning.hpp"

#include <cmath>
#include <stdexcept>

namespace scmbrl {

namespace {

struct PlanningContext {
  int n_states = 0;
  int n_actions = 0;
  double discount = 0.0;
  std::vector<double> probs;   // softmaxed logits [s][a][s']
  std::vector<double> kernel;  // state kernel under mu: M(s,s') = sum_a mu(a|s) P(s'|s,a)
  std::vector<double> rho;     // policy-averaged reward: rho(s) = sum_a mu(a|s) r_hat(s,a)
};

PlanningContext make_context(const ModelParams& params, const Policy& mu,
                             double discount) {
  if (mu.n_states != params.n_states || mu.n_actions != params.n_actions) {
    throw std::invalid_argument("imagination policy shape does not match model");
  }
  PlanningContext ctx;
  ctx.n_states = params.n_states;
  ctx.n_actions = params.n_actions;
  ctx.discount = discount;
  ctx.probs = transition_probs(params);
  ctx.kernel.assign(static_cast<std::size_t>(ctx.n_states) * ctx.n_states, 0.0);
  ctx.rho.assign(ctx.n_states, 0.0);
  for (int s = 0; s < ctx.n_states; ++s) {
    double* kernel_row = ctx.kernel.data() + static_cast<std::size_t>(s) * ctx.n_states;
    for (int a = 0; a < ctx.n_actions; ++a) {
      double w = mu.prob(s, a);
      ctx.rho[s] += w * params.reward(s, a);
      const double* p_row = ctx.probs.data() +
                            (static_cast<std::size_t>(s) * ctx.n_actions + a) * ctx.n_states;
      for (int j = 0; j < ctx.n_states; ++j) kernel_row[j] += w * p_row[j];
    }
  }
  return ctx;
}

void check_rollout_args(const PlanningContext& ctx, const ValueTable& v_hat,
                        std::span<const int> starts, int horizon) {
  if (horizon < 0) throw std::invalid_argument("rollout horizon must be non-negative");
  if (starts.empty()) throw std::invalid_argument("planning start states must be non-empty");
  if (v_hat.size() != static_cast<std::size_t>(ctx.n_states)) {
    throw std::invalid_argument("value table length does not match model");
  }
  for (int s : starts) {
    if (s < 0 || s >= ctx.n_states) {
      throw std::invalid_argument("planning start state out of range");
    }
  }
}

// d_next(s') = sum_s d(s) M(s,s')
void propagate(const PlanningContext& ctx, const std::vector<double>& d,
               std::vector<double>& d_next) {
  const int n = ctx.n_states;
  d_next.assign(n, 0.0);
  for (int s = 0; s < n; ++s) {
    double mass = d[s];
    if (mass == 0.0) continue;
    const double* kernel_row = ctx.kernel.data() + static_cast<std::size_t>(s) * n;
    for (int j = 0; j < n; ++j) d_next[j] += mass * kernel_row[j];
  }
}

// Expected rollout from one start; fills dists (K+2 vectors), expected
// rewards (K+1) and expected values (K+2).
void forward_rollout(const PlanningContext& ctx, const ValueTable& v_hat,
                     int start_state, int horizon,
                     std::vector<std::vector<double>>& dists,
                     std::vector<double>& rbar, std::vector<double>& vbar) {
  const int n = ctx.n_states;
  dists.assign(horizon + 2, std::vector<double>(n, 0.0));
  dists[0][start_state] = 1.0;
  for (int k = 0; k <= horizon; ++k) propagate(ctx, dists[k], dists[k + 1]);
  rbar.assign(horizon + 1, 0.0);
  vbar.assign(horizon + 2, 0.0);
  for (int k = 0; k <= horizon + 1; ++k) {
    double rv = 0.0;
    double vv = 0.0;
    const std::vector<double>& d = dists[k];
    for (int s = 0; s < n; ++s) {
      rv += d[s] * ctx.rho[s];
      vv += d[s] * v_hat[s];
    }
    if (k <= horizon) rbar[k] = rv;
    vbar[k] = vv;
  }
}

// Accumulates the contribution of one start state. Gradients with respect to
// the state kernel are collected in kernel_grad (to be mapped through the
// policy mixture and the softmax once all starts are processed).
double accumulate_start(const PlanningContext& ctx, const ValueTable& v_hat,
                        int start_state, int horizon, ScVariant variant,
                        std::vector<double>* grad_value,
                        std::vector<double>* reward_coeff,
                        std::vector<double>* kernel_grad) {
  const int n = ctx.n_states;
  const double discount = ctx.discount;
  std::vector<std::vector<double>> dists;
  std::vector<double> rbar;
  std::vector<double> vbar;
  forward_rollout(ctx, v_hat, start_state, horizon, dists, rbar, vbar);

  double loss = 0.0;
  std::vector<double> err_scale(horizon + 1);  // 2 * delta_k
  for (int k = 0; k <= horizon; ++k) {
    double delta = rbar[k] + discount * vbar[k + 1] - vbar[k];
    loss += delta * delta;
    err_scale[k] = 2.0 * delta;
  }
  if (grad_value == nullptr) return loss;

  // Per-step chain coefficients: w_reward[k] multiplies the expected-reward
  // term, w_value[k] the expected-value term, with frozen terms dropped.
  std::vector<double> w_reward(horizon + 2, 0.0);
  std::vector<double> w_value(horizon + 2, 0.0);
  for (int k = 0; k <= horizon; ++k) {
    switch (variant) {
      case ScVariant::kResidual:
        w_reward[k] += err_scale[k];
        w_value[k] -= err_scale[k];
        w_value[k + 1] += discount * err_scale[k];
        break;
      case ScVariant::kDirect:
      case ScVariant::kDynaValueOnly:
        w_value[k] -= err_scale[k];
        break;
      case ScVariant::kReverse:
        w_reward[k] += err_scale[k];
        w_value[k + 1] += discount * err_scale[k];
        break;
    }
  }

  for (int k = 0; k <= horizon + 1; ++k) {
    if (w_value[k] == 0.0) continue;
    const std::vector<double>& d = dists[k];
    for (int s = 0; s < n; ++s) (*grad_value)[s] += w_value[k] * d[s];
  }

  if (variant == ScVariant::kDynaValueOnly) return loss;

  for (int k = 0; k <= horizon; ++k) {
    if (w_reward[k] == 0.0) continue;
    const std::vector<double>& d = dists[k];
    for (int s = 0; s < n; ++s) (*reward_coeff)[s] += w_reward[k] * d[s];
  }

  // Reverse-mode sweep over the distribution recursion
  // d_{k+1} = M^T d_k: adjoint(k) = direct(k) + M adjoint(k+1), where
  // direct(k)(s) = w_reward[k] rho(s) + w_value[k] v_hat(s).
  std::vector<std::vector<double>> adjoint(horizon + 2, std::vector<double>(n, 0.0));
  for (int k = horizon + 1; k >= 1; --k) {
    std::vector<double>& adj = adjoint[k];
    double wr = (k <= horizon) ? w_reward[k] : 0.0;
    for (int s = 0; s < n; ++s) adj[s] = wr * ctx.rho[s] + w_value[k] * v_hat[s];
    if (k <= horizon) {
      const std::vector<double>& next = adjoint[k + 1];
      for (int s = 0; s < n; ++s) {
        const double* kernel_row = ctx.kernel.data() + static_cast<std::size_t>(s) * n;
        double acc = 0.0;
        for (int j = 0; j < n; ++j) acc += kernel_row[j] * next[j];
        adj[s] += acc;
      }
    }
  }
  // dL/dM(s,s') = sum_{k=0..K} d_k(s) adjoint_{k+1}(s')
  for (int k = 0; k <= horizon; ++k) {
    const std::vector<double>& d = dists[k];
    const std::vector<double>& adj = adjoint[k + 1];
    for (int s = 0; s < n; ++s) {
      double mass = d[s];
      if (mass == 0.0) continue;
      double* row = kernel_grad->data() + static_cast<std::size_t>(s) * n;
      for (int j = 0; j < n; ++j) row[j] += mass * adj[j];
    }
  }
  return loss;
}

}  // namespace

RolloutDistributions rollout_distributions(const ModelParams& params, const Policy& mu,
                                           int start_state, int horizon,
                                           const ValueTable& v_hat) {
  PlanningContext ctx = make_context(params, mu, 0.0);
  int starts[1] = {start_state};
  check_rollout_args(ctx, v_hat, starts, horizon);
  RolloutDistributions out;
  out.start_state = start_state;
  out.horizon = horizon;
  forward_rollout(ctx, v_hat, start_state, horizon, out.state_dists,
                  out.expected_rewards, out.expected_values);
  return out;
}

double sc_loss(const ModelParams& params, const ValueTable& v_hat, const Policy& mu,
               std::span<const int> starts, int horizon, ScVariant variant,
               double discount) {
  (void)variant;  // the loss value is shared by all variants
  PlanningContext ctx = make_context(params, mu, discount);
  check_rollout_args(ctx, v_hat, starts, horizon);
  double loss = 0.0;
  for (int s0 : starts) {
    loss += accumulate_start(ctx, v_hat, s0, horizon, ScVariant::kResidual, nullptr,
                             nullptr, nullptr);
  }
  return loss;
}

PlanningGradients sc_gradients(const ModelParams& params, const ValueTable& v_hat,
                               const Policy& mu, std::span<const int> starts,
                               int horizon, ScVariant variant, double discount) {
  PlanningContext ctx = make_context(params, mu, discount);
  check_rollout_args(ctx, v_hat, starts, horizon);
  const int n = ctx.n_states;
  const int n_actions = ctx.n_actions;

  PlanningGradients grads;
  grads.grad_logits.assign(params.logits.size(), 0.0);
  grads.grad_reward.assign(params.reward_hat.size(), 0.0);
  grads.grad_value.assign(n, 0.0);

  std::vector<double> reward_coeff(n, 0.0);
  std::vector<double> kernel_grad(static_cast<std::size_t>(n) * n, 0.0);
  for (int s0 : starts) {
    accumulate_start(ctx, v_hat, s0, horizon, variant, &grads.grad_value,
                     &reward_coeff, &kernel_grad);
  }
  if (variant == ScVariant::kDynaValueOnly) return grads;

  // grad_reward(s,a) = reward_coeff(s) mu(a|s); dL/dP(s'|s,a) =
  // mu(a|s) dL/dM(s,s'), then through the softmax jacobian per row.
  for (int s = 0; s < n; ++s) {
    const double* kernel_row = kernel_grad.data() + static_cast<std::size_t>(s) * n;
    for (int a = 0; a < n_actions; ++a) {
      double w = mu.prob(s, a);
      grads.grad_reward[static_cast<std::size_t>(s) * n_actions + a] =
          reward_coeff[s] * w;
      const double* p_row = ctx.probs.data() +
                            (static_cast<std::size_t>(s) * n_actions + a) * n;
      double* out_row = grads.grad_logits.data() +
                        (static_cast<std::size_t>(s) * n_actions + a) * n;
      double mean = 0.0;
      for (int j = 0; j < n; ++j) mean += p_row[j] * kernel_row[j];
      for (int j = 0; j < n; ++j) {
        out_row[j] = w * p_row[j] * (kernel_row[j] - mean);
      }
    }
  }
  return grads;
}

void apply_planning_update(ModelParams& params, ValueTable& v_hat,
                           const PlanningGradients& grads, double alpha_plan) {
  if (!(alpha_plan > 0.0)) throw std::invalid_argument("alpha_plan must be positive");
  if (grads.grad_logits.size() != params.logits.size() ||
      grads.grad_reward.size() != params.reward_hat.size() ||
      grads.grad_value.size() != v_hat.size()) {
    throw std::invalid_argument("gradient shapes do not match parameters");
  }
  for (std::size_t i = 0; i < params.logits.size(); ++i) {
    params.logits[i] -= alpha_plan * grads.grad_logits[i];
  }
  for (std::size_t i = 0; i < params.reward_hat.size(); ++i) {
    params.reward_hat[i] -= alpha_plan * grads.grad_reward[i];
  }
  for (std::size_t i = 0; i < v_hat.size(); ++i) {
    v_hat[i] -= alpha_plan * grads.grad_value[i];
  }
}

Policy imagination_policy(const Policy& base, const ImaginationMode& mode) {
  if (mode.kind == ImaginationMode::Kind::kOnPolicy) return base;
  if (!(mode.epsilon >= 0.0 && mode.epsilon <= 1.0)) {
    throw std::invalid_argument("imagination epsilon must lie in [0, 1]");
  }
  Policy mixed = base;
  double uniform = 1.0 / base.n_actions;
  for (double& p : mixed.probs) {
    p = (1.0 - mode.epsilon) * p + mode.epsilon * uniform;
  }
  return mixed;
}

std::vector<int> select_planning_starts(int n_states, const StartMode& mode, Rng& rng) {
  if (n_states < 1) throw std::invalid_argument("state count must be positive");
  std::vector<int> starts;
  if (mode.kind == StartMode::Kind::kAllStates) {
    starts.resize(n_states);
    for (int s = 0; s < n_states; ++s) starts[s] = s;
  } else {
    if (mode.sample_count < 1) {
      throw std::invalid_argument("sampled start count must be at least 1");
    }
    starts.resize(mode.sample_count);
    for (int& s : starts) s = draw_index(rng, n_states);
  }
  return starts;
}

}  // namespace scmbrl
