#include "scmbrl/model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace scmbrl {

namespace {

void check_sample_bounds(const ModelParams& params, const TransitionSample& t) {
  if (t.state < 0 || t.state >= params.n_states || t.action < 0 ||
      t.action >= params.n_actions || t.next_state < 0 ||
      t.next_state >= params.n_states) {
    throw std::invalid_argument("transition sample index out of range");
  }
}

}  // namespace

void softmax_row(std::span<const double> logits, std::span<double> probs_out) {
  double max_logit = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    probs_out[i] = std::exp(logits[i] - max_logit);
    sum += probs_out[i];
  }
  for (std::size_t i = 0; i < logits.size(); ++i) probs_out[i] /= sum;
}

std::vector<double> transition_probs(const ModelParams& params) {
  std::vector<double> probs(params.logits.size());
  const std::size_t n = params.n_states;
  for (std::size_t row = 0; row < probs.size() / n; ++row) {
    softmax_row({params.logits.data() + row * n, n}, {probs.data() + row * n, n});
  }
  return probs;
}

ModelParams init_model(int n_states, int n_actions, Rng& rng,
                       std::optional<double> reward_noise_sigma,
                       const TabularMdp* mdp) {
  if (n_states < 1 || n_actions < 1) {
    throw std::invalid_argument("state and action counts must be positive");
  }
  ModelParams params;
  params.n_states = n_states;
  params.n_actions = n_actions;
  params.reward_hat.resize(static_cast<std::size_t>(n_states) * n_actions);
  params.logits.resize(static_cast<std::size_t>(n_states) * n_actions * n_states);

  if (reward_noise_sigma.has_value()) {
    if (mdp == nullptr) {
      throw std::invalid_argument("noisy reward initialization requires the true MDP");
    }
    if (*reward_noise_sigma < 0.0) {
      throw std::invalid_argument("noise sigma must be non-negative");
    }
    if (mdp->n_states != n_states || mdp->n_actions != n_actions) {
      throw std::invalid_argument("MDP shape does not match requested model shape");
    }
    for (std::size_t i = 0; i < params.reward_hat.size(); ++i) {
      params.reward_hat[i] = mdp->rewards[i] + *reward_noise_sigma * draw_normal(rng);
    }
  } else {
    for (double& r : params.reward_hat) r = draw_normal(rng);
  }

  // Dirichlet(1,...,1) row: normalized exponentials; logits are its log.
  std::vector<double> draw(n_states);
  for (int s = 0; s < n_states; ++s) {
    for (int a = 0; a < n_actions; ++a) {
      double sum = 0.0;
      for (int j = 0; j < n_states; ++j) {
        draw[j] = draw_exponential(rng);
        sum += draw[j];
      }
      std::span<double> row = params.logit_row(s, a);
      for (int j = 0; j < n_states; ++j) row[j] = std::log(draw[j] / sum);
    }
  }
  return params;
}

ModelParams model_from_mdp(const TabularMdp& mdp, double floor) {
  ModelParams params;
  params.n_states = mdp.n_states;
  params.n_actions = mdp.n_actions;
  params.reward_hat = mdp.rewards;
  params.logits.resize(mdp.transitions.size());
  for (std::size_t i = 0; i < mdp.transitions.size(); ++i) {
    params.logits[i] = std::log(mdp.transitions[i] + floor);
  }
  return params;
}

void grounded_reward_update(ModelParams& params, std::span<const TransitionSample> batch,
                            double alpha_r) {
  if (!(alpha_r > 0.0 && alpha_r <= 1.0)) {
    throw std::invalid_argument("alpha_r must lie in (0, 1]");
  }
  for (const TransitionSample& t : batch) {
    check_sample_bounds(params, t);
    double& r_hat = params.reward_hat[static_cast<std::size_t>(t.state) * params.n_actions + t.action];
    r_hat += alpha_r * (t.reward - r_hat);
  }
}

void mle_model_update(ModelParams& params, std::span<const TransitionSample> batch,
                      double alpha_mle) {
  if (!(alpha_mle > 0.0)) throw std::invalid_argument("alpha_mle must be positive");
  std::vector<double> probs(params.n_states);
  for (const TransitionSample& t : batch) {
    check_sample_bounds(params, t);
    std::span<double> row = params.logit_row(t.state, t.action);
    softmax_row(row, probs);
    for (int j = 0; j < params.n_states; ++j) {
      double onehot = (j == t.next_state) ? 1.0 : 0.0;
      row[j] += alpha_mle * (onehot - probs[j]);
    }
  }
}

void ve_model_update(ModelParams& params, std::span<const TransitionSample> batch,
                     const ValueTable& v_hat, const Policy& policy, double alpha_ve) {
  if (!(alpha_ve > 0.0)) throw std::invalid_argument("alpha_ve must be positive");
  if (v_hat.size() != static_cast<std::size_t>(params.n_states) ||
      policy.n_states != params.n_states || policy.n_actions != params.n_actions) {
    throw std::invalid_argument("value or policy shape does not match model");
  }
  const int n_actions = params.n_actions;
  std::vector<double> probs(static_cast<std::size_t>(n_actions) * params.n_states);
  std::vector<double> mean_value(n_actions);
  for (const TransitionSample& t : batch) {
    check_sample_bounds(params, t);
    // Prediction: policy-averaged expected next-state value at the sampled state.
    double prediction = 0.0;
    for (int a = 0; a < n_actions; ++a) {
      std::span<double> p_row{probs.data() + static_cast<std::size_t>(a) * params.n_states,
                              static_cast<std::size_t>(params.n_states)};
      softmax_row(params.logit_row(t.state, a), p_row);
      double m = 0.0;
      for (int j = 0; j < params.n_states; ++j) m += p_row[j] * v_hat[j];
      mean_value[a] = m;
      prediction += policy.prob(t.state, a) * m;
    }
    double gap = 2.0 * (prediction - v_hat[t.next_state]);
    for (int a = 0; a < n_actions; ++a) {
      const double* p_row = probs.data() + static_cast<std::size_t>(a) * params.n_states;
      std::span<double> row = params.logit_row(t.state, a);
      double scale = gap * policy.prob(t.state, a);
      for (int j = 0; j < params.n_states; ++j) {
        row[j] -= alpha_ve * scale * p_row[j] * (v_hat[j] - mean_value[a]);
      }
    }
  }
}

std::vector<double> model_q_values(const ModelParams& params, const ValueTable& v_hat,
                                   double discount) {
  if (v_hat.size() != static_cast<std::size_t>(params.n_states)) {
    throw std::invalid_argument("value table length does not match model");
  }
  std::vector<double> q(static_cast<std::size_t>(params.n_states) * params.n_actions);
  std::vector<double> probs(params.n_states);
  for (int s = 0; s < params.n_states; ++s) {
    for (int a = 0; a < params.n_actions; ++a) {
      softmax_row(params.logit_row(s, a), probs);
      double ev = 0.0;
      for (int j = 0; j < params.n_states; ++j) ev += probs[j] * v_hat[j];
      q[static_cast<std::size_t>(s) * params.n_actions + a] =
          params.reward(s, a) + discount * ev;
    }
  }
  return q;
}

ModelDiagnostics model_diagnostics(const ModelParams& params, const TabularMdp& mdp) {
  if (params.n_states != mdp.n_states || params.n_actions != mdp.n_actions) {
    throw std::invalid_argument("model shape does not match MDP");
  }
  ModelDiagnostics diag;
  std::vector<double> probs(params.n_states);
  for (int s = 0; s < params.n_states; ++s) {
    for (int a = 0; a < params.n_actions; ++a) {
      softmax_row(params.logit_row(s, a), probs);
      std::span<const double> truth = mdp.transition_row(s, a);
      double l1 = 0.0;
      for (int j = 0; j < params.n_states; ++j) l1 += std::abs(probs[j] - truth[j]);
      diag.max_tv_distance = std::max(diag.max_tv_distance, 0.5 * l1);
      diag.max_reward_error =
          std::max(diag.max_reward_error, std::abs(params.reward(s, a) - mdp.reward(s, a)));
    }
  }
  return diag;
}

}  // namespace scmbrl
