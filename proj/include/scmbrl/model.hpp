#pragma once

#include <optional>
#include <span>
#include <vector>

#include "scmbrl/mdp.hpp"
#include "scmbrl/rng.hpp"
#include "scmbrl/value.hpp"

namespace scmbrl {

// Learned model: reward table plus transition logits. Transition
// probabilities are the row-wise softmax of the logits, so they are strictly
// positive and sum to 1 by construction.
struct ModelParams {
  int n_states = 0;
  int n_actions = 0;
  std::vector<double> reward_hat;  // [state][action]
  std::vector<double> logits;      // [state][action][next_state]

  double reward(int s, int a) const {
    return reward_hat[static_cast<std::size_t>(s) * n_actions + a];
  }
  std::span<double> logit_row(int s, int a) {
    return {logits.data() + (static_cast<std::size_t>(s) * n_actions + a) * n_states,
            static_cast<std::size_t>(n_states)};
  }
  std::span<const double> logit_row(int s, int a) const {
    return {logits.data() + (static_cast<std::size_t>(s) * n_actions + a) * n_states,
            static_cast<std::size_t>(n_states)};
  }
};

// Softmax with max-subtraction; probs_out may alias logits.
void softmax_row(std::span<const double> logits, std::span<double> probs_out);

// Full softmaxed transition tensor [state][action][next_state].
std::vector<double> transition_probs(const ModelParams& params);

// Default: logits are the log of a Dirichlet(1,...,1) draw per row and
// reward_hat ~ N(0,1). With reward_noise_sigma set, reward_hat is the true
// reward plus N(0, sigma^2) noise instead (mdp required); logits are
// initialized as in the default mode.
ModelParams init_model(int n_states, int n_actions, Rng& rng,
                       std::optional<double> reward_noise_sigma = std::nullopt,
                       const TabularMdp* mdp = nullptr);

// Encode a ground-truth MDP into model parameters: logits = log(P + floor),
// reward_hat = r. The floor keeps zero entries representable under softmax.
ModelParams model_from_mdp(const TabularMdp& mdp, double floor = 1e-12);

// reward_hat(s,a) <- reward_hat(s,a) + alpha_r (r - reward_hat(s,a)), sample
// by sample in batch order.
void grounded_reward_update(ModelParams& params, std::span<const TransitionSample> batch,
                            double alpha_r);

// Ascent on log P(s'|s,a): logits[s][a][.] += alpha * (onehot(s') - softmax),
// sample by sample.
void mle_model_update(ModelParams& params, std::span<const TransitionSample> batch,
                      double alpha_mle);

// Descent on the squared gap between the policy-averaged model prediction of
// the next-state value and the observed next state's value,
//   ( sum_{a', s~} pi(a'|s) P(s~|s,a') v(s~)  -  v(s') )^2,
// with v held fixed; touches the logits of every action at the sampled state.
void ve_model_update(ModelParams& params, std::span<const TransitionSample> batch,
                     const ValueTable& v_hat, const Policy& policy, double alpha_ve);

// Q(s,a) = reward_hat(s,a) + discount * sum_s' P(s'|s,a) v(s').
std::vector<double> model_q_values(const ModelParams& params, const ValueTable& v_hat,
                                   double discount);

struct ModelDiagnostics {
  double max_tv_distance = 0.0;    // max over (s,a) of TV(P_hat, P)
  double max_reward_error = 0.0;   // max over (s,a) of |r_hat - r|
};

ModelDiagnostics model_diagnostics(const ModelParams& params, const TabularMdp& mdp);

}  // namespace scmbrl
