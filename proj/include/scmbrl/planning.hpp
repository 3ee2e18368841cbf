#pragma once

#include <span>
#include <vector>

#include "scmbrl/mdp.hpp"
#include "scmbrl/model.hpp"
#include "scmbrl/rng.hpp"
#include "scmbrl/value.hpp"

namespace scmbrl {

// Which parts of the per-step TD error are treated as constants when
// differentiating the planning loss:
//   Residual     - nothing frozen, full gradient.
//   Direct       - the bootstrap target (expected reward + discounted
//                  next-step value) is frozen; rewards never receive
//                  gradient, and at horizon 0 neither do the transitions.
//   Reverse      - the current-step value is frozen; gradient flows forward
//                  into rewards and transitions even at horizon 0.
//   DynaValueOnly- the Direct gradient restricted to the value table.
enum class ScVariant { kResidual, kDirect, kReverse, kDynaValueOnly };

// Exact expected quantities of a K-step model rollout from one start state
// under imagination policy mu:
//   state_dists[k]      d_k, the state distribution after k model steps
//                       (d_0 is the start-state one-hot), k = 0..K+1
//   expected_rewards[k] sum_{s,a} d_k(s) mu(a|s) r_hat(s,a), k = 0..K
//   expected_values[k]  sum_s d_k(s) v_hat(s), k = 0..K+1
struct RolloutDistributions {
  int start_state = 0;
  int horizon = 0;  // K
  std::vector<std::vector<double>> state_dists;
  std::vector<double> expected_rewards;
  std::vector<double> expected_values;
};

struct PlanningGradients {
  std::vector<double> grad_logits;  // [state][action][next_state]
  std::vector<double> grad_reward;  // [state][action]
  std::vector<double> grad_value;   // [state]
};

RolloutDistributions rollout_distributions(const ModelParams& params, const Policy& mu,
                                           int start_state, int horizon,
                                           const ValueTable& v_hat);

// Sum over start states and rollout steps k = 0..K of the squared expected
// TD error  (expected_rewards[k] + discount * expected_values[k+1] -
// expected_values[k])^2.  The value is the same for every variant; the
// variants differ only in their gradients.
double sc_loss(const ModelParams& params, const ValueTable& v_hat, const Policy& mu,
               std::span<const int> starts, int horizon, ScVariant variant,
               double discount);

// Analytic gradient of sc_loss with the variant's frozen terms held constant.
PlanningGradients sc_gradients(const ModelParams& params, const ValueTable& v_hat,
                               const Policy& mu, std::span<const int> starts,
                               int horizon, ScVariant variant, double discount);

// SGD step: logits -= alpha * grad_logits, reward_hat -= alpha * grad_reward,
// v_hat -= alpha * grad_value.
void apply_planning_update(ModelParams& params, ValueTable& v_hat,
                           const PlanningGradients& grads, double alpha_plan);

struct ImaginationMode {
  enum class Kind { kOnPolicy, kEpsilonMix };
  Kind kind = Kind::kOnPolicy;
  double epsilon = 0.0;
};

// OnPolicy returns the base policy; EpsilonMix blends it with the uniform
// policy: (1 - epsilon) * base + epsilon * uniform.
Policy imagination_policy(const Policy& base, const ImaginationMode& mode);

struct StartMode {
  enum class Kind { kAllStates, kSample };
  Kind kind = Kind::kAllStates;
  int sample_count = 0;
};

// AllStates: 0..n_states-1 in order. Sample(n): n uniform draws with
// replacement.
std::vector<int> select_planning_starts(int n_states, const StartMode& mode, Rng& rng);

}  // namespace scmbrl
