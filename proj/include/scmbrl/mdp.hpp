#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

#include "scmbrl/rng.hpp"

namespace scmbrl {

// Learned or exact state values, one entry per state.
using ValueTable = std::vector<double>;

// Finite MDP with dense row-stochastic transitions and deterministic
// per-(state, action) rewards.
struct TabularMdp {
  int n_states = 0;
  int n_actions = 0;
  std::vector<double> transitions;  // [state][action][next_state], row-major
  std::vector<double> rewards;      // [state][action]
  double discount = 0.0;

  double transition(int s, int a, int s2) const {
    return transitions[(static_cast<std::size_t>(s) * n_actions + a) * n_states + s2];
  }
  std::span<const double> transition_row(int s, int a) const {
    return {transitions.data() + (static_cast<std::size_t>(s) * n_actions + a) * n_states,
            static_cast<std::size_t>(n_states)};
  }
  double reward(int s, int a) const {
    return rewards[static_cast<std::size_t>(s) * n_actions + a];
  }
};

// Stochastic policy; each row probs[s][.] is a distribution over actions.
struct Policy {
  int n_states = 0;
  int n_actions = 0;
  std::vector<double> probs;  // [state][action]

  double prob(int s, int a) const {
    return probs[static_cast<std::size_t>(s) * n_actions + a];
  }
  std::span<const double> row(int s) const {
    return {probs.data() + static_cast<std::size_t>(s) * n_actions,
            static_cast<std::size_t>(n_actions)};
  }
};

struct TransitionSample {
  int state = 0;
  int action = 0;
  double reward = 0.0;
  int next_state = 0;
};

// Thrown when an iterative solver fails to reach its tolerance.
struct ConvergenceError : std::runtime_error {
  ConvergenceError(const std::string& msg, double residual_, int iterations_)
      : std::runtime_error(msg), residual(residual_), iterations(iterations_) {}
  double residual;
  int iterations;
};

// Random Garnet MDP: each transition row starts as U(0,1) noise, keeps a
// uniformly drawn number of successor entries (1..n_states, chosen per
// state-action pair), and is renormalized; rewards are N(0,1) and
// deterministic.
TabularMdp generate_garnet(int n_states, int n_actions, Rng& rng, double discount = 0.99);

// Throws std::invalid_argument if shapes, row sums, or the discount are bad.
void validate_mdp(const TabularMdp& mdp, double row_sum_tol = 1e-12);

// Exact v^pi via the linear system (I - discount * P^pi) v = r^pi.
ValueTable policy_value_exact(const TabularMdp& mdp, const Policy& policy);

// Same solve against an arbitrary model (e.g. learned transition/reward
// tables) instead of the true MDP.
ValueTable value_under_model(std::span<const double> transitions,
                             std::span<const double> rewards, int n_states,
                             int n_actions, double discount, const Policy& policy);

// Exact v* by value iteration; throws ConvergenceError if the max-norm
// optimality residual is still above tol after max_iters sweeps.
ValueTable optimal_value_exact(const TabularMdp& mdp, double tol = 1e-9,
                               int max_iters = 200000);

// One application of the policy Bellman operator for the given model:
// (T v)(s) = sum_a pi(a|s) [r(s,a) + discount * sum_s' P(s'|s,a) v(s')].
ValueTable bellman_apply(std::span<const double> transitions,
                         std::span<const double> rewards, int n_states,
                         int n_actions, const Policy& policy,
                         std::span<const double> v, double discount);
ValueTable bellman_apply(const TabularMdp& mdp, const Policy& policy,
                         std::span<const double> v);

TransitionSample sample_transition(const TabularMdp& mdp, int state, int action,
                                   Rng& rng);

int sample_action(const Policy& policy, int state, Rng& rng);

Policy uniform_policy(int n_states, int n_actions);

// epsilon mass spread over all actions, the rest split uniformly among the
// argmax set of q(s, .) (exact ties share the greedy mass).
Policy epsilon_greedy_policy(std::span<const double> q, int n_states,
                             int n_actions, double epsilon);

}  // namespace scmbrl
