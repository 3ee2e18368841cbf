#include "scmbrl/mdp.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace scmbrl {

namespace {

void check_positive_counts(int n_states, int n_actions) {
  if (n_states < 1 || n_actions < 1) {
    throw std::invalid_argument("state and action counts must be positive");
  }
}

void check_state_action(const TabularMdp& mdp, int state, int action) {
  if (state < 0 || state >= mdp.n_states || action < 0 || action >= mdp.n_actions) {
    throw std::invalid_argument("state or action index out of range");
  }
}

void check_policy_shape(int n_states, int n_actions, const Policy& policy) {
  if (policy.n_states != n_states || policy.n_actions != n_actions ||
      policy.probs.size() != static_cast<std::size_t>(n_states) * n_actions) {
    throw std::invalid_argument("policy shape does not match MDP");
  }
}

}  // namespace

TabularMdp generate_garnet(int n_states, int n_actions, Rng& rng, double discount) {
  check_positive_counts(n_states, n_actions);
  TabularMdp mdp;
  mdp.n_states = n_states;
  mdp.n_actions = n_actions;
  mdp.discount = discount;
  mdp.transitions.resize(static_cast<std::size_t>(n_states) * n_actions * n_states);
  mdp.rewards.resize(static_cast<std::size_t>(n_states) * n_actions);

  std::vector<double> row(n_states);
  for (int s = 0; s < n_states; ++s) {
    for (int a = 0; a < n_actions; ++a) {
      for (int j = 0; j < n_states; ++j) {
        // Strictly positive weights keep every surviving row normalizable.
        do {
          row[j] = draw_uniform(rng);
        } while (row[j] == 0.0);
      }
      // Keep a uniformly drawn number of successors; zero the rest.
      int n_successors = draw_index(rng, n_states) + 1;
      std::vector<int> perm = random_permutation(n_states, rng);
      std::vector<double> kept(n_states, 0.0);
      double sum = 0.0;
      for (int k = 0; k < n_successors; ++k) {
        kept[perm[k]] = row[perm[k]];
        sum += row[perm[k]];
      }
      double* out = mdp.transitions.data() +
                    (static_cast<std::size_t>(s) * n_actions + a) * n_states;
      for (int j = 0; j < n_states; ++j) out[j] = kept[j] / sum;
    }
  }
  for (int s = 0; s < n_states; ++s) {
    for (int a = 0; a < n_actions; ++a) {
      mdp.rewards[static_cast<std::size_t>(s) * n_actions + a] = draw_normal(rng);
    }
  }
  return mdp;
}

void validate_mdp(const TabularMdp& mdp, double row_sum_tol) {
  check_positive_counts(mdp.n_states, mdp.n_actions);
  if (!(mdp.discount >= 0.0 && mdp.discount < 1.0)) {
    throw std::invalid_argument("discount must lie in [0, 1)");
  }
  if (mdp.transitions.size() !=
          static_cast<std::size_t>(mdp.n_states) * mdp.n_actions * mdp.n_states ||
      mdp.rewards.size() != static_cast<std::size_t>(mdp.n_states) * mdp.n_actions) {
    throw std::invalid_argument("transition or reward table has wrong size");
  }
  for (int s = 0; s < mdp.n_states; ++s) {
    for (int a = 0; a < mdp.n_actions; ++a) {
      double sum = 0.0;
      for (double p : mdp.transition_row(s, a)) {
        if (p < 0.0 || !std::isfinite(p)) {
          throw std::invalid_argument("transition probabilities must be finite and non-negative");
        }
        sum += p;
      }
      if (std::abs(sum - 1.0) > row_sum_tol) {
        throw std::invalid_argument("transition row " + std::to_string(s) + "," +
                                    std::to_string(a) + " does not sum to 1");
      }
      if (!std::isfinite(mdp.reward(s, a))) {
        throw std::invalid_argument("rewards must be finite");
      }
    }
  }
}

ValueTable value_under_model(std::span<const double> transitions,
                             std::span<const double> rewards, int n_states,
                             int n_actions, double discount, const Policy& policy) {
  check_positive_counts(n_states, n_actions);
  check_policy_shape(n_states, n_actions, policy);
  if (transitions.size() != static_cast<std::size_t>(n_states) * n_actions * n_states ||
      rewards.size() != static_cast<std::size_t>(n_states) * n_actions) {
    throw std::invalid_argument("model table sizes do not match counts");
  }

  Eigen::MatrixXd system = Eigen::MatrixXd::Identity(n_states, n_states);
  Eigen::VectorXd policy_reward(n_states);
  for (int s = 0; s < n_states; ++s) {
    double r_pi = 0.0;
    for (int a = 0; a < n_actions; ++a) {
      double w = policy.prob(s, a);
      r_pi += w * rewards[static_cast<std::size_t>(s) * n_actions + a];
      const double* row = transitions.data() +
                          (static_cast<std::size_t>(s) * n_actions + a) * n_states;
      for (int j = 0; j < n_states; ++j) {
        system(s, j) -= discount * w * row[j];
      }
    }
    policy_reward(s) = r_pi;
  }
  Eigen::VectorXd v = system.partialPivLu().solve(policy_reward);
  return ValueTable(v.data(), v.data() + n_states);
}

ValueTable policy_value_exact(const TabularMdp& mdp, const Policy& policy) {
  return value_under_model(mdp.transitions, mdp.rewards, mdp.n_states,
                           mdp.n_actions, mdp.discount, policy);
}

ValueTable optimal_value_exact(const TabularMdp& mdp, double tol, int max_iters) {
  if (!(tol > 0.0)) throw std::invalid_argument("tolerance must be positive");
  const int n = mdp.n_states;
  ValueTable v(n, 0.0);
  ValueTable next(n, 0.0);
  double residual = 0.0;
  for (int iter = 0; iter < max_iters; ++iter) {
    residual = 0.0;
    for (int s = 0; s < n; ++s) {
      double best = -std::numeric_limits<double>::infinity();
      for (int a = 0; a < mdp.n_actions; ++a) {
        double q = mdp.reward(s, a);
        std::span<const double> row = mdp.transition_row(s, a);
        double ev = 0.0;
        for (int j = 0; j < n; ++j) ev += row[j] * v[j];
        q += mdp.discount * ev;
        best = std::max(best, q);
      }
      next[s] = best;
      residual = std::max(residual, std::abs(best - v[s]));
    }
    v.swap(next);
    // ||T v_new - v_new|| <= discount * ||v_new - v_old||, so the returned
    // iterate meets the tolerance.
    if (residual <= tol) return v;
  }
  throw ConvergenceError("value iteration did not reach tolerance", residual, max_iters);
}

ValueTable bellman_apply(std::span<const double> transitions,
                         std::span<const double> rewards, int n_states,
                         int n_actions, const Policy& policy,
                         std::span<const double> v, double discount) {
  check_positive_counts(n_states, n_actions);
  check_policy_shape(n_states, n_actions, policy);
  if (v.size() != static_cast<std::size_t>(n_states) ||
      transitions.size() != static_cast<std::size_t>(n_states) * n_actions * n_states ||
      rewards.size() != static_cast<std::size_t>(n_states) * n_actions) {
    throw std::invalid_argument("bellman_apply: shapes do not agree");
  }
  ValueTable out(n_states, 0.0);
  for (int s = 0; s < n_states; ++s) {
    double acc = 0.0;
    for (int a = 0; a < n_actions; ++a) {
      const double* row = transitions.data() +
                          (static_cast<std::size_t>(s) * n_actions + a) * n_states;
      double ev = 0.0;
      for (int j = 0; j < n_states; ++j) ev += row[j] * v[j];
      acc += policy.prob(s, a) *
             (rewards[static_cast<std::size_t>(s) * n_actions + a] + discount * ev);
    }
    out[s] = acc;
  }
  return out;
}

ValueTable bellman_apply(const TabularMdp& mdp, const Policy& policy,
                         std::span<const double> v) {
  return bellman_apply(mdp.transitions, mdp.rewards, mdp.n_states, mdp.n_actions,
                       policy, v, mdp.discount);
}

TransitionSample sample_transition(const TabularMdp& mdp, int state, int action,
                                   Rng& rng) {
  check_state_action(mdp, state, action);
  TransitionSample sample;
  sample.state = state;
  sample.action = action;
  sample.reward = mdp.reward(state, action);
  sample.next_state = sample_categorical(mdp.transition_row(state, action), rng);
  return sample;
}

int sample_action(const Policy& policy, int state, Rng& rng) {
  if (state < 0 || state >= policy.n_states) {
    throw std::invalid_argument("state index out of range");
  }
  return sample_categorical(policy.row(state), rng);
}

Policy uniform_policy(int n_states, int n_actions) {
  check_positive_counts(n_states, n_actions);
  Policy policy;
  policy.n_states = n_states;
  policy.n_actions = n_actions;
  policy.probs.assign(static_cast<std::size_t>(n_states) * n_actions,
                      1.0 / n_actions);
  return policy;
}

Policy epsilon_greedy_policy(std::span<const double> q, int n_states,
                             int n_actions, double epsilon) {
  check_positive_counts(n_states, n_actions);
  if (q.size() != static_cast<std::size_t>(n_states) * n_actions) {
    throw std::invalid_argument("q table has wrong size");
  }
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) {
    throw std::invalid_argument("epsilon must lie in [0, 1]");
  }
  for (double x : q) {
    if (!std::isfinite(x)) throw std::invalid_argument("q values must be finite");
  }
  Policy policy;
  policy.n_states = n_states;
  policy.n_actions = n_actions;
  policy.probs.assign(static_cast<std::size_t>(n_states) * n_actions,
                      epsilon / n_actions);
  for (int s = 0; s < n_states; ++s) {
    const double* row = q.data() + static_cast<std::size_t>(s) * n_actions;
    double best = *std::max_element(row, row + n_actions);
    int n_best = 0;
    for (int a = 0; a < n_actions; ++a) n_best += (row[a] == best) ? 1 : 0;
    double greedy_share = (1.0 - epsilon) / n_best;
    for (int a = 0; a < n_actions; ++a) {
      if (row[a] == best) {
        policy.probs[static_cast<std::size_t>(s) * n_actions + a] += greedy_share;
      }
    }
  }
  return policy;
}

}  // namespace scmbrl
