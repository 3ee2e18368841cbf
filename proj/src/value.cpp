#include "scmbrl/value.hpp"

#include <cmath>
#include <stdexcept>

namespace scmbrl {

ValueTable init_value(int n_states, Rng& rng, std::optional<double> noise_sigma,
                      const ValueTable* v_true) {
  if (n_states < 1) throw std::invalid_argument("state count must be positive");
  ValueTable v(n_states);
  if (noise_sigma.has_value()) {
    if (v_true == nullptr) {
      throw std::invalid_argument("noisy value initialization requires the reference values");
    }
    if (*noise_sigma < 0.0) throw std::invalid_argument("noise sigma must be non-negative");
    if (v_true->size() != static_cast<std::size_t>(n_states)) {
      throw std::invalid_argument("reference value table has wrong length");
    }
    for (int s = 0; s < n_states; ++s) v[s] = (*v_true)[s] + *noise_sigma * draw_normal(rng);
  } else {
    for (int s = 0; s < n_states; ++s) v[s] = draw_normal(rng);
  }
  return v;
}

void grounded_td0_update(ValueTable& v_hat, std::span<const TransitionSample> batch,
                         double alpha_td, double discount) {
  if (!(alpha_td > 0.0 && alpha_td <= 1.0)) {
    throw std::invalid_argument("alpha_td must lie in (0, 1]");
  }
  const int n = static_cast<int>(v_hat.size());
  for (const TransitionSample& t : batch) {
    if (t.state < 0 || t.state >= n || t.next_state < 0 || t.next_state >= n) {
      throw std::invalid_argument("transition sample index out of range");
    }
    double target = t.reward + discount * v_hat[t.next_state];
    v_hat[t.state] = (1.0 - alpha_td) * v_hat[t.state] + alpha_td * target;
  }
}

double relative_value_error(const ValueTable& v_hat, const ValueTable& v_true) {
  if (v_hat.size() != v_true.size() || v_true.empty()) {
    throw std::invalid_argument("value tables must have equal non-zero length");
  }
  double total = 0.0;
  for (std::size_t s = 0; s < v_true.size(); ++s) {
    total += std::abs(v_true[s] - v_hat[s]) /
             std::max(std::abs(v_true[s]), kValueErrorDenomFloor);
  }
  return total / static_cast<double>(v_true.size());
}

}  // namespace scmbrl
