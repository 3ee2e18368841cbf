#pragma once

#include <optional>
#include <span>

#include "scmbrl/mdp.hpp"
#include "scmbrl/rng.hpp"

namespace scmbrl {

// Per-state denominator floor for the relative value error; keeps the metric
// finite near zero-valued states.
inline constexpr double kValueErrorDenomFloor = 0.01;

// Default: v ~ N(0,1) per state. With noise_sigma set, initializes at
// v_true + N(0, sigma^2) instead (v_true required). sigma = 0 reproduces
// v_true exactly while consuming the same number of draws.
ValueTable init_value(int n_states, Rng& rng,
                      std::optional<double> noise_sigma = std::nullopt,
                      const ValueTable* v_true = nullptr);

// TD(0): v(s) <- (1 - alpha) v(s) + alpha (r + discount * v(s')), applied
// sample by sample in batch order.
void grounded_td0_update(ValueTable& v_hat, std::span<const TransitionSample> batch,
                         double alpha_td, double discount);

// Mean over states of |v_true - v_hat| / max(|v_true|, floor).
double relative_value_error(const ValueTable& v_hat, const ValueTable& v_true);

}  // namespace scmbrl
