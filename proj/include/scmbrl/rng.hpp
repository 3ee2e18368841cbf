#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

namespace scmbrl {

using Rng = std::mt19937_64;

// SplitMix64 step, used to derive well-separated seeds from a base seed.
inline std::uint64_t split_mix64(std::uint64_t& state) {
  state += 0x9e3779b97f4a7c15ull;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

// Seed for an independent stream (replica index, bootstrap stream, ...).
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  std::uint64_t s = base;
  std::uint64_t a = split_mix64(s);
  s ^= 0xd1342543de82ef95ull * (stream + 1);
  return a ^ split_mix64(s);
}

inline Rng make_rng(std::uint64_t seed) { return Rng(seed); }

// Distributions are constructed per call so that no hidden distribution
// state survives between draws; the sequence of values depends only on the
// engine state and the call sequence.
inline double draw_uniform(Rng& rng) {
  return std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

inline double draw_normal(Rng& rng) {
  return std::normal_distribution<double>(0.0, 1.0)(rng);
}

inline double draw_exponential(Rng& rng) {
  return std::exponential_distribution<double>(1.0)(rng);
}

// Uniform integer in {0, ..., n - 1}.
inline int draw_index(Rng& rng, int n) {
  return std::uniform_int_distribution<int>(0, n - 1)(rng);
}

// Fisher-Yates shuffle of {0, ..., n - 1}.
inline std::vector<int> random_permutation(int n, Rng& rng) {
  std::vector<int> perm(n);
  for (int i = 0; i < n; ++i) perm[i] = i;
  for (int i = n - 1; i > 0; --i) {
    int j = draw_index(rng, i + 1);
    std::swap(perm[i], perm[j]);
  }
  return perm;
}

// Draw an index according to a probability row (inverse CDF walk).
inline int sample_categorical(std::span<const double> probs, Rng& rng) {
  double u = draw_uniform(rng);
  double cum = 0.0;
  int last_positive = 0;
  for (int i = 0; i < static_cast<int>(probs.size()); ++i) {
    if (probs[i] > 0.0) last_positive = i;
    cum += probs[i];
    if (u < cum) return i;
  }
  return last_positive;  // guards against cum < 1 from rounding
}

}  // namespace scmbrl
