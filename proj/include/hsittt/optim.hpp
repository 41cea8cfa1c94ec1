#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "hsittt/errors.hpp"

namespace hsittt {

struct AdamConfig {
  double learning_rate = 1e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// First/second moment accumulators; persists across steps.
template <typename T>
struct AdamState {
  std::vector<T> m;
  std::vector<T> v;
  std::size_t step = 0;

  AdamState() = default;
  explicit AdamState(std::size_t n) : m(n, T(0)), v(n, T(0)) {}

  bool operator==(const AdamState&) const = default;
};

// One bias-corrected Adam update of params in place.
template <typename T>
void adam_step(std::span<T> params, std::span<const T> grad,
               AdamState<T>& state, const AdamConfig& config) {
  if (grad.size() != params.size() || state.m.size() != params.size()) {
    throw ValidationError("adam_step: size mismatch");
  }
  ++state.step;
  const auto t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(config.beta1, t);
  const double c2 = 1.0 - std::pow(config.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grad[i];
    const double m = config.beta1 * state.m[i] + (1.0 - config.beta1) * g;
    const double v = config.beta2 * state.v[i] + (1.0 - config.beta2) * g * g;
    state.m[i] = static_cast<T>(m);
    state.v[i] = static_cast<T>(v);
    const double update =
        config.learning_rate * (m / c1) / (std::sqrt(v / c2) + config.epsilon);
    params[i] = static_cast<T>(params[i] - update);
  }
}

}  // namespace hsittt
