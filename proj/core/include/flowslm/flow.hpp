#pragma once

// Optimal-transport conditional flow matching: conditional paths, their
// target vector fields, the regression loss, guidance, and fixed-step ODE
// integration from the prior (t = 0) to data (t = 1).

#include <functional>
#include <string>

#include "flowslm/common.hpp"
#include "flowslm/rng.hpp"

namespace flowslm {

inline constexpr double kDefaultSigmaMin = 1e-5;

namespace detail {
template <typename A, typename B>
void require_same_dim(const A& a, const B& b, const char* op) {
  if (a.size() != b.size()) {
    throw ContractViolation(std::string(op) + ": dimension mismatch (" +
                            std::to_string(a.size()) + " vs " +
                            std::to_string(b.size()) + ")");
  }
}
}  // namespace detail

/// Point on the straight conditional path from x0 (prior) toward x1 (data):
/// t*x1 + (1 - (1 - sigma_min)*t)*x0.
template <typename T>
Vec<T> ot_flow(T t, const Vec<T>& x0, const Vec<T>& x1, T sigma_min = T(kDefaultSigmaMin)) {
  detail::require_same_dim(x0, x1, "ot_flow");
  FLOWSLM_REQUIRE(t >= T(0) && t <= T(1), "ot_flow: t outside [0,1]");
  FLOWSLM_REQUIRE(sigma_min >= T(0) && sigma_min < T(1), "ot_flow: sigma_min outside [0,1)");
  return t * x1 + (T(1) - (T(1) - sigma_min) * t) * x0;
}

/// Time derivative of ot_flow; independent of t.
template <typename T>
Vec<T> ot_target_field(const Vec<T>& x0, const Vec<T>& x1, T sigma_min = T(kDefaultSigmaMin)) {
  detail::require_same_dim(x0, x1, "ot_target_field");
  FLOWSLM_REQUIRE(sigma_min >= T(0) && sigma_min < T(1),
                  "ot_target_field: sigma_min outside [0,1)");
  return x1 - (T(1) - sigma_min) * x0;
}

/// Squared Euclidean distance between predicted and target fields.
template <typename T>
T cfm_loss(const Vec<T>& predicted, const Vec<T>& target) {
  detail::require_same_dim(predicted, target, "cfm_loss");
  return (predicted - target).squaredNorm();
}

/// Classifier-free guidance: v_cond + scale * (v_cond - v_uncond).
/// scale == 0 returns v_cond bit-for-bit.
template <typename T>
Vec<T> cfg_combine(const Vec<T>& v_cond, const Vec<T>& v_uncond, T scale) {
  detail::require_same_dim(v_cond, v_uncond, "cfg_combine");
  FLOWSLM_REQUIRE(scale >= T(0), "cfg_combine: negative scale");
  if (scale == T(0)) return v_cond;
  return v_cond + scale * (v_cond - v_uncond);
}

enum class SolverMethod { kEuler, kMidpoint };

struct SolverSpec {
  SolverMethod method = SolverMethod::kMidpoint;
  int nfe = 64;

  /// Number of integration steps on the uniform grid over [0,1].
  int steps() const { return method == SolverMethod::kEuler ? nfe : nfe / 2; }
  void validate() const;
};

std::string to_string(SolverMethod m);
SolverMethod solver_method_from_string(const std::string& s);

template <typename T>
using FieldFn = std::function<Vec<T>(T t, const Vec<T>& x)>;

/// Integrates dx/dt = field(t, x) from t=0 to t=1 with fixed steps. Calls
/// `field` exactly spec.nfe times.
template <typename T>
Vec<T> ode_sample(const FieldFn<T>& field, const Vec<T>& x0, const SolverSpec& spec) {
  spec.validate();
  FLOWSLM_REQUIRE(x0.allFinite(), "ode_sample: non-finite initial state");
  const int steps = spec.steps();
  const T h = T(1) / T(steps);
  auto eval = [&](int step, T t, const Vec<T>& x) {
    Vec<T> v = field(t, x);
    if (v.size() != x.size()) {
      throw ContractViolation("ode_sample: field returned wrong dimension");
    }
    if (!v.allFinite()) {
      throw NumericalError("ode_sample: non-finite field value at step " +
                           std::to_string(step) + " (t=" + std::to_string(double(t)) + ")");
    }
    return v;
  };
  Vec<T> x = x0;
  for (int s = 0; s < steps; ++s) {
    const T t = T(s) * h;
    if (spec.method == SolverMethod::kEuler) {
      x += h * eval(s, t, x);
    } else {
      const Vec<T> k1 = eval(s, t, x);
      const Vec<T> mid = x + (h / T(2)) * k1;
      x += h * eval(s, t + h / T(2), mid);
    }
  }
  return x;
}

/// Draws from N(0, temperature^2 I).
VecD sample_prior(int dim, double temperature, Rng& rng);

}  // namespace flowslm
