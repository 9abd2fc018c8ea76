#include "flowslm/flow.hpp"

namespace flowslm {

void SolverSpec::validate() const {
  if (nfe < 1) throw ContractViolation("SolverSpec: nfe must be >= 1");
  if (method == SolverMethod::kMidpoint && nfe % 2 != 0) {
    throw ContractViolation("SolverSpec: midpoint requires an even nfe, got " +
                            std::to_string(nfe));
  }
}

std::string to_string(SolverMethod m) {
  return m == SolverMethod::kEuler ? "euler" : "midpoint";
}

SolverMethod solver_method_from_string(const std::string& s) {
  if (s == "euler") return SolverMethod::kEuler;
  if (s == "midpoint") return SolverMethod::kMidpoint;
  throw ConfigError("unknown solver method '" + s + "'");
}

VecD sample_prior(int dim, double temperature, Rng& rng) {
  FLOWSLM_REQUIRE(dim >= 1, "sample_prior: dim must be >= 1");
  FLOWSLM_REQUIRE(temperature > 0.0, "sample_prior: temperature must be > 0");
  VecD x(dim);
  for (int i = 0; i < dim; ++i) x[i] = temperature * rng.normal();
  return x;
}

}  // namespace flowslm
