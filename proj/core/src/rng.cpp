#include "flowslm/rng.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

#include "flowslm/common.hpp"

namespace flowslm {

double Rng::normal() {
  double u1 = uniform();
  const double u2 = uniform();
  if (u1 <= 0.0) u1 = 0x1.0p-53;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

int Rng::geometric_at_least_one(double stop_prob) {
  int n = 1;
  while (!bernoulli(stop_prob)) ++n;
  return n;
}

std::string Rng::state() const {
  std::ostringstream os;
  os << engine_;
  return os.str();
}

void Rng::set_state(const std::string& s) {
  std::istringstream is(s);
  is >> engine_;
  if (!is) throw IoError("malformed rng state");
}

}  // namespace flowslm
