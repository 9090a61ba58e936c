#pragma once

#include "rng.hpp"
#include "stable_index.hpp"
#include "util.hpp"

namespace fraclab {

/// Standard symmetric alpha-stable variate (characteristic function
/// exp(-|xi|^alpha)) by the Chambers-Mallows-Stuck transform.
inline double sample_symmetric_stable(double alpha, Rng& rng) {
  const double U = pi * (rng.uniform() - 0.5);
  if (std::abs(alpha - 1.0) < 1e-12) return std::tan(U);  // Cauchy
  const double E = rng.exponential();
  return std::sin(alpha * U) / std::pow(std::cos(U), 1.0 / alpha) *
         std::pow(std::cos(U - alpha * U) / E, (1.0 - alpha) / alpha);
}

/// One-sided gamma-stable variate with Laplace transform exp(-lambda^gamma),
/// gamma in (0,1) (Kanter's representation).
inline double sample_positive_stable(double gamma, Rng& rng) {
  const double U = pi * rng.uniform();
  const double E = rng.exponential();
  const double A = std::pow(std::sin(gamma * U), gamma) *
                   std::pow(std::sin((1.0 - gamma) * U), 1.0 - gamma) /
                   std::sin(U);
  // A^{1/(1-gamma)} / E, all to the power (1-gamma)/gamma
  return std::pow(std::pow(A, 1.0 / (1.0 - gamma)) / E, (1.0 - gamma) / gamma);
}

/// Isotropic alpha-stable increment over time span h (char. fn e^{-h|xi|^a}).
/// d = 1 uses the CMS transform directly; d >= 2 samples by Brownian
/// subordination (the scalar-radius-plus-direction recipe does not give the
/// isotropic law in d >= 2).
inline void stable_increment(double alpha, int d, double h, Rng& rng, double* out) {
  if (d == 1) {
    out[0] = std::pow(h, 1.0 / alpha) * sample_symmetric_stable(alpha, rng);
    return;
  }
  const double S = std::pow(h, 2.0 / alpha) * sample_positive_stable(alpha / 2.0, rng);
  const double sd = std::sqrt(2.0 * S);
  for (int k = 0; k < d; ++k) out[k] = sd * rng.normal();
}

}  // namespace fraclab
