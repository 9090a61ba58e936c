#pragma once

#include <cmath>
#include <stdexcept>

namespace fraclab {

/// Parameter triple (alpha, beta, d) of the model, with the derived
/// quantities that recur everywhere: the critical branching exponent
/// beta*(s) = alpha/((d-s)+alpha), the saturation dimension
/// d_sat = d + alpha - alpha/beta, and the flat solution
/// U(t) = (beta t)^{-1/beta}, the maximal solution of u' = -u^{1+beta}.
///
/// The absolute-continuity regime beta < alpha/d is enforced at
/// construction; everything downstream assumes it.
struct StableIndex {
  double alpha = 1.5;
  double beta = 0.5;
  int d = 1;

  StableIndex() = default;
  StableIndex(double alpha_, double beta_, int d_)
      : alpha(alpha_), beta(beta_), d(d_) {
    if (!(alpha > 0.0 && alpha < 2.0))
      throw std::domain_error("StableIndex: alpha must lie in (0,2)");
    if (!(beta > 0.0 && beta <= 1.0))
      throw std::domain_error("StableIndex: beta must lie in (0,1]");
    if (d < 1) throw std::domain_error("StableIndex: dimension must be >= 1");
    if (!(beta < alpha / d))
      throw std::domain_error(
          "StableIndex: need beta < alpha/d (absolutely continuous regime)");
  }

  /// beta*(alpha, s) for s in [0, d]; beta*(0) = alpha/(d+alpha),
  /// beta*(d) = 1, increasing in s.
  double beta_star(double s = 0.0) const {
    if (s < 0.0 || s > double(d))
      throw std::domain_error("beta_star: s outside [0, d]");
    return alpha / ((double(d) - s) + alpha);
  }

  /// Saturation dimension, clamped at 0.
  double d_sat() const {
    return std::max(0.0, double(d) + alpha - alpha / beta);
  }

  /// Flat solution U(t) = (beta t)^{-1/beta}.
  double U(double t) const {
    if (!(t > 0.0)) throw std::domain_error("U(t): t must be positive");
    return std::pow(beta * t, -1.0 / beta);
  }

  /// One exact step of the maximal-solution flow:
  /// U(t+h) = (U(t)^{-beta} + beta h)^{-1/beta}.  Works for any state v >= 0
  /// of the absorption ODE u' = -u^{1+beta}, not just v = U(t).
  double absorb(double v, double h) const {
    if (v <= 0.0) return 0.0;
    return std::pow(std::pow(v, -beta) + beta * h, -1.0 / beta);
  }
};

}  // namespace fraclab
