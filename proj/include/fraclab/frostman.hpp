#pragma once

#include <cstdint>
#include <vector>

#include "measures.hpp"
#include "util.hpp"

namespace fraclab {

enum class FrostmanDirection { UpperF1, LowerF2 };

/// Result of an empirical (F1)-s / (F2)-s scan over dyadic radii.
struct FrostmanReport {
  double s = 0.0;
  FrostmanDirection direction = FrostmanDirection::UpperF1;
  double constant = 0.0;       // measured C-bar (F1) or underline-C (F2)
  double scale_lo = 0.0, scale_hi = 0.0;
  bool pass = false;
  double growth_slope = 0.0;   // fitted log2(constant_j) per dyadic level
  double witness_x[2] = {0, 0};
  double witness_r = 0.0;
  double witness_value = 0.0;  // mu(B(witness))/r^s, reproducible exactly
  std::vector<double> per_scale_constant;
};

/// Empirical Frostman check over radii 2^{-1} .. 2^{-K}.
///
/// (F1) scans support-net centers plus half-radius off-support shifts (for
/// measures with bounded support, off-support balls are dominated by
/// on-support balls of twice the radius); (F2) scans a net of the support
/// only, as in the definition.  The verdict is trend-based: the measured
/// per-scale constant must not grow (F1) / decay (F2) beyond
/// `slope_tol` per dyadic level.
inline FrostmanReport frostman_check(const FiniteMeasure& mu, double s,
                                     FrostmanDirection dir, int K,
                                     double slope_tol = 0.05) {
  if (K < 4) throw std::domain_error("frostman_check: need K >= 4");
  if (s < 0.0 || s > double(mu.d))
    throw std::domain_error("frostman_check: s outside [0, d]");
  if (mu.kind == MeasureKind::GridDensity &&
      mu.density.grid.h() > std::pow(2.0, -K))
    throw resolution_error("frostman_check: grid coarser than 2^-K");

  FrostmanReport rep;
  rep.s = s;
  rep.direction = dir;
  rep.scale_hi = 0.5;
  rep.scale_lo = std::pow(2.0, -K);

  const int d = mu.d;
  const bool upper = (dir == FrostmanDirection::UpperF1);
  double best = upper ? 0.0 : std::numeric_limits<double>::infinity();

  std::vector<double> levels;  // log2 of per-scale constants
  for (int j = 1; j <= K; ++j) {
    const double r = std::pow(2.0, -j);
    std::vector<double> centers = mu.support_net(r / 2.0, 200000);
    if (upper) {
      // off-support shifts at half a radius in each axis direction
      const std::size_t base = centers.size() / d;
      for (std::size_t i = 0; i < base; ++i)
        for (int k = 0; k < d; ++k)
          for (double sgn : {-1.0, 1.0}) {
            for (int kk = 0; kk < d; ++kk)
              centers.push_back(centers[i * d + kk] + (kk == k ? sgn * r / 2 : 0.0));
          }
    }
    const std::size_t ncent = centers.size() / d;
    std::vector<double> vals(ncent);
    parallel_for(ncent, [&](std::size_t i) {
      vals[i] = mu.ball_mass(&centers[i * d], r) / std::pow(r, s);
    });
    double cj = upper ? 0.0 : std::numeric_limits<double>::infinity();
    std::size_t arg = 0;
    for (std::size_t i = 0; i < ncent; ++i) {
      if (upper ? (vals[i] > cj) : (vals[i] < cj)) {
        cj = vals[i];
        arg = i;
      }
    }
    rep.per_scale_constant.push_back(cj);
    levels.push_back(std::log2(std::max(cj, 1e-300)));
    const bool improves = upper ? (cj > best) : (cj < best);
    if (improves) {
      best = cj;
      for (int k = 0; k < d; ++k) rep.witness_x[k] = centers[arg * d + k];
      rep.witness_r = r;
      rep.witness_value = cj;
    }
  }
  rep.constant = best;

  std::vector<double> js(levels.size());
  for (std::size_t i = 0; i < js.size(); ++i) js[i] = double(i + 1);
  rep.growth_slope = linear_fit(js, levels).first;

  if (upper)
    rep.pass = std::isfinite(rep.constant) && rep.growth_slope <= slope_tol;
  else
    rep.pass = rep.constant > 0.0 && rep.growth_slope >= -slope_tol;
  return rep;
}

}  // namespace fraclab
