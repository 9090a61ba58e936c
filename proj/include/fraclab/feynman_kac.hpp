#pragma once

#include "solver.hpp"
#include "stable_paths.hpp"

namespace fraclab {

struct FkConfig {
  long paths = 100000;
  std::uint64_t seed = 1;
  int steps = 256;       // path skeleton resolution: dt = t / steps
  unsigned threads = 0;  // replica parallelism; reduction order is fixed
};

struct FkEstimate {
  double estimate = 0.0;
  double se = 0.0;
  long paths = 0;
};

namespace detail {

// u-field lookup along a path with the heat-domination fallback off-grid:
// u^{lam phi} <= lam S phi, approximated by lam * mass(phi) * p_s(dist).
inline double field_value_capped(const Field& F, const KernelTable& kt,
                                 double lam_mass_phi, double s, const double* x) {
  double xx[2] = {x[0], F.grid.d == 2 ? x[1] : 0.0};
  if (x[0] >= -F.grid.L && x[0] <= F.grid.L &&
      (F.grid.d == 1 || (x[1] >= -F.grid.L && x[1] <= F.grid.L)))
    return F.at(s, xx);
  const double r = (F.grid.d == 1) ? std::abs(x[0]) : std::hypot(x[0], x[1]);
  return lam_mass_phi * kt.eval(std::max(s, 1e-12), r);
}

}  // namespace detail

/// Feynman-Kac value z^{phi,psi}(t,x) = E_x[ psi(W_t)
///   exp(-(1+beta) int_0^t u^{phi}(t-tau, W_tau)^beta dtau) ],
/// with u^{phi} supplied as a solved Field and the time integral by the
/// trapezoid rule on the sampled skeleton.  With psi = phi and u = u^{lam phi}
/// this is the lambda-derivative d/dlam u^{lam phi}_t(x).
inline FkEstimate fk_z(const KernelTable& kt, const StableIndex& idx,
                       const Field& u_field, const GridFunction& psi,
                       double lam_mass_phi, double t, const double* x,
                       const FkConfig& cfg) {
  if (u_field.horizon() < t * (1.0 - 1e-12))
    throw std::domain_error("fk: field horizon below requested t");
  const int d = idx.d;
  const double dtau = t / cfg.steps;
  std::vector<double> vals(cfg.paths);

  parallel_for(std::size_t(cfg.paths), [&](std::size_t i) {
    Rng rng = Rng::for_replica(cfg.seed, i);
    double W[2] = {x[0], d == 2 ? x[1] : 0.0};
    double integral = 0.0;
    double g_prev =
        std::pow(detail::field_value_capped(u_field, kt, lam_mass_phi, t, W), idx.beta);
    for (int k = 1; k <= cfg.steps; ++k) {
      double inc[2];
      stable_increment(idx.alpha, d, dtau, rng, inc);
      for (int c = 0; c < d; ++c) W[c] += inc[c];
      const double s = t - k * dtau;  // remaining time: u(t - tau_k, W)
      const double g =
          std::pow(detail::field_value_capped(u_field, kt, lam_mass_phi,
                                              std::max(s, 0.0), W),
                   idx.beta);
      integral += 0.5 * (g_prev + g) * dtau;
      g_prev = g;
    }
    double psival;
    if (psi.inside(W))
      psival = psi(W);
    else
      psival = 0.0;
    vals[i] = psival * std::exp(-(1.0 + idx.beta) * integral);
  }, cfg.threads);

  FkEstimate out;
  out.paths = cfg.paths;
  double sum = 0.0;
  for (double v : vals) sum += v;  // fixed reduction order
  out.estimate = sum / double(cfg.paths);
  double ss = 0.0;
  for (double v : vals) ss += (v - out.estimate) * (v - out.estimate);
  out.se = std::sqrt(ss / double(cfg.paths) / std::max<long>(cfg.paths - 1, 1));
  return out;
}

/// Monte Carlo estimate of d/dlambda u^{lambda phi}_t(x); requires the
/// solved field for u^{lambda phi}.
inline FkEstimate fk_lambda_derivative(const KernelTable& kt, const StableIndex& idx,
                                       const Field& u_lam_phi, const GridFunction& phi,
                                       double lambda, double t, const double* x,
                                       const FkConfig& cfg) {
  const double lam_mass = lambda * phi.total_mass();
  return fk_z(kt, idx, u_lam_phi, phi, lam_mass, t, x, cfg);
}

struct FkReconstruction {
  double estimate = 0.0;
  double se = 0.0;          // combined MC error of the quadrature
  double quad_error = 0.0;  // |trapezoid - Simpson| on the lambda grid
  std::vector<double> lambda_nodes;
  std::vector<double> derivative;  // MC estimates per node
};

/// u^{Lambda phi}_t(x) = int_0^Lambda d/dlam u^{lam phi}_t(x) dlam by
/// trapezoid over a lambda grid; each node solves its own field.
inline FkReconstruction fk_reconstruct(const KernelTable& kt, const StableIndex& idx,
                                       const GridFunction& phi, double Lambda,
                                       double t, const double* x,
                                       const SolverConfig& scfg, const FkConfig& cfg,
                                       int nodes = 9) {
  if (nodes < 3 || nodes % 2 == 0)
    throw std::domain_error("fk_reconstruct: need an odd node count >= 3");
  FkReconstruction R;
  std::vector<double> se(nodes);
  for (int i = 0; i < nodes; ++i) {
    const double lam = Lambda * i / (nodes - 1);
    R.lambda_nodes.push_back(lam);
    FkConfig node_cfg = cfg;
    node_cfg.seed = cfg.seed + 1000003ull * std::uint64_t(i + 1);
    if (lam == 0.0) {
      // u^0 = 0: the weight is identically 1 and the estimate is S_t phi(x)
      GridFunction zero(phi.grid);
      Field F0;
      F0.grid = phi.grid;
      F0.idx = idx;
      F0.times = {0.0, t};
      F0.slices = {zero.v, zero.v};
      auto est = fk_z(kt, idx, F0, phi, 0.0, t, x, node_cfg);
      R.derivative.push_back(est.estimate);
      se[i] = est.se;
    } else {
      GridFunction lam_phi = phi;
      for (auto& v : lam_phi.v) v *= lam;
      Field F = solve(kt, idx, lam_phi, t, scfg, "lambda*phi");
      auto est = fk_lambda_derivative(kt, idx, F, phi, lam, t, x, node_cfg);
      R.derivative.push_back(est.estimate);
      se[i] = est.se;
    }
  }
  const double hq = Lambda / (nodes - 1);
  double trap = 0.0, var = 0.0;
  for (int i = 0; i < nodes; ++i) {
    const double w = (i == 0 || i == nodes - 1) ? 0.5 * hq : hq;
    trap += w * R.derivative[i];
    var += w * w * se[i] * se[i];
  }
  double simp = 0.0;
  for (int i = 0; i + 2 < nodes; i += 2)
    simp += hq / 3.0 * (R.derivative[i] + 4.0 * R.derivative[i + 1] + R.derivative[i + 2]);
  R.estimate = trap;
  R.se = std::sqrt(var);
  R.quad_error = std::abs(trap - simp);
  return R;
}

}  // namespace fraclab
