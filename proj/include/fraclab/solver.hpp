#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "barrier.hpp"
#include "semigroup.hpp"
#include "stable_index.hpp"

namespace fraclab {

/// Time-stepping configuration for the mild equation
///   u_t = S_t u0 - int_0^t S_{t-s}(u_s^{1+beta}) ds.
///
/// The stepper is Strang splitting ODE(dt/2) o S_dt o ODE(dt/2) where the
/// absorption half-steps use the exact flow (v^{-b} + b h)^{-1/b} of
/// u' = -u^{1+b}.  Measure data enter through a mollified start at the grid
/// scale; the notional smoothing time eps0 defaults to h^alpha.
struct SolverConfig {
  Grid grid{1, 32.0, 1024};
  double dt = 1e-2;         // maximum step size
  double dt_growth = 1.10;  // geometric ramp from dt0 up to dt (1.0: uniform)
  double dt0 = -1.0;        // initial step; <0: eps0 (measures) or dt/16
  double eps0 = -1.0;       // <0: use h^alpha for measure data
  bool periodic = false;    // torus mode (constant-data oracles)
  bool absorption = true;   // false: pure semigroup (linear test mode)
  double picard_tol = 1e-12;
  int picard_max_iters = 32;
  std::vector<double> lambda_ladder = {1, 4, 16, 64, 256, 1024};
  std::vector<double> probes = {0.0, 0.5, 1.0, 2.0, 5.0};
  int store_slices = 160;
  bool audit = true;
  double audit_heat_tol = 0.05;  // discretization allowance for u <= S_t u0
  bool richardson = false;
  int atom_budget = 4096;   // measure quadrature resolution

  /// Step sizes from t0 to T: geometric ramp, then uniform at dt, final step
  /// clipped to land on T exactly.
  std::vector<double> schedule(double t0, double T) const {
    std::vector<double> steps;
    double s0 = dt0 > 0 ? dt0 : (t0 > 0 ? std::min(t0, dt) : dt / 16.0);
    if (dt_growth <= 1.0) s0 = dt;
    double t = t0, step = s0;
    while (t < T - 1e-14 * std::max(1.0, T)) {
      double h = std::min(step, T - t);
      steps.push_back(h);
      t += h;
      step = std::min(dt, step * std::max(1.0, dt_growth));
    }
    if (steps.empty()) steps.push_back(T - t0);
    return steps;
  }

  std::uint64_t hash() const {
    char buf[256];
    std::snprintf(buf, sizeof buf, "g%d_%g_%d|dt%g_%g_%g|e%g|p%d|a%d|s%d|ab%d",
                  grid.d, grid.L, grid.n, dt, dt_growth, dt0, eps0, int(periodic),
                  int(absorption), store_slices, atom_budget);
    return fnv1a(buf);
  }
};

struct FieldAudit {
  double max_cap_excess = 0.0;     // max of u/U(elapsed) - 1 over audited steps
  double max_heat_excess = 0.0;    // max of (u - S_t u0)/scale at audit times
  double max_mass_increase = 0.0;  // relative step-to-step mass growth
  double initial_mass = 0.0;
  double final_mass = 0.0;
  double richardson_estimate = -1.0;  // probe-set dt refinement estimate
};

/// A solved space-time field u(t_n, x_j) >= 0 with provenance.
struct Field {
  Grid grid;
  StableIndex idx;
  std::vector<double> times;                // absolute time since the datum
  std::vector<std::vector<double>> slices;  // stored u(t_n, .)
  double eps0 = 0.0;                        // mollification offset (measures)
  std::string initial_desc;
  std::uint64_t config_hash = 0;
  FieldAudit audit;

  const std::vector<double>& back() const { return slices.back(); }
  double horizon() const { return times.back(); }

  /// u(t, x) by linear interpolation in time, multilinear in space.
  /// Pure and safe for concurrent reads.
  double at(double t, const double* x) const {
    if (times.empty()) throw std::logic_error("Field::at on empty field");
    if (t <= times.front()) return interp_slice(0, x);
    if (t >= times.back()) return interp_slice(slices.size() - 1, x);
    std::size_t i = std::size_t(std::upper_bound(times.begin(), times.end(), t) -
                                times.begin()) - 1;
    if (i + 1 >= times.size()) return interp_slice(times.size() - 1, x);
    const double w = (t - times[i]) / (times[i + 1] - times[i]);
    return (1.0 - w) * interp_slice(i, x) + w * interp_slice(i + 1, x);
  }

  double at1(double t, double x) const { return at(t, &x); }

  double interp_slice(std::size_t si, const double* x) const {
    const std::vector<double>& v = slices[si];
    const double h = grid.h();
    auto locate = [&](double xi, int& j0, double& w) {
      double u = (xi + grid.L) / h - 0.5;
      if (u <= 0) {
        j0 = 0;
        w = 0;
      } else if (u >= grid.n - 1) {
        j0 = grid.n - 2;
        w = 1;
      } else {
        j0 = int(u);
        w = u - j0;
      }
    };
    if (grid.d == 1) {
      int j;
      double w;
      locate(x[0], j, w);
      return (1 - w) * v[j] + w * v[j + 1];
    }
    int jx, jy;
    double wx, wy;
    locate(x[0], jx, wx);
    locate(x[1], jy, wy);
    const int n = grid.n;
    auto atc = [&](int ix, int iy) { return v[std::size_t(iy) * n + ix]; };
    return (1 - wy) * ((1 - wx) * atc(jx, jy) + wx * atc(jx + 1, jy)) +
           wy * ((1 - wx) * atc(jx, jy + 1) + wx * atc(jx + 1, jy + 1));
  }
};

namespace detail {

inline void absorb_half(std::vector<double>& u, const StableIndex& idx, double half_dt) {
  const double b = idx.beta;
  for (double& v : u) {
    if (v > 0.0) v = std::pow(std::pow(v, -b) + b * half_dt, -1.0 / b);
  }
}

}  // namespace detail

/// Advance the mild equation from a prepared initial grid slice.
/// `t0` is the absolute time of `u0` relative to the datum (eps0 for
/// mollified measures, 0 for function data).
inline Field solve_from_slice(const KernelTable& kt, const StableIndex& idx,
                              GridFunction u0, double t0, double T,
                              const SolverConfig& cfg, std::string initial_desc) {
  if (!(T > t0)) throw std::domain_error("solve: horizon must exceed the start time");
  if (!(cfg.dt > 0.0)) throw std::domain_error("solve: dt must be positive");
  const std::vector<double> steps = cfg.schedule(t0, T);
  const int nsteps = int(steps.size());

  Field F;
  F.grid = cfg.grid;
  F.idx = idx;
  F.eps0 = t0;
  F.initial_desc = std::move(initial_desc);
  F.config_hash = cfg.hash();

  const int stride = std::max(1, (nsteps + cfg.store_slices - 1) / cfg.store_slices);
  std::optional<Convolver> conv;
  double conv_dt = -1.0;

  std::vector<double> u = u0.v;
  F.times.push_back(t0);
  F.slices.push_back(u);
  F.audit.initial_mass = u0.total_mass();

  const double cellvol = cfg.grid.cell_volume();
  double prev_mass = F.audit.initial_mass;
  std::vector<double> tmp;

  // audit times for the heat-domination check (direct S_{t} u0 comparison)
  const int n_heat_checks = cfg.audit ? 6 : 0;

  double elapsed = 0.0;
  for (int k = 1; k <= nsteps; ++k) {
    const double dt = steps[k - 1];
    elapsed += dt;
    if (dt != conv_dt) {
      conv.emplace(kt, cfg.grid, dt, cfg.periodic);
      conv_dt = dt;
    }
    if (cfg.absorption) detail::absorb_half(u, idx, 0.5 * dt);
    conv->apply(u, tmp);
    u.swap(tmp);
    if (cfg.absorption) detail::absorb_half(u, idx, 0.5 * dt);

    if (cfg.audit) {
      const double cap = idx.U(elapsed);  // elapsed from the realized start
      double mx = 0.0, mass = 0.0;
      for (double v : u) {
        mx = std::max(mx, v);
        mass += v;
      }
      mass *= cellvol;
      if (cfg.absorption)
        F.audit.max_cap_excess = std::max(F.audit.max_cap_excess, mx / cap - 1.0);
      F.audit.max_mass_increase =
          std::max(F.audit.max_mass_increase, mass / std::max(prev_mass, 1e-300) - 1.0);
      prev_mass = mass;
      if (F.audit.max_cap_excess > 1e-8)
        throw consistency_error("solve: u exceeded U(t) cap by " +
                                std::to_string(F.audit.max_cap_excess));
      if (F.audit.max_mass_increase > 1e-10)
        throw consistency_error("solve: space integral of u increased");
    }

    if (k % stride == 0 || k == nsteps) {
      F.times.push_back(t0 + elapsed);
      F.slices.push_back(u);
    }
  }

  if (cfg.audit && n_heat_checks > 0) {
    for (int c = 1; c <= n_heat_checks; ++c) {
      const std::size_t si = F.slices.size() * c / n_heat_checks - 1;
      const double s = F.times[si] - t0;
      if (s <= 0) continue;
      Convolver big(kt, cfg.grid, s, cfg.periodic);
      big.apply(u0.v, tmp);
      double worst = 0.0, scale = 1e-300;
      for (std::size_t i = 0; i < tmp.size(); ++i) scale = std::max(scale, tmp[i]);
      for (std::size_t i = 0; i < tmp.size(); ++i)
        worst = std::max(worst, (F.slices[si][i] - tmp[i]) / scale);
      F.audit.max_heat_excess = std::max(F.audit.max_heat_excess, worst);
    }
    if (F.audit.max_heat_excess > cfg.audit_heat_tol)
      throw consistency_error("solve: heat-domination invariant violated, excess " +
                              std::to_string(F.audit.max_heat_excess));
  }

  F.audit.final_mass = prev_mass;
  return F;
}

/// Mild solution with measure initial data.  The measure is mollified onto
/// the grid by exact cell projection (box kernel at scale h; the notional
/// smoothing time eps0 = h^alpha is recorded).  The projection is compactly
/// supported, which keeps arbitrarily large lambda rungs honest.
inline Field solve(const KernelTable& kt, const StableIndex& idx,
                   const FiniteMeasure& mu, double T, const SolverConfig& cfg_in) {
  SolverConfig cfg = cfg_in;
  if (cfg.dt0 <= 0)  // resolve the projection scale first
    cfg.dt0 = std::min(cfg.dt, std::pow(cfg.grid.h(), idx.alpha));
  GridFunction u0 = project_to_cells(mu, cfg.grid);
  Field F = solve_from_slice(kt, idx, std::move(u0), 0.0, T, cfg, mu.describe());
  F.config_hash = cfg_in.hash();
  F.eps0 = cfg.eps0 > 0 ? cfg.eps0 : std::pow(cfg.grid.h(), idx.alpha);
  if (cfg.richardson) {
    SolverConfig half = cfg;
    half.dt = cfg.dt / 2;
    half.dt0 = cfg.dt0 > 0 ? cfg.dt0 / 2 : -1.0;
    half.richardson = false;
    Field F2 = solve(kt, idx, mu, T, half);
    double est = 0.0;
    for (double p : cfg.probes) {
      double x[2] = {p, 0.0};
      est = std::max(est, std::abs(F.at(T, x) - F2.at(T, x)));
    }
    F.audit.richardson_estimate = est;
  }
  return F;
}

/// Discrete lambda -> infinity limit: the initial slice is the absorption cap
/// on every cell meeting supp(mu) (exact limit of the projected-data scheme
/// as lambda grows).  Meaningful in the window t >> h^alpha.
inline Field solve_infinite(const KernelTable& kt, const StableIndex& idx,
                            const FiniteMeasure& mu, double T,
                            const SolverConfig& cfg_in) {
  SolverConfig cfg = cfg_in;
  if (!cfg.absorption)
    throw std::domain_error("solve_infinite: requires absorption enabled");
  if (cfg.dt0 <= 0)
    cfg.dt0 = std::min(cfg.dt, std::pow(cfg.grid.h(), idx.alpha));
  GridFunction u0(cfg.grid);
  const auto mask = support_cells(mu, cfg.grid);
  bool any = false;
  for (std::size_t i = 0; i < mask.size(); ++i)
    if (mask[i]) {
      u0.v[i] = 1e12;  // collapses to the cap at the first absorption step
      any = true;
    }
  if (!any) throw std::logic_error("solve_infinite: support misses the grid");
  return solve_from_slice(kt, idx, std::move(u0), 0.0, T, cfg,
                          "inf*" + mu.describe());
}

/// Mild solution with bounded function initial data.
inline Field solve(const KernelTable& kt, const StableIndex& idx,
                   const GridFunction& phi, double T, const SolverConfig& cfg,
                   const std::string& desc = "grid-function") {
  if (!(phi.grid == cfg.grid))
    throw std::logic_error("solve: initial function must live on cfg.grid");
  return solve_from_slice(kt, idx, phi, 0.0, T, cfg, desc);
}

// ---------------------------------------------------------------------------
// lambda ladders, dichotomy classification
// ---------------------------------------------------------------------------

struct SweepResult {
  std::vector<double> lambdas;
  std::vector<GridFunction> fields_at_t;  // u^{lambda mu}_t per rung
  GridFunction extrapolated;              // monotone-limit detection: last rung
  std::vector<std::uint8_t> converged;    // per grid point Cauchy flag
  double fraction_converged = 0.0;
  double t = 0.0;
};

/// Solve along a geometric lambda ladder; fields are pointwise nondecreasing
/// in lambda (checked) and capped by U(t).
inline SweepResult lambda_sweep(const KernelTable& kt, const StableIndex& idx,
                                const FiniteMeasure& mu, double t,
                                const SolverConfig& cfg) {
  if (cfg.lambda_ladder.size() < 4)
    throw std::domain_error("lambda_sweep: ladder needs >= 4 rungs");
  for (std::size_t j = 1; j < cfg.lambda_ladder.size(); ++j)
    if (!(cfg.lambda_ladder[j] > cfg.lambda_ladder[j - 1]))
      throw std::domain_error("lambda_sweep: ladder must be strictly increasing");
  SweepResult R;
  R.lambdas = cfg.lambda_ladder;
  R.t = t;
  R.fields_at_t.resize(R.lambdas.size());

  parallel_for(R.lambdas.size(), [&](std::size_t j) {
    Field F = solve(kt, idx, mu.scaled(R.lambdas[j]), t, cfg);
    GridFunction g(cfg.grid);
    g.v = F.back();
    R.fields_at_t[j] = std::move(g);
  });

  const double cap = idx.U(t);
  const double tol = 1e-6 * cap;
  for (std::size_t j = 1; j < R.lambdas.size(); ++j) {
    for (std::size_t i = 0; i < R.fields_at_t[j].v.size(); ++i) {
      if (R.fields_at_t[j].v[i] < R.fields_at_t[j - 1].v[i] - tol)
        throw accuracy_error("lambda_sweep: rung monotonicity violated at rung " +
                             std::to_string(j));
    }
  }
  const auto& last = R.fields_at_t.back().v;
  const auto& prev = R.fields_at_t[R.fields_at_t.size() - 2].v;
  R.converged.resize(last.size());
  std::size_t nconv = 0;
  for (std::size_t i = 0; i < last.size(); ++i) {
    const bool c = (last[i] - prev[i]) <= std::max(1e-3 * cap, 0.02 * last[i]);
    R.converged[i] = c;
    nconv += c;
  }
  R.fraction_converged = double(nconv) / double(last.size());
  R.extrapolated = R.fields_at_t.back();
  return R;
}

struct DichotomyVerdict {
  enum class Kind { Flat, NonFlat, Inconclusive };
  Kind verdict = Kind::Inconclusive;
  std::vector<double> gap_trace;      // sup over probes of (U - u)/U per rung
  std::vector<double> far_gap_trace;  // same at the farthest probe
  double tail_slope = 0.0;            // log u vs log |x| on u^infty at t
  double tail_slope_stderr = 0.0;
  double trend_exponent = 0.0;        // d log u^infty(s, x0) / d log s, s -> 0
  double flatness_q = 0.0;            // measured barrier-race exponent
  double flatness_q_residual = 0.0;
  double beta_star_hint = 0.0;
  const char* name() const {
    switch (verdict) {
      case Kind::Flat: return "Flat";
      case Kind::NonFlat: return "NonFlat";
      default: return "Inconclusive";
    }
  }
};

struct DichotomyOptions {
  double flat_gap = 0.05;      // raw sup-gap fast path (fraction of U(t))
  double nonflat_gap = 0.20;   // far-probe gap gate (fraction of U(t))
  double plateau_rel = 0.035;  // far-gap "plateaued": per-rung change below this
  double tail_lo = 5.0, tail_hi = 50.0;  // |x| window for the slope fit
  double slope_band = 0.45;    // accepted deviation from -(d+alpha)
  double probe_offset = 1.0;   // trend probe distance beyond the support
  std::vector<double> trend_times = {0.04, 0.02, 0.01};
  bool run_trend = true;       // small-time off-support trend (diagnostic)
  double q_tol = 0.05;         // |flatness_q| below this: Inconclusive
};
/// Flat / non-flat classification.
///
/// The ladder trace supplies the screening gates: the trace must be
/// non-increasing, a raw sup-gap < flat_gap is accepted as Flat outright,
/// and NonFlat additionally needs a plateaued far-probe gap above
/// nonflat_gap plus a heat-kernel tail slope on u^infty.  At desk-scale
/// ladders the raw gaps of the two phases are not separable (saturation in
/// lambda is a slow power law), so the deciding statistic is the measured
/// barrier-race exponent flatness_q (see barrier_flatness_exponent): the
/// supersolution construction succeeds at infinity iff flatness_q < 0.
/// |flatness_q| < q_tol returns Inconclusive, the honest verdict near
/// beta*(alpha,s).  The off-support small-time trend of u^infty (divergence
/// vs uniform vanishing, the initial-trace dichotomy) is attached as a
/// corroborating diagnostic.
inline DichotomyVerdict classify_dichotomy(const KernelTable& kt,
                                           const StableIndex& idx,
                                           const FiniteMeasure& mu, double s_hint,
                                           double t, const SolverConfig& cfg,
                                           DichotomyOptions opt = {}) {
  SweepResult sweep = lambda_sweep(kt, idx, mu, t, cfg);
  DichotomyVerdict v;
  v.beta_star_hint = idx.beta_star(s_hint);
  v.flatness_q = barrier_flatness_exponent(idx, s_hint, &v.flatness_q_residual);
  const double U = idx.U(t);

  std::vector<double> probes = cfg.probes;
  double far = 0.0;
  for (double p : probes) far = std::max(far, std::abs(p));
  for (const auto& f : sweep.fields_at_t) {
    double gap = 0.0, far_gap = 0.0;
    for (double p : probes) {
      double x[2] = {p, 0.0};
      const double g = std::max(0.0, (U - f(x)) / U);
      gap = std::max(gap, g);
      if (std::abs(p) == far) far_gap = std::max(far_gap, g);
    }
    v.gap_trace.push_back(gap);
    v.far_gap_trace.push_back(far_gap);
  }
  const std::size_t K = v.gap_trace.size() - 1;
  for (std::size_t j = 0; j < K; ++j)
    if (v.gap_trace[j + 1] > v.gap_trace[j] + 1e-9)
      throw consistency_error("classify_dichotomy: gap trace not non-increasing");

  // u^infty at the requested time: tail slope over the configured window
  Field uinf = solve_infinite(kt, idx, mu, t, cfg);
  if (cfg.grid.d == 1) {
    std::vector<double> lx, ly;
    for (int j = 0; j < cfg.grid.n; ++j) {
      const double x = cfg.grid.axis(j);
      if (std::abs(x) < opt.tail_lo || std::abs(x) > opt.tail_hi) continue;
      const double u = uinf.back()[j];
      if (u > 0.0) {
        lx.push_back(std::log(std::abs(x)));
        ly.push_back(std::log(u));
      }
    }
    if (lx.size() >= 8) {
      auto [slope, icpt] = linear_fit(lx, ly);
      double ss = 0.0, sxx = 0.0, mx = 0.0;
      for (double x : lx) mx += x;
      mx /= double(lx.size());
      for (std::size_t i = 0; i < lx.size(); ++i) {
        const double r = ly[i] - (slope * lx[i] + icpt);
        ss += r * r;
        sxx += (lx[i] - mx) * (lx[i] - mx);
      }
      v.tail_slope = slope;
      v.tail_slope_stderr =
          (lx.size() > 2 && sxx > 0) ? std::sqrt(ss / (lx.size() - 2) / sxx) : 0.0;
    }
  }

  // off-support small-time trend of u^infty, on a grid fine enough that the
  // smallest trend time stays well above the projection scale h^alpha
  if (opt.run_trend && cfg.grid.d == 1) {
    double lo[2], hi[2];
    mu.bounds(lo, hi);
    const double x0 = hi[0] + opt.probe_offset;
    double tmin = opt.trend_times[0];
    for (double s : opt.trend_times) tmin = std::min(tmin, s);
    const double h_needed = std::min(std::pow(tmin, 1.0 / idx.alpha) / 6.0,
                                     std::pow(tmin / 20.0, 1.0 / idx.alpha));
    const double Lt = std::max(std::abs(hi[0]), std::abs(lo[0])) +
                      opt.probe_offset + 10.0;
    int nt = int(next_pow2(std::size_t(std::ceil(2.0 * Lt / h_needed))));
    nt = std::min(nt, 1 << 15);
    SolverConfig tcfg = cfg;
    tcfg.grid = Grid(cfg.grid.d, Lt, nt);
    tcfg.dt0 = -1.0;
    std::vector<double> lt, lu;
    for (double s : opt.trend_times) {
      Field F = solve_infinite(kt, idx, mu, s, tcfg);
      double xq[2] = {x0, 0.0};
      const double val = F.at(s, xq);
      if (val > 0) {
        lt.push_back(std::log(s));
        lu.push_back(std::log(val));
      }
    }
    v.trend_exponent = (lt.size() >= 2) ? linear_fit(lt, lu).first : 0.0;
  }

  const bool plateaued =
      std::abs(v.far_gap_trace[K] - v.far_gap_trace[K - 1]) <=
      opt.plateau_rel * std::max(v.far_gap_trace[K], 1e-12);
  const double want = -(double(idx.d) + idx.alpha);
  const bool slope_ok = std::abs(v.tail_slope - want) <= opt.slope_band;
  bool shrinking = true;
  for (std::size_t j = (K >= 3 ? K - 3 : 0); j < K; ++j)
    shrinking = shrinking && (v.gap_trace[j + 1] < v.gap_trace[j] || v.gap_trace[j] < 1e-6);

  if (v.gap_trace[K] < opt.flat_gap) {
    v.verdict = DichotomyVerdict::Kind::Flat;  // genuinely saturated ladder
  } else if (v.flatness_q >= opt.q_tol && shrinking) {
    v.verdict = DichotomyVerdict::Kind::Flat;
  } else if (v.flatness_q <= -opt.q_tol &&
             v.far_gap_trace[K] > opt.nonflat_gap && plateaued && slope_ok) {
    v.verdict = DichotomyVerdict::Kind::NonFlat;
  } else {
    v.verdict = DichotomyVerdict::Kind::Inconclusive;
  }
  return v;
}

// ---------------------------------------------------------------------------
// self-similarity, kernel floor, Frostman heat bound
// ---------------------------------------------------------------------------

/// Sup-norm relative gap between u^{lambda mu}_t(x) and
/// t^{-1/beta} u^{lambda' mu'}(1, t^{-1/alpha} x) with
/// lambda' = t^{(alpha-beta)/(alpha beta)} lambda, mu' = dilate(mu, t^{-1/alpha}).
/// Both sides are independent solver runs on the configured grid.
inline double scaling_residual(const KernelTable& kt, const StableIndex& idx,
                               const FiniteMeasure& mu, double lambda, double t,
                               const SolverConfig& cfg) {
  Field lhs = solve(kt, idx, mu.scaled(lambda), t, cfg);
  const double s = std::pow(t, -1.0 / idx.alpha);
  const double lam2 =
      lambda * std::pow(t, (idx.alpha - idx.beta) / (idx.alpha * idx.beta));
  Field rhs = solve(kt, idx, mu.dilate(s).scaled(lam2), 1.0, cfg);

  const double tb = std::pow(t, -1.0 / idx.beta);
  double worst = 0.0, scale = 0.0;
  for (double v : lhs.back()) scale = std::max(scale, v);
  // sup over the numerically meaningful region: below 1e-3 of the sup the two
  // frames see different domain-boundary truncations of the heavy tail
  const double floor = 1e-3 * scale;
  for (int j = 0; j < cfg.grid.n; ++j) {
    const double x = cfg.grid.axis(j);
    if (std::abs(x) * s > cfg.grid.L * 0.9) continue;  // rhs must be in-grid
    double xl[2] = {x, 0.0}, xr[2] = {s * x, 0.0};
    const double a = lhs.at(t, xl);
    const double b = tb * rhs.at(1.0, xr);
    if (a < floor && b < floor) continue;
    worst = std::max(worst, std::abs(a - b) / std::max({a, b, floor}));
  }
  return worst;
}

/// inf over the grid of u^{lambda delta_0}_1(x) / p_1(x); strictly positive,
/// nondecreasing in lambda (heat-kernel lower-bound check).
inline double kernel_lower_bound_check(const KernelTable& kt, const StableIndex& idx,
                                       double lambda, const SolverConfig& cfg) {
  if (!(lambda >= 1.0)) throw std::domain_error("kernel_lower_bound_check: lambda >= 1");
  Field F = solve(kt, idx, FiniteMeasure::delta(0.0, lambda), 1.0, cfg);
  double worst = std::numeric_limits<double>::infinity();
  for (int j = 0; j < cfg.grid.n; ++j) {
    const double x = cfg.grid.axis(j);
    const double ratio = F.back()[j] / kt.p1(std::abs(x));
    worst = std::min(worst, ratio);
  }
  return worst;
}

/// Barrier domination check: max over the solve's stored slices within
/// [t_lo, t_hi] of u^nu(t, x) - h_k(t, x) for nu supported inside the
/// barrier measure's support.  Nonpositive (within solver tolerance) when
/// k is at or above the calibrated constant.
inline double dominates_solution(const KernelTable& kt, const StableIndex& idx,
                                 const Barrier& bar, double k,
                                 const FiniteMeasure& nu, double t_lo, double t_hi,
                                 const SolverConfig& cfg) {
  if (nu.mass <= 0.0) return 0.0;  // nu = 0: trivially dominated
  Field F = solve(kt, idx, nu, t_hi, cfg);
  double worst = -std::numeric_limits<double>::infinity();
  for (std::size_t si = 1; si < F.times.size(); ++si) {
    const double t = F.times[si];
    if (t < t_lo || t > t_hi) continue;
    for (int j = 0; j < cfg.grid.n; ++j) {
      double x = cfg.grid.axis(j);
      worst = std::max(worst, F.slices[si][j] - bar.h(k, t, &x));
    }
  }
  return worst;
}

struct HeatBoundFit {
  double slope = 0.0;
  std::vector<double> ts, M;  // M(t) = sup_{r,y} S_t(r^s mu(./r))(y)
};

/// Fit of log M(t) against log t for M(t) = sup_{r in rs, y} S_t(r^s mu(./r))(y).
/// For (F1)-s measures the exponent is pinned at -(d-s)/alpha.
inline HeatBoundFit frostman_heat_bound_check(const KernelTable& kt,
                                              const FiniteMeasure& mu, double s_dim,
                                              const std::vector<double>& ts,
                                              const std::vector<double>& rs,
                                              int atom_budget = 2048) {
  HeatBoundFit out;
  out.ts = ts;
  const int d = mu.d;
  for (double t : ts) {
    const double diffusion = std::pow(t, 1.0 / kt.alpha());
    double best = 0.0;
    for (double r : rs) {
      FiniteMeasure nu = mu.dilate(r).scaled(std::pow(r, s_dim));
      if (nu.kind == MeasureKind::GridDensity && diffusion < nu.density.grid.h())
        throw resolution_error("frostman_heat_bound_check: t^{1/alpha} below grid resolution");
      std::vector<double> apts, awts;
      nu.atomize(atom_budget, apts, awts);
      // candidate sup points: atoms plus half-offsets
      std::vector<double> cand(apts);
      for (std::size_t i = 0; i < awts.size(); ++i)
        for (int k = 0; k < d; ++k)
          cand.push_back(apts[i * d + k] + 0.5 * diffusion);
      const std::size_t ncand = cand.size() / d;
      std::vector<double> vals(ncand);
      parallel_for(ncand, [&](std::size_t i) {
        vals[i] = semigroup_measure_at(kt, t, apts, awts, d, &cand[i * d]);
      });
      for (double v : vals) best = std::max(best, v);
    }
    out.M.push_back(best);
  }
  std::vector<double> lx, ly;
  for (std::size_t i = 0; i < ts.size(); ++i) {
    lx.push_back(std::log(ts[i]));
    ly.push_back(std::log(out.M[i]));
  }
  out.slope = linear_fit(lx, ly).first;
  return out;
}

}  // namespace fraclab
