#include <catch2/catch_amalgamated.hpp>

#include "fraclab/solver.hpp"

using namespace fraclab;

namespace {

const KernelTable& kt15() {
  static KernelTable kt = KernelTable::build(1.5, 1);
  return kt;
}

SolverConfig small_cfg() {
  SolverConfig cfg;
  cfg.grid = Grid(1, 32.0, 2048);
  cfg.dt = 1e-2;
  return cfg;
}

}  // namespace

TEST_CASE("constant data reduces to the separable ODE", "[solver]") {
  SolverConfig cfg;
  cfg.grid = Grid(1, 16.0, 512);
  cfg.dt = 1e-3;
  cfg.periodic = true;
  GridFunction one(cfg.grid, 1.0);
  for (double beta : {0.5, 1.0}) {
    StableIndex idx(1.5, beta, 1);
    Field F = solve(kt15(), idx, one, 1.0, cfg);
    for (std::size_t si = 1; si < F.times.size(); ++si) {
      const double t = F.times[si];
      const double want = std::pow(1.0 + beta * t, -1.0 / beta);
      CHECK(F.slices[si][100] == Catch::Approx(want).epsilon(1e-3));
    }
  }
  // lambda -> large reproduces U_t at t=1 within 1%
  StableIndex idx(1.5, 0.5, 1);
  GridFunction big(cfg.grid, 1e8);
  Field F = solve(kt15(), idx, big, 1.0, cfg);
  CHECK(F.at1(1.0, 0.0) == Catch::Approx(idx.U(1.0)).epsilon(1e-2));
}

TEST_CASE("absorption disabled reduces to the linear semigroup", "[solver]") {
  StableIndex idx(1.5, 0.5, 1);
  SolverConfig cfg = small_cfg();
  cfg.absorption = false;
  // start the atom at a cell center so the projection is exact
  const double c = cfg.grid.axis(cfg.grid.n / 2);
  Field F = solve(kt15(), idx, FiniteMeasure::delta(c, 1.0), 0.5, cfg);
  for (double x : {0.0, 1.0, 4.0})
    CHECK(F.at1(0.5, c + x) == Catch::Approx(kt15().eval(0.5, x)).epsilon(2e-2));
}

TEST_CASE("structural invariants audited on every solve", "[solver]") {
  StableIndex idx(1.5, 0.5, 1);
  SolverConfig cfg = small_cfg();
  Field F = solve(kt15(), idx, FiniteMeasure::delta(0.0, 64.0), 1.0, cfg);
  CHECK(F.audit.max_cap_excess <= 1e-8);        // 0 <= u <= U(t)
  CHECK(F.audit.max_mass_increase <= 1e-10);    // space integral non-increasing
  CHECK(F.audit.max_heat_excess <= 0.02);       // u <= S_t u0
  CHECK(F.audit.final_mass <= F.audit.initial_mass);
  for (double v : F.back()) CHECK(v >= 0.0);
}

TEST_CASE("comparison principle on nested data", "[solver]") {
  StableIndex idx(1.5, 0.7, 1);
  SolverConfig cfg = small_cfg();
  Field a = solve(kt15(), idx, FiniteMeasure::box1(-0.5, 0.5, 1.0), 0.5, cfg);
  Field b = solve(kt15(), idx, FiniteMeasure::box1(-1.0, 1.0, 4.0), 0.5, cfg);
  // mu <= nu on cells: box(-1,1,4) has density 2 >= density 1 of box(-.5,.5,1)
  for (int j = 0; j < cfg.grid.n; ++j)
    CHECK(a.back()[j] <= b.back()[j] + 1e-9);
  // scaling a measure up only increases the solution
  Field c = solve(kt15(), idx, FiniteMeasure::box1(-0.5, 0.5, 2.0), 0.5, cfg);
  for (int j = 0; j < cfg.grid.n; ++j)
    CHECK(a.back()[j] <= c.back()[j] + 1e-9);
}

TEST_CASE("lambda sweep is monotone and capped", "[solver]") {
  StableIndex idx(1.5, 0.7, 1);
  SolverConfig cfg = small_cfg();
  cfg.lambda_ladder = {1, 4, 16, 64};
  SweepResult R = lambda_sweep(kt15(), idx, FiniteMeasure::delta(0.0, 1.0), 0.5, cfg);
  const double cap = idx.U(0.5);
  for (const auto& f : R.fields_at_t)
    for (double v : f.v) CHECK(v <= cap * (1 + 1e-8));
  for (std::size_t j = 1; j < R.fields_at_t.size(); ++j)
    for (int i = 0; i < cfg.grid.n; i += 37)
      CHECK(R.fields_at_t[j].v[i] >= R.fields_at_t[j - 1].v[i] - 1e-9);
  CHECK(R.fraction_converged >= 0.0);
  SolverConfig bad = cfg;
  bad.lambda_ladder = {1, 4};
  CHECK_THROWS_AS(lambda_sweep(kt15(), idx, FiniteMeasure::delta(0.0, 1.0), 0.5, bad),
                  std::domain_error);
}

TEST_CASE("scaling identity residual", "[solver]") {
  StableIndex idx(1.5, 0.5, 1);
  SolverConfig cfg = small_cfg();
  cfg.grid = Grid(1, 32.0, 4096);
  // t = 1 is the identity: both sides are the same run configuration
  CHECK(scaling_residual(kt15(), idx, FiniteMeasure::delta(0.0, 1.0), 1.0, 1.0, cfg) <
        1e-9);
  CHECK(scaling_residual(kt15(), idx, FiniteMeasure::delta(0.0, 1.0), 1.0, 0.25, cfg) <
        2e-2);
  CHECK(scaling_residual(kt15(), idx, FiniteMeasure::box1(0, 1, 1.0), 2.0, 0.5, cfg) <
        2e-2);
}

TEST_CASE("heat-kernel lower bound ratio", "[solver]") {
  StableIndex idx(1.5, 0.5, 1);
  SolverConfig cfg = small_cfg();
  const double c1 = kernel_lower_bound_check(kt15(), idx, 1.0, cfg);
  const double c4 = kernel_lower_bound_check(kt15(), idx, 4.0, cfg);
  CHECK(c1 > 0.0);
  CHECK(c4 >= c1 * (1 - 1e-9));
  CHECK_THROWS_AS(kernel_lower_bound_check(kt15(), idx, 0.5, cfg), std::domain_error);
}

TEST_CASE("kernel floor at the infinite rung dominates finite rungs", "[solver]") {
  StableIndex idx(1.5, 0.5, 1);
  SolverConfig cfg = small_cfg();
  const double c1 = kernel_lower_bound_check(kt15(), idx, 1.0, cfg);
  Field Finf = solve_infinite(kt15(), idx, FiniteMeasure::delta(0.0, 1.0), 1.0, cfg);
  double cinf = std::numeric_limits<double>::infinity();
  for (int j = 0; j < cfg.grid.n; ++j)
    cinf = std::min(cinf, Finf.back()[j] / kt15().p1(std::abs(cfg.grid.axis(j))));
  CHECK(cinf >= c1 * (1 - 1e-9));
  CHECK(cinf > 0.0);
}

TEST_CASE("heat bound resolution guard", "[solver]") {
  Grid g(1, 2.0, 64);
  GridFunction f(g, 0.25);
  auto gd = FiniteMeasure::grid_density(f);
  CHECK_THROWS_AS(
      frostman_heat_bound_check(kt15(), gd, 1.0, {1e-6}, {1.0}),
      resolution_error);
}

TEST_CASE("Frostman heat bound exponents", "[solver]") {
  // delta_0 (s = 0): S_t(delta_0)(0) = p_t(0) ~ t^{-d/alpha}
  auto fit = frostman_heat_bound_check(kt15(), FiniteMeasure::delta(0.0, 1.0), 0.0,
                                       {1e-3, 1e-2, 1e-1, 1.0}, {1.0});
  CHECK(fit.slope == Catch::Approx(-1.0 / 1.5).margin(0.15));
  // Lebesgue on [0,1] (s = d): bounded in t
  auto flat = frostman_heat_bound_check(kt15(), FiniteMeasure::box1(0, 1, 1.0), 1.0,
                                        {1e-3, 1e-2, 1e-1, 1.0}, {1, 2, 4, 8, 16, 32, 64});
  CHECK(std::abs(flat.slope) < 0.15);
}

TEST_CASE("solver stability under dt refinement", "[solver]") {
  StableIndex idx(1.5, 0.5, 1);
  SolverConfig cfg = small_cfg();
  cfg.richardson = true;
  Field F = solve(kt15(), idx, FiniteMeasure::delta(0.0, 4.0), 0.5, cfg);
  CHECK(F.audit.richardson_estimate >= 0.0);
  CHECK(F.audit.richardson_estimate < 5e-3 * idx.U(0.5));
}

TEST_CASE("mollified-start stability under grid refinement", "[solver]") {
  // the mollification scale is tied to the grid; halving it (refining the
  // grid) must change probe values by less than twice the coarser-pair
  // discretization estimate
  StableIndex idx(1.5, 0.5, 1);
  auto mu = FiniteMeasure::delta(0.0, 4.0);
  auto probe_vals = [&](int n) {
    SolverConfig cfg;
    cfg.grid = Grid(1, 32.0, n);
    cfg.dt = 1e-2;
    Field F = solve(kt15(), idx, mu, 0.5, cfg);
    std::vector<double> out;
    for (double p : {0.0, 0.5, 1.0, 2.0}) out.push_back(F.at1(0.5, p));
    return out;
  };
  auto a = probe_vals(1024), b = probe_vals(2048), c = probe_vals(4096);
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double coarse_est = std::abs(a[i] - b[i]);
    CHECK(std::abs(b[i] - c[i]) <= 2.0 * coarse_est + 1e-6);
  }
}

TEST_CASE("solver error paths", "[solver]") {
  StableIndex idx(1.5, 0.5, 1);
  SolverConfig cfg = small_cfg();
  GridFunction wrong(Grid(1, 16.0, 512));
  CHECK_THROWS_AS(solve(kt15(), idx, wrong, 1.0, cfg), std::logic_error);
  CHECK_THROWS_AS(solve(kt15(), idx, FiniteMeasure::delta(0.0, 1.0), 0.0, cfg),
                  std::domain_error);
  SolverConfig off = cfg;
  off.absorption = false;
  CHECK_THROWS_AS(solve_infinite(kt15(), idx, FiniteMeasure::delta(0.0, 1.0), 1.0, off),
                  std::domain_error);
}

TEST_CASE("field interpolation and provenance", "[solver]") {
  StableIndex idx(1.5, 0.5, 1);
  SolverConfig cfg = small_cfg();
  Field F = solve(kt15(), idx, FiniteMeasure::delta(0.0, 1.0), 0.5, cfg);
  CHECK(F.config_hash == cfg.hash());
  CHECK(F.initial_desc.find("atoms") != std::string::npos);
  CHECK(F.eps0 == Catch::Approx(std::pow(cfg.grid.h(), idx.alpha)));
  // interpolation brackets stored slices
  const double mid = 0.5 * (F.times[2] + F.times[3]);
  const double v = F.at1(mid, 0.3);
  CHECK(v >= std::min(F.slices[2][0], 0.0));
  CHECK(v <= idx.U(F.times[2]));
}

TEST_CASE("barrier domination of solutions", "[solver]") {
  StableIndex idx(1.9, 1.0, 1);
  auto kt19 = KernelTable::build(1.9, 1);
  FiniteMeasure mu = FiniteMeasure::cantor(1.0 / 3.0, 24, 1.0);
  Barrier bar(idx, std::log(2.0) / std::log(3.0), mu);
  auto cal = calibrate_lambda0(bar, BarrierLattice::standard(mu, 6, 1e-2, 1.0, 6.0));
  SolverConfig cfg;
  cfg.grid = Grid(1, 16.0, 1024);
  cfg.dt = 1e-2;
  const double tol = 0.02 * idx.U(1.0);
  // nu = mu itself
  CHECK(dominates_solution(kt19, idx, bar, cal.lambda0, mu, 0.02, 1.0, cfg) <= tol);
  // nu = atom at a support point with the same total mass
  auto atom = FiniteMeasure::delta(1.0 / 3.0, mu.mass);
  CHECK(dominates_solution(kt19, idx, bar, cal.lambda0, atom, 0.02, 1.0, cfg) <= tol);
}

TEST_CASE("point dichotomy classification", "[solver][slowish]") {
  SolverConfig cfg;
  cfg.grid = Grid(1, 64.0, 4096);
  cfg.dt = 1e-2;
  StableIndex flat(1.5, 0.5, 1), nonflat(1.5, 0.7, 1);
  auto mu = FiniteMeasure::delta(0.0, 1.0);
  auto v1 = classify_dichotomy(kt15(), flat, mu, 0.0, 1.0, cfg);
  CHECK(v1.verdict == DichotomyVerdict::Kind::Flat);
  auto v2 = classify_dichotomy(kt15(), nonflat, mu, 0.0, 1.0, cfg);
  CHECK(v2.verdict == DichotomyVerdict::Kind::NonFlat);
  CHECK(v2.tail_slope == Catch::Approx(-2.5).margin(0.45));
  // gap traces are non-increasing ladder traces
  for (std::size_t j = 1; j < v1.gap_trace.size(); ++j)
    CHECK(v1.gap_trace[j] <= v1.gap_trace[j - 1] + 1e-9);
}
