// Command-line laboratory: kernel checks, mild solves, dichotomy sweeps,
// barrier certificates, Feynman-Kac cross-checks and branching-particle
// experiments.  Every subcommand writes CSV/JSON keyed by a plan hash; reruns
// with the same plan are byte-identical apart from the manifest timestamp.

#include <CLI11.hpp>

#include "fraclab/experiments.hpp"

using namespace fraclab;
using nlohmann::json;

namespace {

json parse_spec(const std::string& spec) {
  if (!spec.empty() && spec[0] == '@') {
    std::ifstream in(spec.substr(1));
    if (!in) throw std::runtime_error("cannot open spec file " + spec.substr(1));
    return json::parse(in);
  }
  return json::parse(spec);
}

SolverConfig solver_from_json(const json& j) {
  SolverConfig cfg;
  if (j.contains("grid"))
    cfg.grid = Grid(j["grid"].value("d", 1), j["grid"].value("L", 32.0),
                    j["grid"].value("n", 4096));
  cfg.dt = j.value("dt", cfg.dt);
  cfg.dt_growth = j.value("dt_growth", cfg.dt_growth);
  cfg.dt0 = j.value("dt0", cfg.dt0);
  cfg.eps0 = j.value("eps0", cfg.eps0);
  cfg.periodic = j.value("periodic", cfg.periodic);
  cfg.absorption = j.value("absorption", cfg.absorption);
  if (j.contains("lambda_ladder"))
    cfg.lambda_ladder = j["lambda_ladder"].get<std::vector<double>>();
  if (j.contains("probes")) cfg.probes = j["probes"].get<std::vector<double>>();
  cfg.store_slices = j.value("store_slices", cfg.store_slices);
  return cfg;
}

json solver_to_json(const SolverConfig& cfg) {
  return {{"grid", {{"d", cfg.grid.d}, {"L", cfg.grid.L}, {"n", cfg.grid.n}}},
          {"dt", cfg.dt},
          {"dt_growth", cfg.dt_growth},
          {"dt0", cfg.dt0},
          {"eps0", cfg.eps0},
          {"periodic", cfg.periodic},
          {"absorption", cfg.absorption},
          {"lambda_ladder", cfg.lambda_ladder},
          {"probes", cfg.probes},
          {"store_slices", cfg.store_slices}};
}

GridFunction phi_from_json(const json& j, const Grid& g) {
  GridFunction phi(g);
  const std::string kind = j.value("kind", "indicator");
  if (kind == "indicator") {
    const double lo = j.value("lo", -1.0), hi = j.value("hi", 1.0);
    for (int i = 0; i < g.n; ++i)
      phi.v[i] = (g.axis(i) >= lo && g.axis(i) <= hi) ? j.value("height", 1.0) : 0.0;
  } else if (kind == "constant") {
    for (auto& v : phi.v) v = j.value("value", 1.0);
  } else {
    throw std::domain_error("phi spec: unknown kind " + kind);
  }
  return phi;
}

json load_config(const std::string& path) {
  if (path.empty()) return json::object();
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path);
  return json::parse(in);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"fraclab: fractional semilinear PDE / branching-measure laboratory"};
  app.require_subcommand(1);
  app.fallthrough();  // global options may follow the subcommand

  std::string out_dir = "out";
  std::string config_path;
  std::string kernel_cache;
  std::uint64_t seed = 1;
  app.add_option("--out", out_dir, "output directory");
  app.add_option("--config", config_path, "JSON config file");
  app.add_option("--kernel-cache", kernel_cache, "kernel table cache directory");
  app.add_option("--seed", seed, "base RNG seed");

  int failures = 0;

  // ---- kernel-check ----
  auto* ck = app.add_subcommand("kernel-check", "kernel normalization and envelope");
  double ck_alpha = 1.5;
  int ck_d = 1;
  ck->add_option("--alpha", ck_alpha);
  ck->add_option("--d", ck_d);
  ck->callback([&] {
    KernelTable kt = KernelTable::get(ck_alpha, ck_d, kernel_cache);
    auto [lo, hi] = kt.envelope();
    std::filesystem::create_directories(out_dir);
    CsvWriter csv(std::filesystem::path(out_dir) / "kernel_check.csv",
                  {"alpha", "d", "p1_0", "norm_defect", "env_low", "env_high"});
    csv.row({CsvWriter::num(ck_alpha), std::to_string(ck_d), CsvWriter::num(kt.p0()),
             CsvWriter::num(kt.normalization_defect()), CsvWriter::num(lo),
             CsvWriter::num(hi)});
    std::printf("alpha=%g d=%d p1(0)=%.8f norm-defect=%.2e envelope=[%.5f, %.5f]\n",
                ck_alpha, ck_d, kt.p0(), kt.normalization_defect(), lo, hi);
    if (kt.normalization_defect() > 1e-3 || !(lo > 0)) ++failures;
  });

  // ---- solve ----
  auto* sv = app.add_subcommand("solve", "mild solve; dumps field CSV + metadata");
  std::string sv_measure = R"({"kind":"delta","x":0,"mass":1})";
  double sv_alpha = 1.5, sv_beta = 0.5, sv_T = 1.0, sv_lambda = 1.0;
  sv->add_option("--measure", sv_measure, "measure spec (JSON or @file)");
  sv->add_option("--alpha", sv_alpha);
  sv->add_option("--beta", sv_beta);
  sv->add_option("--T", sv_T);
  sv->add_option("--lambda", sv_lambda);
  sv->callback([&] {
    json cfgj = load_config(config_path);
    SolverConfig cfg = solver_from_json(cfgj);
    StableIndex idx(sv_alpha, sv_beta, cfg.grid.d);
    KernelTable kt = KernelTable::get(sv_alpha, cfg.grid.d, kernel_cache);
    FiniteMeasure mu = measure_from_json(parse_spec(sv_measure)).scaled(sv_lambda);
    Field F = solve(kt, idx, mu, sv_T, cfg);
    std::filesystem::create_directories(out_dir);
    CsvWriter csv(std::filesystem::path(out_dir) / "field.csv", {"t", "x", "u"});
    for (std::size_t si = 0; si < F.slices.size(); ++si)
      for (int j = 0; j < cfg.grid.n; ++j)
        csv.row({CsvWriter::num(F.times[si]), CsvWriter::num(cfg.grid.axis(j)),
                 CsvWriter::num(F.slices[si][j])});
    Manifest man;
    man.out_dir = out_dir;
    man.plan = {{"cmd", "solve"},    {"measure", parse_spec(sv_measure)},
                {"alpha", sv_alpha}, {"beta", sv_beta},
                {"T", sv_T},         {"lambda", sv_lambda},
                {"solver", solver_to_json(cfg)}};
    man.results = {{"initial", F.initial_desc},
                   {"config_hash", hash_hex(F.config_hash)},
                   {"eps0", F.eps0},
                   {"audit",
                    {{"max_cap_excess", F.audit.max_cap_excess},
                     {"max_heat_excess", F.audit.max_heat_excess},
                     {"max_mass_increase", F.audit.max_mass_increase},
                     {"initial_mass", F.audit.initial_mass},
                     {"final_mass", F.audit.final_mass}}}};
    man.write();
    write_plot_script(std::filesystem::path(out_dir) / "plot_field.py", "field.csv",
                      "tailslope");
    std::printf("solved to T=%g; final mass %.6f of %.6f; outputs in %s\n", sv_T,
                F.audit.final_mass, F.audit.initial_mass, out_dir.c_str());
  });

  // ---- dichotomy-sweep ----
  auto* dw = app.add_subcommand("dichotomy-sweep", "flat/non-flat sweep over (alpha,beta,measure)");
  dw->callback([&] {
    json cfgj = load_config(config_path);
    DichotomySweepOptions opt;
    opt.solver = solver_from_json(cfgj.value("solver", json::object()));
    if (!cfgj.contains("solver")) {
      opt.solver.grid = Grid(1, 64.0, 8192);
      opt.solver.dt = 1e-2;
    }
    opt.t = cfgj.value("t", 1.0);
    opt.run_simulator = cfgj.value("run_simulator", false);
    opt.seed = seed;
    opt.kernel_cache = kernel_cache;
    std::vector<DichotomyCell> cells;
    if (cfgj.contains("cells")) {
      for (const auto& cj : cfgj["cells"]) {
        DichotomyCell cell;
        cell.alpha = cj.at("alpha").get<double>();
        cell.beta = cj.at("beta").get<double>();
        cell.s_nominal = cj.value("s", 0.0);
        cell.mu = measure_from_json(cj.at("measure"));
        cell.label = cj.value("label", "cell");
        cells.push_back(std::move(cell));
      }
    } else {
      cells.push_back({1.5, 0.5, 0.0, FiniteMeasure::delta(0.0, 1.0), "delta-flat"});
      cells.push_back({1.5, 0.7, 0.0, FiniteMeasure::delta(0.0, 1.0), "delta-nonflat"});
    }
    auto rows = run_dichotomy_sweep(cells, opt);
    std::filesystem::create_directories(out_dir);
    write_dichotomy_csv(rows, std::filesystem::path(out_dir) / "dichotomy.csv");
    Manifest man;
    man.out_dir = out_dir;
    man.plan = {{"cmd", "dichotomy-sweep"}, {"config", cfgj}};
    man.defaults = {{"solver", solver_to_json(opt.solver)}, {"t", opt.t}};
    json res = json::array();
    for (const auto& r : rows) {
      res.push_back({{"label", r.cell.label},
                     {"verdict", r.error.empty() ? r.verdict.name() : "error"},
                     {"agree", r.agree}});
      if (!r.agree) ++failures;
    }
    man.results = {{"rows", res}};
    man.write();
    std::printf("sweep complete: %zu cells -> %s/dichotomy.csv\n", rows.size(),
                out_dir.c_str());
  });

  // ---- barrier-verify ----
  auto* bv = app.add_subcommand("barrier-verify", "supersolution residual scan + Lambda0");
  std::string bv_measure = R"({"kind":"cantor","ratio":0.3333333333333333,"depth":24,"mass":1})";
  double bv_alpha = 1.9, bv_beta = 1.0, bv_s = 0.6309297535714574;
  std::string bv_lattice;
  bv->add_option("--measure", bv_measure);
  bv->add_option("--alpha", bv_alpha);
  bv->add_option("--beta", bv_beta);
  bv->add_option("--s", bv_s);
  bv->add_option("--lattice", bv_lattice, "JSON lattice file {ts:[..], xs:[..]}");
  bv->callback([&] {
    StableIndex idx(bv_alpha, bv_beta, 1);
    FiniteMeasure mu = measure_from_json(parse_spec(bv_measure));
    Barrier bar(idx, bv_s, mu);
    BarrierLattice lat;
    if (!bv_lattice.empty()) {
      json lj = parse_spec("@" + bv_lattice);
      lat.ts = lj.at("ts").get<std::vector<double>>();
      lat.xs = lj.at("xs").get<std::vector<double>>();
    } else {
      lat = BarrierLattice::standard(mu);
    }
    auto cal = calibrate_lambda0(bar, lat);
    std::filesystem::create_directories(out_dir);
    CsvWriter csv(std::filesystem::path(out_dir) / "barrier_residuals.csv",
                  {"t", "x", "residual_at_lambda0", "k_needed"});
    for (double t : lat.ts)
      for (std::size_t i = 0; i < lat.xs.size(); ++i) {
        csv.row({CsvWriter::num(t), CsvWriter::num(lat.xs[i]),
                 CsvWriter::num(bar.supersolution_residual(cal.lambda0, t, &lat.xs[i])),
                 CsvWriter::num(bar.k_needed(t, &lat.xs[i]))});
      }
    write_plot_script(std::filesystem::path(out_dir) / "plot_residuals.py",
                      "barrier_residuals.csv", "residual-heatmap");
    Manifest man;
    man.out_dir = out_dir;
    man.plan = {{"cmd", "barrier-verify"}, {"measure", parse_spec(bv_measure)},
                {"alpha", bv_alpha},       {"beta", bv_beta},
                {"s", bv_s}};
    man.results = {{"lambda0", cal.lambda0},
                   {"min_residual", cal.min_residual_at_lambda0},
                   {"worst_t", cal.worst_t},
                   {"worst_x", cal.worst_x},
                   {"lattice_points", cal.lattice_points}};
    man.write();
    std::printf("Lambda0 = %.6f (min residual %.3e at Lambda0; %zu lattice points)\n",
                cal.lambda0, cal.min_residual_at_lambda0, cal.lattice_points);
    if (cal.min_residual_at_lambda0 < -1e-6) ++failures;
  });

  // ---- fk-check ----
  auto* fk = app.add_subcommand("fk-check", "Feynman-Kac lambda-derivative vs solver");
  double fk_lambda = 1.0, fk_t = 0.5, fk_x = 0.0, fk_alpha = 1.5, fk_beta = 0.5;
  long fk_paths = 100000;
  std::string fk_phi = R"({"kind":"indicator","lo":-1,"hi":1})";
  fk->add_option("--lambda", fk_lambda);
  fk->add_option("--phi", fk_phi);
  fk->add_option("--t", fk_t);
  fk->add_option("--x", fk_x);
  fk->add_option("--paths", fk_paths);
  fk->add_option("--alpha", fk_alpha);
  fk->add_option("--beta", fk_beta);
  fk->callback([&] {
    json cfgj = load_config(config_path);
    SolverConfig cfg = solver_from_json(cfgj);
    StableIndex idx(fk_alpha, fk_beta, 1);
    KernelTable kt = KernelTable::get(fk_alpha, 1, kernel_cache);
    GridFunction phi = phi_from_json(parse_spec(fk_phi), cfg.grid);
    GridFunction lam_phi = phi;
    for (auto& v : lam_phi.v) v *= fk_lambda;
    Field F = solve(kt, idx, lam_phi, fk_t, cfg, "lambda*phi");
    FkConfig fcfg;
    fcfg.paths = fk_paths;
    fcfg.seed = seed;
    auto est = fk_lambda_derivative(kt, idx, F, phi, fk_lambda, fk_t, &fk_x, fcfg);
    // solver-side centered finite difference in lambda
    const double dl = 0.05;
    GridFunction up = phi, dn = phi;
    for (auto& v : up.v) v *= fk_lambda * (1 + dl);
    for (auto& v : dn.v) v *= fk_lambda * (1 - dl);
    Field Fu = solve(kt, idx, up, fk_t, cfg, "phi+");
    Field Fd = solve(kt, idx, dn, fk_t, cfg, "phi-");
    const double fd =
        (Fu.at1(fk_t, fk_x) - Fd.at1(fk_t, fk_x)) / (2 * dl * fk_lambda);
    const double tol = 3 * est.se + 0.02;
    const bool pass = std::abs(est.estimate - fd) <= tol;
    json out = {{"estimate", est.estimate}, {"se", est.se},
                {"solver_value", fd},       {"tolerance", tol},
                {"verdict", pass ? "pass" : "fail"}};
    std::filesystem::create_directories(out_dir);
    std::ofstream(std::filesystem::path(out_dir) / "fk_check.json") << out.dump(2) << "\n";
    std::printf("%s\n", out.dump(2).c_str());
    if (!pass) ++failures;
  });

  // ---- simulate ----
  auto* sim = app.add_subcommand("simulate", "branching particle replicas, per-replica CSV");
  std::string sim_x0 = R"({"kind":"delta","x":0,"mass":1})";
  double sim_t = 1.0, sim_alpha = 1.5, sim_beta = 1.0;
  int sim_n = 10000;
  long sim_reps = 200;
  sim->add_option("--x0", sim_x0);
  sim->add_option("--t", sim_t);
  sim->add_option("--n", sim_n);
  sim->add_option("--replicas", sim_reps);
  sim->add_option("--alpha", sim_alpha);
  sim->add_option("--beta", sim_beta);
  sim->callback([&] {
    BranchConfig bc;
    bc.idx = StableIndex(sim_alpha, sim_beta, 1);
    bc.resolution = sim_n;
    bc.seed = seed;
    FiniteMeasure X0 = measure_from_json(parse_spec(sim_x0));
    std::filesystem::create_directories(out_dir);
    std::vector<std::vector<std::string>> rows(sim_reps);
    parallel_for(std::size_t(sim_reps), [&](std::size_t r) {
      ParticleCloud c = evolve(X0, sim_t, bc, r);
      double mn = 0, mx = 0;
      if (c.alive()) {
        mn = *std::min_element(c.pos.begin(), c.pos.end());
        mx = *std::max_element(c.pos.begin(), c.pos.end());
      }
      rows[r] = {std::to_string(r),
                 c.alive() ? "1" : "0",
                 CsvWriter::num(c.total_mass()),
                 CsvWriter::num(mn),
                 CsvWriter::num(mx),
                 CsvWriter::num(density_estimate1(c, 0.0, 0.1))};
    });
    CsvWriter csv(std::filesystem::path(out_dir) / "replicas.csv",
                  {"replica", "alive", "mass", "min_x", "max_x", "density_at_0_eps_0.1"});
    for (auto& r : rows) csv.row(r);
    std::printf("simulated %ld replicas -> %s/replicas.csv\n", sim_reps, out_dir.c_str());
  });

  // ---- duality ----
  auto* du = app.add_subcommand("duality", "Laplace duality MC vs solver");
  std::string du_phi = R"({"kind":"indicator","lo":-1,"hi":1})";
  std::string du_x0 = R"({"kind":"delta","x":0,"mass":1})";
  double du_t = 0.5, du_alpha = 1.5, du_beta = 1.0;
  int du_n = 10000;
  long du_reps = 2000;
  du->add_option("--phi", du_phi);
  du->add_option("--x0", du_x0);
  du->add_option("--t", du_t);
  du->add_option("--n", du_n);
  du->add_option("--replicas", du_reps);
  du->add_option("--alpha", du_alpha);
  du->add_option("--beta", du_beta);
  du->callback([&] {
    json cfgj = load_config(config_path);
    SolverConfig cfg = solver_from_json(cfgj);
    StableIndex idx(du_alpha, du_beta, 1);
    KernelTable kt = KernelTable::get(du_alpha, 1, kernel_cache);
    GridFunction phi = phi_from_json(parse_spec(du_phi), cfg.grid);
    FiniteMeasure X0 = measure_from_json(parse_spec(du_x0));
    Field F = solve(kt, idx, phi, du_t, cfg, "phi");
    // X_0(u^phi_t)
    std::vector<double> apts, awts;
    X0.atomize(4096, apts, awts);
    double x0u = 0.0;
    for (std::size_t i = 0; i < awts.size(); ++i)
      x0u += awts[i] * F.at(du_t, &apts[i * X0.d]);
    BranchConfig bc;
    bc.idx = idx;
    bc.resolution = du_n;
    bc.seed = seed;
    auto R = duality_check(X0, du_t, bc, du_reps, std::exp(-x0u),
                           [&](const ParticleCloud& c) { return cloud_pairing(c, phi); });
    const double tol = 3 * R.mc_se + 0.02;
    const bool pass = std::abs(R.mc_mean - R.solver_value) <= tol;
    json out = {{"mc_mean", R.mc_mean},
                {"mc_se", R.mc_se},
                {"solver_value", R.solver_value},
                {"z_score", R.z_score},
                {"extinct_fraction", R.extinct_fraction},
                {"replicas", R.replicas},
                {"verdict", pass ? "pass" : "fail"}};
    std::filesystem::create_directories(out_dir);
    std::ofstream(std::filesystem::path(out_dir) / "duality.json") << out.dump(2) << "\n";
    std::printf("%s\n", out.dump(2).c_str());
    if (!pass) ++failures;
  });

  // ---- trace-demo ----
  auto* td = app.add_subcommand("trace-demo", "initial-trace clauses (i)-(iii)");
  std::string td_measure = R"({"kind":"cantor","ratio":0.3333333333333333,"depth":24,"mass":1})";
  double td_alpha = 1.9, td_beta = 1.0, td_s = 0.6309297535714574;
  td->add_option("--measure", td_measure);
  td->add_option("--alpha", td_alpha);
  td->add_option("--beta", td_beta);
  td->add_option("--s", td_s);
  td->callback([&] {
    StableIndex idx(td_alpha, td_beta, 1);
    KernelTable kt = KernelTable::get(td_alpha, 1, kernel_cache);
    FiniteMeasure mu = measure_from_json(parse_spec(td_measure));
    TraceDemoOptions opt;
    opt.solver.grid = Grid(1, 8.0, 4096);
    opt.solver.dt = 2e-3;
    auto rep = run_trace_demo(kt, idx, mu, td_s, opt);
    json out = {{"aborted", rep.aborted},
                {"note", rep.note},
                {"growth", rep.growth},
                {"bump_ratio", rep.bump_ratio},
                {"bump_ratio_normalized", rep.bump_ratio_normalized},
                {"c_measured", rep.c_measured},
                {"floor_margin", rep.floor_margin},
                {"clause_i", rep.clause_i},
                {"clause_ii", rep.clause_ii},
                {"clause_iii", rep.clause_iii}};
    std::filesystem::create_directories(out_dir);
    std::ofstream(std::filesystem::path(out_dir) / "trace_demo.json") << out.dump(2) << "\n";
    std::printf("%s\n", out.dump(2).c_str());
    if (rep.aborted || !rep.clause_i || !rep.clause_ii || !rep.clause_iii) ++failures;
  });

  CLI11_PARSE(app, argc, argv);
  return failures == 0 ? 0 : 1;
}
