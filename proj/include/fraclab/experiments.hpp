#pragma once

#include <ctime>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "branching.hpp"
#include "feynman_kac.hpp"
#include "frostman.hpp"
#include "solver.hpp"

namespace fraclab {

using nlohmann::json;

// ---------------------------------------------------------------------------
// measure specs in config files
// ---------------------------------------------------------------------------

/// Parse a measure from its JSON spec, e.g.
///   {"kind":"cantor","ratio":0.3333,"depth":24,"mass":1.0}
///   {"kind":"delta","x":0.0,"mass":1.0}
///   {"kind":"box","lo":-1,"hi":1,"mass":2.0}
///   {"kind":"ball","center":[0,0],"radius":1,"mass":1.0,"d":2}
///   {"kind":"atoms","points":[[0.0,1.0],[2.0,0.5]]}  (rows are x,w)
///   {"kind":"atoms","csv":"atoms.csv"}               (x,w rows)
inline FiniteMeasure measure_from_json(const json& j) {
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "cantor") {
    return FiniteMeasure::cantor(j.value("ratio", 1.0 / 3.0), j.value("depth", 24),
                                 j.value("mass", 1.0), j.value("offset", 0.0),
                                 j.value("scale", 1.0));
  }
  if (kind == "delta") {
    if (j.contains("y"))
      return FiniteMeasure::delta2(j.value("x", 0.0), j.value("y", 0.0),
                                   j.value("mass", 1.0));
    return FiniteMeasure::delta(j.value("x", 0.0), j.value("mass", 1.0));
  }
  if (kind == "box") {
    if (j.at("lo").is_array()) {
      std::array<double, 2> lo{j["lo"][0].get<double>(), j["lo"][1].get<double>()};
      std::array<double, 2> hi{j["hi"][0].get<double>(), j["hi"][1].get<double>()};
      return FiniteMeasure::box2(lo, hi, j.value("mass", 1.0));
    }
    return FiniteMeasure::box1(j.at("lo").get<double>(), j.at("hi").get<double>(),
                               j.value("mass", 1.0));
  }
  if (kind == "ball") {
    std::array<double, 2> c{0, 0};
    int d = j.value("d", 1);
    if (j.contains("center")) {
      if (j["center"].is_array()) {
        c[0] = j["center"][0].get<double>();
        if (j["center"].size() > 1) {
          c[1] = j["center"][1].get<double>();
          d = 2;
        }
      } else {
        c[0] = j["center"].get<double>();
      }
    }
    return FiniteMeasure::ball(d, c, j.at("radius").get<double>(), j.value("mass", 1.0));
  }
  if (kind == "atoms") {
    std::vector<double> pts, wts;
    if (j.contains("csv")) {
      std::ifstream in(j["csv"].get<std::string>());
      if (!in) throw std::runtime_error("atoms: cannot open CSV " +
                                        j["csv"].get<std::string>());
      std::string line;
      while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#' || line[0] == 'x') continue;
        std::replace(line.begin(), line.end(), ',', ' ');
        std::istringstream ls(line);
        double x, w;
        if (ls >> x >> w) {
          pts.push_back(x);
          wts.push_back(w);
        }
      }
    } else {
      for (const auto& row : j.at("points")) {
        pts.push_back(row[0].get<double>());
        wts.push_back(row[1].get<double>());
      }
    }
    return FiniteMeasure::atoms(1, std::move(pts), std::move(wts));
  }
  throw std::domain_error("measure_from_json: unknown kind '" + kind + "'");
}

inline json measure_to_json(const FiniteMeasure& mu) {
  json j;
  switch (mu.kind) {
    case MeasureKind::CantorUniform:
      j = {{"kind", "cantor"}, {"ratio", mu.cantor_ratio}, {"depth", mu.cantor_depth},
           {"mass", mu.mass},  {"offset", mu.cantor_offset}, {"scale", mu.cantor_scale}};
      break;
    case MeasureKind::Atomic: {
      json pts = json::array();
      for (std::size_t i = 0; i < mu.wts.size(); ++i) {
        json row = json::array();
        for (int k = 0; k < mu.d; ++k) row.push_back(mu.pts[i * mu.d + k]);
        row.push_back(mu.wts[i]);
        pts.push_back(row);
      }
      j = {{"kind", "atoms"}, {"points", pts}};
      break;
    }
    case MeasureKind::RestrictedLebesgue:
      if (mu.d == 1)
        j = {{"kind", "box"}, {"lo", mu.box_lo[0]}, {"hi", mu.box_hi[0]}, {"mass", mu.mass}};
      else
        j = {{"kind", "box"}, {"lo", {mu.box_lo[0], mu.box_lo[1]}},
             {"hi", {mu.box_hi[0], mu.box_hi[1]}}, {"mass", mu.mass}};
      break;
    case MeasureKind::BallUniform:
      j = {{"kind", "ball"}, {"center", {mu.ball_center[0], mu.ball_center[1]}},
           {"radius", mu.ball_radius}, {"mass", mu.mass}, {"d", mu.d}};
      break;
    case MeasureKind::GridDensity:
      j = {{"kind", "grid-density"}, {"mass", mu.mass}};
      break;
  }
  return j;
}

// ---------------------------------------------------------------------------
// deterministic CSV + manifest output
// ---------------------------------------------------------------------------

class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path, std::vector<std::string> header)
      : out_(path) {
    if (!out_) throw std::runtime_error("cannot open " + path.string());
    for (std::size_t i = 0; i < header.size(); ++i)
      out_ << (i ? "," : "") << header[i];
    out_ << "\n";
  }
  void row(const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i)
      out_ << (i ? "," : "") << cells[i];
    out_ << "\n";
  }
  static std::string num(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.12g", v);
    return buf;
  }

 private:
  std::ofstream out_;
};

/// Run manifest: everything that ran, keyed by the plan hash; the timestamp
/// lives only here so CSV outputs stay byte-identical across reruns.
struct Manifest {
  json plan;
  json defaults;
  json results = json::object();
  std::string out_dir;

  std::string plan_hash() const { return hash_hex(fnv1a(plan.dump())); }

  void write(bool with_timestamp = true) const {
    json m = {{"plan", plan},
              {"defaults", defaults},
              {"plan_hash", plan_hash()},
              {"results", results}};
    if (with_timestamp) {
      m["timestamp"] = std::time(nullptr);
    }
    std::filesystem::create_directories(out_dir);
    std::ofstream out(std::filesystem::path(out_dir) / "manifest.json");
    out << m.dump(2) << "\n";
  }
};

// ---------------------------------------------------------------------------
// dichotomy sweep
// ---------------------------------------------------------------------------

struct DichotomyCell {
  double alpha = 0, beta = 0, s_nominal = 0;
  FiniteMeasure mu;
  std::string label;
};

struct DichotomyRow {
  DichotomyCell cell;
  double beta_star = 0, d_sat = 0;
  DichotomyVerdict verdict;
  double sim_trend = -1.0;  // conditional charging frequency at the finest eps
  bool agree = false;
  std::string error;
};

struct DichotomySweepOptions {
  SolverConfig solver;
  double t = 1.0;
  bool run_simulator = false;
  int sim_resolution = 2000;
  long sim_replicas = 200;
  std::uint64_t seed = 1;
  std::string kernel_cache;
};

inline std::vector<DichotomyRow> run_dichotomy_sweep(
    const std::vector<DichotomyCell>& cells, const DichotomySweepOptions& opt) {
  std::vector<DichotomyRow> rows;
  std::map<double, KernelTable> kts;
  for (const auto& cell : cells) {
    DichotomyRow row;
    row.cell = cell;
    try {
      StableIndex idx(cell.alpha, cell.beta, 1);
      row.beta_star = idx.beta_star(cell.s_nominal);
      row.d_sat = idx.d_sat();
      auto it = kts.find(cell.alpha);
      if (it == kts.end())
        it = kts.emplace(cell.alpha,
                         KernelTable::get(cell.alpha, 1, opt.kernel_cache)).first;
      row.verdict = classify_dichotomy(it->second, idx, cell.mu, cell.s_nominal,
                                       opt.t, opt.solver);
      if (opt.run_simulator) {
        BranchConfig bc;
        bc.idx = idx;
        bc.resolution = opt.sim_resolution;
        bc.seed = opt.seed;
        auto table = charging_probability(cell.mu, FiniteMeasure::delta(0.0, 1.0),
                                          opt.t, bc, opt.sim_replicas,
                                          {0.2, 0.1, 0.05}, {0.0});
        row.sim_trend = table.cells.empty() ? -1.0
                                            : table.cells.back().conditional.frequency;
      }
      const bool in_band = std::abs(cell.beta - row.beta_star) <= 0.03;
      const auto want = cell.beta < row.beta_star ? DichotomyVerdict::Kind::Flat
                                                  : DichotomyVerdict::Kind::NonFlat;
      row.agree = (row.verdict.verdict == want) ||
                  (in_band && row.verdict.verdict == DichotomyVerdict::Kind::Inconclusive);
    } catch (const std::exception& e) {
      row.error = e.what();  // per-cell failures recorded, sweep continues
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

inline void write_dichotomy_csv(const std::vector<DichotomyRow>& rows,
                                const std::filesystem::path& path) {
  CsvWriter csv(path, {"label", "alpha", "beta", "s", "beta_star", "d_sat", "verdict",
                       "flatness_q", "trend_exponent", "tail_slope", "gap_last",
                       "far_gap_last", "sim_charge_freq", "agree", "error"});
  for (const auto& r : rows) {
    csv.row({r.cell.label, CsvWriter::num(r.cell.alpha), CsvWriter::num(r.cell.beta),
             CsvWriter::num(r.cell.s_nominal), CsvWriter::num(r.beta_star),
             CsvWriter::num(r.d_sat), r.error.empty() ? r.verdict.name() : "error",
             CsvWriter::num(r.verdict.flatness_q),
             CsvWriter::num(r.verdict.trend_exponent),
             CsvWriter::num(r.verdict.tail_slope),
             CsvWriter::num(r.verdict.gap_trace.empty() ? -1 : r.verdict.gap_trace.back()),
             CsvWriter::num(r.verdict.far_gap_trace.empty() ? -1
                                                            : r.verdict.far_gap_trace.back()),
             CsvWriter::num(r.sim_trend), r.agree ? "1" : "0", r.error});
  }
}

// ---------------------------------------------------------------------------
// initial-trace demo
// ---------------------------------------------------------------------------

struct TraceDemoOptions {
  SolverConfig solver;          // grid sized for the smallest time
  std::vector<double> t_ladder = {0.1, 0.0316, 0.01, 0.00316, 0.001};
  double rho = 0.1;             // ball radius for clause (i)
  double bump_center = -0.5;    // off-support bump for clause (ii)
  double bump_width = 0.25;
  double floor_fraction = 1.0;  // multiple of the measured c in clause (iii)
  bool use_infinite_start = true;
};

struct TraceDemoReport {
  std::vector<double> ts;
  std::vector<double> singular_integral;  // clause (i): int_{B(z,rho)} u_t
  std::vector<double> bump_integral;      // clause (ii): int xi u_t
  double growth = 0.0;                    // I(t_min) / I(t_max)
  double bump_ratio = 0.0;                // J(t_min) / J(t_max), raw
  double bump_ratio_normalized = 0.0;     // (J/I)(t_min) / (J/I)(t_max)
  double c_measured = 0.0;                // measured heat-kernel floor constant
  double floor_margin = 0.0;              // min of u - c t^{-1/b} p_1(...) over probes
  bool clause_i = false, clause_ii = false, clause_iii = false;
  bool aborted = false;
  std::string note;
};

/// Initial-trace demonstration in the non-flat regime: local integrals blow
/// up on supp(mu) (singular set), vanish off it (trace measure 0), and the
/// pointwise kernel floor u_t(x) >= c t^{-1/beta} p_1(t^{-1/alpha}(x-z))
/// holds for the measured c.
inline TraceDemoReport run_trace_demo(const KernelTable& kt, const StableIndex& idx,
                                      const FiniteMeasure& mu, double s_hint,
                                      const TraceDemoOptions& opt) {
  TraceDemoReport rep;
  rep.ts = opt.t_ladder;

  // sanity: this demo needs the non-flat regime
  double qres;
  const double q = barrier_flatness_exponent(idx, s_hint, &qres);
  if (q > -0.05) {
    rep.aborted = true;
    rep.note = "parameters not in the non-flat regime (flatness q = " +
               std::to_string(q) + "); demo aborted";
    return rep;
  }

  double lo, hi;
  mu.bounds(&lo, &hi);
  const double z = lo;  // support point for clause (i)

  const Grid& g = opt.solver.grid;
  for (double t : opt.t_ladder) {
    Field F = opt.use_infinite_start
                  ? solve_infinite(kt, idx, mu, t, opt.solver)
                  : solve(kt, idx, mu.scaled(opt.solver.lambda_ladder.back()), t,
                          opt.solver);
    double I = 0.0, J = 0.0;
    for (int j = 0; j < g.n; ++j) {
      const double x = g.axis(j);
      const double u = F.back()[j];
      if (std::abs(x - z) <= opt.rho) I += u * g.h();
      const double xi = std::max(0.0, 1.0 - std::abs(x - opt.bump_center) / opt.bump_width);
      J += xi * u * g.h();
    }
    rep.singular_integral.push_back(I);
    rep.bump_integral.push_back(J);
  }
  rep.growth = rep.singular_integral.back() / rep.singular_integral.front();
  rep.bump_ratio = rep.bump_integral.back() / rep.bump_integral.front();
  // clause (ii), trace-dichotomy form: the regular part must collapse
  // relative to the exploding singular part (the raw off-support decay is
  // exponent-limited at t^{|q|} and cannot reach 1% at desk scales)
  rep.bump_ratio_normalized = rep.bump_ratio / rep.growth;
  rep.clause_i = rep.growth >= 10.0;
  rep.clause_ii = rep.bump_ratio_normalized < 0.01;

  // clause (iii): measure the heat-kernel floor on the point-mass problem,
  // then verify it under the measure's solution
  {
    SolverConfig pc = opt.solver;
    pc.grid = Grid(1, 32.0, 4096);
    rep.c_measured = kernel_lower_bound_check(kt, idx, opt.solver.lambda_ladder.back(), pc);
    double margin = std::numeric_limits<double>::infinity();
    std::vector<double> zprobes = mu.support_net(0.25, 64);
    for (double t : opt.t_ladder) {
      Field F = opt.use_infinite_start
                    ? solve_infinite(kt, idx, mu, t, opt.solver)
                    : solve(kt, idx, mu.scaled(opt.solver.lambda_ladder.back()), t,
                            opt.solver);
      const double tb = std::pow(t, -1.0 / idx.beta);
      const double ts = std::pow(t, -1.0 / idx.alpha);
      for (double zp : zprobes)
        for (int j = 0; j < g.n; ++j) {
          const double x = g.axis(j);
          if (std::abs(x) > g.L - 1.0) continue;
          const double floor =
              opt.floor_fraction * rep.c_measured * tb * kt.p1(ts * std::abs(x - zp));
          margin = std::min(margin, F.back()[j] - floor);
        }
    }
    rep.floor_margin = margin;
    rep.clause_iii = margin >= -1e-9;
  }
  return rep;
}

// ---------------------------------------------------------------------------
// plot scripts
// ---------------------------------------------------------------------------

/// Plot scripts consume the CSVs; no rendering dependency in the artifact.
inline void write_plot_script(const std::filesystem::path& path,
                              const std::string& csv_name, const std::string& kind) {
  std::ofstream out(path);
  out << "#!/usr/bin/env python3\n"
      << "# plots " << csv_name << " (" << kind << ")\n"
      << "import csv, sys\n"
      << "import matplotlib\n"
      << "matplotlib.use('Agg')\n"
      << "import matplotlib.pyplot as plt\n\n"
      << "rows = list(csv.DictReader(open('" << csv_name << "')))\n";
  if (kind == "ladder") {
    out << "xs = [float(r['lambda']) for r in rows]\n"
        << "ys = [float(r['value']) for r in rows]\n"
        << "plt.loglog(xs, ys, 'o-')\n"
        << "plt.xlabel('lambda'); plt.ylabel('u')\n";
  } else if (kind == "tailslope") {
    out << "xs = [float(r['x']) for r in rows]\n"
        << "ys = [float(r['u']) for r in rows if float(r['u'])>0]\n"
        << "xs = xs[:len(ys)]\n"
        << "plt.loglog(xs, ys, '.')\n"
        << "plt.xlabel('|x|'); plt.ylabel('u')\n";
  } else if (kind == "residual-heatmap") {
    out << "import numpy as np\n"
        << "ts = sorted({float(r['t']) for r in rows})\n"
        << "xs = sorted({float(r['x']) for r in rows})\n"
        << "grid = np.full((len(ts), len(xs)), np.nan)\n"
        << "for r in rows:\n"
        << "    grid[ts.index(float(r['t'])), xs.index(float(r['x']))] = float(r['residual'])\n"
        << "plt.imshow(grid, aspect='auto', origin='lower')\n"
        << "plt.colorbar(label='residual')\n";
  } else {  // eps ladder
    out << "eps = [float(r['eps']) for r in rows]\n"
        << "fr = [float(r['frequency']) for r in rows]\n"
        << "plt.semilogx(eps, fr, 'o-')\n"
        << "plt.xlabel('eps'); plt.ylabel('conditional frequency')\n";
  }
  out << "plt.title('" << csv_name << "')\n"
      << "plt.savefig(sys.argv[1] if len(sys.argv)>1 else '" << csv_name
      << ".png', dpi=150)\n";
}

}  // namespace fraclab
