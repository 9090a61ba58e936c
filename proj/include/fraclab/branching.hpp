#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "measures.hpp"
#include "rng.hpp"
#include "stable_paths.hpp"
#include "util.hpp"

namespace fraclab {

// ---------------------------------------------------------------------------
// particle cloud and branching configuration
// ---------------------------------------------------------------------------

/// Alive particles of a branching approximation at one time; every particle
/// carries mass 1/N.
struct ParticleCloud {
  int d = 1;
  double mass_per_particle = 1.0;
  double time = 0.0;
  std::uint64_t replica_id = 0;
  std::vector<double> pos;  // d-interleaved

  std::size_t count() const { return pos.size() / std::size_t(d); }
  double total_mass() const { return double(count()) * mass_per_particle; }
  bool alive() const { return !pos.empty(); }
};

/// Particle scheme: motion by exact isotropic alpha-stable increments; critical
/// branching with mechanism in the (1+beta)-stable domain of attraction,
///   f(s) = s + (1-s)^{1+beta}/(1+beta),  branching rate (1+beta) N^beta,
/// which reproduces u' = -u^{1+beta} in the scaling limit.  For beta = 1 this
/// is binary 0/2 branching at rate 2N (Feller limit), simulated by the exact
/// per-window descendant law; for beta < 1 the exponential branch times are
/// simulated exactly (event-driven), so there is no time-discretization bias.
struct BranchConfig {
  StableIndex idx;
  int resolution = 10000;        // N: particle mass 1/N
  int motion_windows = 128;      // beta = 1 skeleton: dt = t / windows
  std::uint64_t seed = 1;
  std::size_t population_cap = 8000000;
  unsigned threads = 0;

  double branch_rate() const {
    return (1.0 + idx.beta) * std::pow(double(resolution), idx.beta);
  }
};

// ---------------------------------------------------------------------------
// sampling from measures
// ---------------------------------------------------------------------------

/// One point distributed as mu / mu(total).
inline void sample_point(const FiniteMeasure& mu, Rng& rng, double* out) {
  switch (mu.kind) {
    case MeasureKind::Atomic: {
      double u = rng.uniform() * mu.mass;
      std::size_t i = 0;
      while (i + 1 < mu.wts.size() && u > mu.wts[i]) {
        u -= mu.wts[i];
        ++i;
      }
      for (int k = 0; k < mu.d; ++k) out[k] = mu.pts[i * mu.d + k];
      return;
    }
    case MeasureKind::CantorUniform: {
      double x = 0.0, len = 1.0;
      for (int lvl = 0; lvl < 40; ++lvl) {
        const bool right = rng.next() & 1;
        if (right) x += len * (1.0 - mu.cantor_ratio);
        len *= mu.cantor_ratio;
      }
      out[0] = mu.cantor_offset + mu.cantor_scale * (x + 0.5 * len);
      return;
    }
    case MeasureKind::RestrictedLebesgue:
      for (int k = 0; k < mu.d; ++k)
        out[k] = rng.uniform(mu.box_lo[k], mu.box_hi[k]);
      return;
    case MeasureKind::BallUniform: {
      for (;;) {
        double q = 0.0;
        for (int k = 0; k < mu.d; ++k) {
          out[k] = rng.uniform(-1.0, 1.0);
          q += out[k] * out[k];
        }
        if (q <= 1.0) break;
      }
      for (int k = 0; k < mu.d; ++k)
        out[k] = mu.ball_center[k] + mu.ball_radius * out[k];
      return;
    }
    case MeasureKind::GridDensity: {
      const Grid& g = mu.density.grid;
      double u = rng.uniform() * mu.mass;
      std::size_t i = 0;
      const double cv = g.cell_volume();
      for (; i + 1 < mu.density.v.size(); ++i) {
        const double m = mu.density.v[i] * cv;
        if (u <= m) break;
        u -= m;
      }
      double c[2];
      g.coords(i, c);
      const double h = g.h();
      for (int k = 0; k < mu.d; ++k) out[k] = c[k] + rng.uniform(-h / 2, h / 2);
      return;
    }
  }
}

// ---------------------------------------------------------------------------
// evolution
// ---------------------------------------------------------------------------

namespace detail {

// exact alive-descendant count over a window of length dt for binary
// branching at rate 2N:  P(Z=0) = b/(1+b), P(Z=k | k>=1) geometric,
// b = N dt (classical critical binary law; composes exactly).
inline long binary_window_offspring(double b, Rng& rng) {
  const double p = b / (1.0 + b);
  const double u = rng.uniform();
  if (u < p) return 0;
  return 1 + long(std::floor(std::log(rng.uniform()) / std::log(p)));
}

// integer offspring law with generating function f(s) = s + (1-s)^{1+b}/(1+b)
// truncated to [0, kmax] with the mean renormalized to exactly 1
struct OffspringLaw {
  std::vector<double> cum;  // cumulative probabilities

  explicit OffspringLaw(double beta, int kmax = 1 << 16) {
    std::vector<double> p(kmax + 1, 0.0);
    const double c = 1.0 / (1.0 + beta);
    p[0] = c;
    p[1] = 1.0 - c * (1.0 + beta);  // = 0 at c = 1/(1+beta)
    // p_k = c * |binom(1+beta, k)| for k >= 2, computed by the ratio
    // p_{k+1}/p_k = (k - 1 - beta) / (k + 1)
    double pk = c * (1.0 + beta) * beta / 2.0;  // k = 2
    double mass = p[0] + p[1], mean = p[1];
    for (int k = 2; k <= kmax; ++k) {
      p[k] = pk;
      mass += pk;
      mean += k * pk;
      pk *= (double(k) - 1.0 - beta) / (double(k) + 1.0);
    }
    // reassign the truncated tail to kmax, then rebalance the mean by moving
    // mass from 0 to 2 (tail mass m_T sits at mean > kmax * m_T)
    const double m_tail = std::max(0.0, 1.0 - mass);
    p[kmax] += m_tail;
    mean += kmax * m_tail;
    double deficit = 1.0 - mean;  // mean must equal 1 exactly (criticality)
    const double shift = deficit / 2.0;
    p[0] -= shift;
    p[2] += shift;
    if (p[0] < 0.0) throw std::logic_error("OffspringLaw: renormalization failed");
    cum.resize(p.size());
    double acc = 0.0;
    for (std::size_t k = 0; k < p.size(); ++k) {
      acc += p[k];
      cum[k] = acc;
    }
    cum.back() = 1.0;
  }

  long sample(Rng& rng) const {
    const double u = rng.uniform();
    return long(std::lower_bound(cum.begin(), cum.end(), u) - cum.begin());
  }
};

inline const OffspringLaw& offspring_law(double beta) {
  static std::mutex mtx;
  static std::map<double, std::unique_ptr<OffspringLaw>> cache;
  std::lock_guard<std::mutex> lk(mtx);
  auto it = cache.find(beta);
  if (it == cache.end())
    it = cache.emplace(beta, std::make_unique<OffspringLaw>(beta)).first;
  return *it->second;
}

}  // namespace detail

/// Evolve one replica of the branching particle system to time t from
/// initial positions sampled i.i.d. from X0 / X0(1) (ceil(X0(1) N) particles).
inline ParticleCloud evolve(const FiniteMeasure& X0, double t,
                            const BranchConfig& cfg, std::uint64_t replica) {
  if (!(t > 0.0)) throw std::domain_error("evolve: t must be positive");
  const StableIndex& idx = cfg.idx;
  const int d = idx.d;
  Rng rng = Rng::for_replica(cfg.seed, replica);

  ParticleCloud cloud;
  cloud.d = d;
  cloud.mass_per_particle = 1.0 / cfg.resolution;
  cloud.time = t;
  cloud.replica_id = replica;

  const long n0 = long(std::ceil(X0.mass * cfg.resolution));
  std::vector<double> cur;
  cur.reserve(std::size_t(n0) * d);
  for (long i = 0; i < n0; ++i) {
    double x[2];
    sample_point(X0, rng, x);
    for (int k = 0; k < d; ++k) cur.push_back(x[k]);
  }

  if (idx.beta == 1.0) {
    // windowed Feller skeleton; the total-mass law at window boundaries is
    // exact, spatial genealogy below the window scale is the stated
    // discretization bias
    const double dt = t / cfg.motion_windows;
    const double b = double(cfg.resolution) * dt;
    std::vector<double> next;
    for (int w = 0; w < cfg.motion_windows && !cur.empty(); ++w) {
      next.clear();
      const std::size_t n = cur.size() / d;
      for (std::size_t i = 0; i < n; ++i) {
        const long z = detail::binary_window_offspring(b, rng);
        for (long c = 0; c < z; ++c) {
          double inc[2];
          stable_increment(idx.alpha, d, dt, rng, inc);
          for (int k = 0; k < d; ++k) next.push_back(cur[i * d + k] + inc[k]);
        }
        if (next.size() / d > cfg.population_cap)
          throw std::runtime_error("evolve: population cap exceeded (resource)");
      }
      cur.swap(next);
    }
    cloud.pos.swap(cur);
    return cloud;
  }

  // beta < 1: exact event-driven branching (rate (1+beta) N^beta per particle)
  const auto& law = detail::offspring_law(idx.beta);
  const double rate = cfg.branch_rate();
  std::vector<double> out;
  struct Item {
    double x[2];
    double remaining;
  };
  std::vector<Item> stack;
  for (long i = 0; i < n0; ++i) {
    Item root;
    for (int k = 0; k < d; ++k) root.x[k] = cur[std::size_t(i) * d + k];
    root.remaining = t;
    stack.push_back(root);
    while (!stack.empty()) {
      Item it = stack.back();
      stack.pop_back();
      for (;;) {
        const double tb = rng.exponential() / rate;
        if (tb >= it.remaining) {
          double inc[2];
          stable_increment(idx.alpha, d, it.remaining, rng, inc);
          for (int k = 0; k < d; ++k) out.push_back(it.x[k] + inc[k]);
          break;
        }
        double inc[2];
        stable_increment(idx.alpha, d, tb, rng, inc);
        for (int k = 0; k < d; ++k) it.x[k] += inc[k];
        it.remaining -= tb;
        const long kids = law.sample(rng);
        if (kids == 0) break;
        for (long c = 1; c < kids; ++c) stack.push_back(it);
        if (out.size() / d + stack.size() > cfg.population_cap)
          throw std::runtime_error("evolve: population cap exceeded (resource)");
      }
    }
  }
  cloud.pos.swap(out);
  return cloud;
}

// ---------------------------------------------------------------------------
// densities and pairings
// ---------------------------------------------------------------------------

/// X^eps_t(x) = X_t(B(x,eps)) / |B(x,eps)|.
inline double density_estimate(const ParticleCloud& cloud, const double* x,
                               double eps) {
  if (!(eps > 0.0)) throw std::domain_error("density_estimate: eps > 0 required");
  const int d = cloud.d;
  const double e2 = eps * eps;
  std::size_t hits = 0;
  const std::size_t n = cloud.count();
  for (std::size_t i = 0; i < n; ++i) {
    double q = 0.0;
    for (int k = 0; k < d; ++k) {
      const double dd = cloud.pos[i * d + k] - x[k];
      q += dd * dd;
    }
    hits += (q <= e2);
  }
  const double vol = (d == 1) ? 2.0 * eps : pi * eps * eps;
  return double(hits) * cloud.mass_per_particle / vol;
}

inline double density_estimate1(const ParticleCloud& cloud, double x, double eps) {
  return density_estimate(cloud, &x, eps);
}

/// mu(X^eps_t) = int X^eps_t dmu = sum_p m_p mu(B(p, eps)) / |B(eps)|
/// (exact exchange of the two integrals; ball masses are analytic).
inline double measure_pairing(const ParticleCloud& cloud, const FiniteMeasure& mu,
                              double eps) {
  if (!(eps > 0.0)) throw std::domain_error("measure_pairing: eps > 0 required");
  const int d = cloud.d;
  const double vol = (d == 1) ? 2.0 * eps : pi * eps * eps;
  double acc = 0.0;
  const std::size_t n = cloud.count();
  for (std::size_t i = 0; i < n; ++i)
    acc += mu.ball_mass(&cloud.pos[i * d], eps);
  return acc * cloud.mass_per_particle / vol;
}

/// X_t(phi) for a grid function phi (zero off the grid box).
inline double cloud_pairing(const ParticleCloud& cloud, const GridFunction& phi) {
  double acc = 0.0;
  const std::size_t n = cloud.count();
  for (std::size_t i = 0; i < n; ++i) {
    const double* p = &cloud.pos[i * std::size_t(cloud.d)];
    if (phi.inside(p)) acc += phi(p);
  }
  return acc * cloud.mass_per_particle;
}

// ---------------------------------------------------------------------------
// duality, clusters, charging
// ---------------------------------------------------------------------------

struct DualityResult {
  double mc_mean = 0.0;   // E exp(-X_t(phi)) over replicas
  double mc_se = 0.0;
  double solver_value = 0.0;  // exp(-X_0(u^phi_t))
  double z_score = 0.0;
  long replicas = 0;
  double extinct_fraction = 0.0;
};

/// Laplace-functional duality against a precomputed dual value
/// exp(-X_0(u_t)).  `pairing` maps a terminal cloud to X_t(phi) (or the
/// eps-smoothed mu(X^eps_t)).
template <class PairingFn>
DualityResult duality_check(const FiniteMeasure& X0, double t,
                            const BranchConfig& cfg, long replicas,
                            double solver_value, PairingFn&& pairing) {
  std::vector<double> vals(replicas);
  std::vector<std::uint8_t> extinct(replicas);
  parallel_for(std::size_t(replicas), [&](std::size_t r) {
    ParticleCloud c = evolve(X0, t, cfg, r);
    extinct[r] = !c.alive();
    vals[r] = std::exp(-pairing(c));
  }, cfg.threads);
  DualityResult R;
  R.replicas = replicas;
  R.solver_value = solver_value;
  double sum = 0.0;
  long next = 0;
  for (long r = 0; r < replicas; ++r) {
    sum += vals[r];
    next += extinct[r];
  }
  R.mc_mean = sum / double(replicas);
  double ss = 0.0;
  for (long r = 0; r < replicas; ++r)
    ss += (vals[r] - R.mc_mean) * (vals[r] - R.mc_mean);
  R.mc_se = std::sqrt(ss / double(replicas) / std::max<long>(replicas - 1, 1));
  R.extinct_fraction = double(next) / double(replicas);
  R.z_score = (R.mc_mean - solver_value) / std::max(R.mc_se, 1e-300);
  return R;
}

struct ClusterSample {
  std::vector<ParticleCloud> clusters;  // each conditioned on survival
  long poisson_count = 0;
  double acceptance_rate = 1.0;
  bool efficiency_warning = false;
};

/// Poisson cluster decomposition: N ~ Poisson(X_0(1) (beta t)^{-1/beta})
/// clusters, each an evolve run from a single particle conditioned on
/// survival to t, rooted at a position drawn from X_0/X_0(1).
inline ClusterSample cluster_sample(const FiniteMeasure& X0, double t,
                                    const BranchConfig& cfg, std::uint64_t replica,
                                    double acceptance_floor = 1e-6) {
  ClusterSample out;
  Rng rng = Rng::for_replica(cfg.seed ^ 0xc1a57e5ull, replica);
  const double mean = X0.mass * std::pow(cfg.idx.beta * t, -1.0 / cfg.idx.beta);
  out.poisson_count = rng.poisson(mean);
  long attempts = 0, accepted = 0;
  for (long c = 0; c < out.poisson_count; ++c) {
    double root[2];
    sample_point(X0, rng, root);
    FiniteMeasure seed_atom =
        (cfg.idx.d == 1)
            ? FiniteMeasure::atoms(1, {root[0]}, {1.0 / cfg.resolution})
            : FiniteMeasure::atoms(2, {root[0], root[1]}, {1.0 / cfg.resolution});
    for (;;) {
      ++attempts;
      // derived per-attempt stream keeps the rejection deterministic
      ParticleCloud cand = evolve(seed_atom, t, cfg,
                                  (replica + 1) * 1000000007ull + attempts);
      if (cand.alive()) {
        ++accepted;
        out.clusters.push_back(std::move(cand));
        break;
      }
      if (attempts > 200 && double(accepted + 1) / attempts < acceptance_floor) {
        out.efficiency_warning = true;
        return out;
      }
    }
  }
  out.acceptance_rate = attempts ? double(accepted) / attempts : 1.0;
  return out;
}

struct WilsonInterval {
  double frequency = 0.0, lo = 0.0, hi = 1.0;
  long successes = 0, trials = 0;
};

inline WilsonInterval wilson(long successes, long trials, double z = 1.96) {
  WilsonInterval w;
  w.successes = successes;
  w.trials = trials;
  if (trials == 0) return w;
  const double p = double(successes) / trials;
  const double z2n = z * z / trials;
  const double center = (p + z2n / 2) / (1 + z2n);
  const double half =
      z * std::sqrt(p * (1 - p) / trials + z2n / (4.0 * trials)) / (1 + z2n);
  w.frequency = p;
  w.lo = std::max(0.0, center - half);
  w.hi = std::min(1.0, center + half);
  return w;
}

struct ChargingCell {
  double eps = 0.0, theta = 0.0;
  WilsonInterval conditional;  // P(mu(X^eps_t) > theta | survival)
};

struct ChargingTable {
  std::vector<ChargingCell> cells;
  long surviving = 0, replicas = 0;
  bool low_survivors = false;
};

/// Conditional charging frequencies across an (eps, theta) ladder.
inline ChargingTable charging_probability(const FiniteMeasure& mu,
                                          const FiniteMeasure& X0, double t,
                                          const BranchConfig& cfg, long replicas,
                                          const std::vector<double>& eps_ladder,
                                          const std::vector<double>& theta_ladder) {
  ChargingTable T;
  T.replicas = replicas;
  std::vector<std::vector<double>> pairings(replicas);
  std::vector<std::uint8_t> alive(replicas);
  parallel_for(std::size_t(replicas), [&](std::size_t r) {
    ParticleCloud c = evolve(X0, t, cfg, r);
    alive[r] = c.alive();
    if (c.alive()) {
      pairings[r].reserve(eps_ladder.size());
      for (double e : eps_ladder) pairings[r].push_back(measure_pairing(c, mu, e));
    }
  }, cfg.threads);
  for (long r = 0; r < replicas; ++r) T.surviving += alive[r];
  T.low_survivors = T.surviving < 50;
  for (std::size_t ie = 0; ie < eps_ladder.size(); ++ie)
    for (double th : theta_ladder) {
      ChargingCell cell;
      cell.eps = eps_ladder[ie];
      cell.theta = th;
      long hits = 0;
      for (long r = 0; r < replicas; ++r)
        if (alive[r] && pairings[r][ie] > th) ++hits;
      cell.conditional = wilson(hits, T.surviving);
      T.cells.push_back(cell);
    }
  return T;
}

}  // namespace fraclab
