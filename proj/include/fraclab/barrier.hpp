#pragma once

#include <algorithm>
#include <map>
#include <memory>
#include <mutex>

#include "kernel_table.hpp"
#include "measures.hpp"
#include "stable_index.hpp"
#include "util.hpp"

namespace fraclab {

// ---------------------------------------------------------------------------
// the explicit barrier profile W(r) = log(e+r^2) / (1 + r^{d+alpha})
// ---------------------------------------------------------------------------

struct BarrierProfile {
  double d_plus_alpha;

  double W(double r) const {
    return std::log(std::exp(1.0) + r * r) / (1.0 + std::pow(r, d_plus_alpha));
  }

  double Wprime(double r) const {
    const double q = d_plus_alpha, e = std::exp(1.0);
    const double L = std::log(e + r * r), P = 1.0 + std::pow(r, q);
    const double Lp = 2.0 * r / (e + r * r);
    const double Pp = q * std::pow(r, q - 1.0);
    return Lp / P - L * Pp / (P * P);
  }

  double Wsecond(double r) const {
    const double q = d_plus_alpha, e = std::exp(1.0);
    const double L = std::log(e + r * r), P = 1.0 + std::pow(r, q);
    const double Lp = 2.0 * r / (e + r * r);
    const double Lpp = 2.0 / (e + r * r) - 4.0 * r * r / ((e + r * r) * (e + r * r));
    const double Pp = q * std::pow(r, q - 1.0);
    const double Ppp = q * (q - 1.0) * std::pow(r, q - 2.0);
    return Lpp / P - 2.0 * Lp * Pp / (P * P) - L * Ppp / (P * P) +
           2.0 * L * Pp * Pp / (P * P * P);
  }
};

// ---------------------------------------------------------------------------
// principal-value evaluation of the generator on radial profiles
// ---------------------------------------------------------------------------

namespace detail {

/// D_alpha f at x for radial f given as f(|y|), by the symmetrized
/// principal-value integral with an inner Taylor correction of radius eps.
/// d = 1: f_second is f''(x); d = 2: pass the full Laplacian of f at x.
template <class F>
double frac_laplacian_radial_pv(const F& fr, int d, double alpha, double x_abs,
                                double f_at_x, double f_lap_at_x, double eps) {
  const double a = frac_laplacian_constant(alpha, d);
  const double zmax = 1e7;
  double inner, outer = 0.0;
  if (d == 1) {
    inner = (alpha < 1.0 && x_abs < 2.0 * eps)
                ? 0.0  // integrand bounded; fold into the panels below
                : f_lap_at_x * std::pow(eps, 2.0 - alpha) / (2.0 - alpha);
    const double z0 = (alpha < 1.0 && x_abs < 2.0 * eps) ? 1e-9 : eps;
    auto integrand = [&](double z) {
      return (fr(std::abs(x_abs + z)) + fr(std::abs(x_abs - z)) - 2.0 * f_at_x) /
             std::pow(z, 1.0 + alpha);
    };
    // log panels, refined where x - z crosses the profile's core near the
    // origin (the integrand has an O(1)-width feature at z ~ x)
    std::vector<double> edges = log_edges(z0, zmax, 160);
    if (x_abs > 16.0) {
      const double wlo = x_abs - 12.0, whi = x_abs + 12.0;
      std::vector<double> refined;
      for (double e : edges)
        if (e < wlo || e > whi) refined.push_back(e);
      for (int k = 0; k <= 96; ++k) refined.push_back(wlo + (whi - wlo) * k / 96.0);
      std::sort(refined.begin(), refined.end());
      edges.swap(refined);
    }
    outer = gl16_panels(integrand, edges);
    outer += -2.0 * f_at_x * std::pow(zmax, -alpha) / alpha;  // far tail of -2f(x)
    return a * (inner + outer);
  }
  // d = 2: angular average on circles around x, then radial integral
  inner = 0.5 * pi * f_lap_at_x * std::pow(eps, 2.0 - alpha) / (2.0 - alpha);
  auto ring = [&](double r) {
    // rings passing near the origin see the O(1)-width core of the profile;
    // resolve it angularly when needed
    int na = 96;
    if (x_abs > 16.0 && std::abs(x_abs - r) < 12.0) na = 2048;
    double s = 0.0;
    for (int k = 0; k < na; ++k) {
      const double th = 2.0 * pi * (k + 0.5) / na;
      const double yx = x_abs + r * std::cos(th), yy = r * std::sin(th);
      s += fr(std::sqrt(yx * yx + yy * yy));
    }
    return s * (2.0 * pi / na);  // total over the circle of radius r
  };
  auto integrand = [&](double r) {
    return (ring(r) - 2.0 * pi * f_at_x) * std::pow(r, -1.0 - alpha);
  };
  std::vector<double> edges = log_edges(eps, zmax, 120);
  if (x_abs > 16.0) {
    const double wlo = x_abs - 12.0, whi = x_abs + 12.0;
    std::vector<double> refined;
    for (double e : edges)
      if (e < wlo || e > whi) refined.push_back(e);
    for (int k = 0; k <= 64; ++k) refined.push_back(wlo + (whi - wlo) * k / 64.0);
    std::sort(refined.begin(), refined.end());
    edges.swap(refined);
  }
  outer = gl16_panels(integrand, edges);
  outer += -2.0 * pi * f_at_x * std::pow(zmax, -alpha) / alpha;
  return a * (inner + outer);
}

}  // namespace detail

/// Radial table of (D_alpha V)(rho) for V(x) = W(|x|), with a
/// halved-epsilon error estimate at every node.
class FracLapVTable {
 public:
  FracLapVTable() = default;

  static FracLapVTable build(double alpha, int d) {
    FracLapVTable T;
    T.alpha_ = alpha;
    T.d_ = d;
    T.prof_ = BarrierProfile{double(d) + alpha};
    const int per_decade = 24;
    const double lo = 1e-3, hi = 1e4;
    const int n = int(std::round(std::log10(hi / lo))) * per_decade;
    T.rho_.resize(n + 2);
    T.val_.resize(n + 2);
    T.rho_[0] = 0.0;
    for (int i = 0; i <= n; ++i)
      T.rho_[i + 1] = lo * std::pow(10.0, double(i) / per_decade);
    T.err_ = 0.0;
    for (std::size_t i = 0; i < T.rho_.size(); ++i) {
      double e1;
      T.val_[i] = T.eval_pv(T.rho_[i], &e1);
      T.err_ = std::max(T.err_, e1);
    }
    std::vector<double> xs(T.rho_.size()), ys(T.val_.size());
    for (std::size_t i = 0; i < T.rho_.size(); ++i) {
      xs[i] = std::log(T.rho_[i] + 1e-3);  // shifted log abscissa covers rho=0
      ys[i] = T.val_[i];
    }
    T.interp_ = Pchip(xs, ys);
    return T;
  }

  /// Direct PV evaluation with error estimate (value at eps/2; error = |diff|).
  double eval_pv(double rho, double* err = nullptr) const {
    const double eps = std::max(1e-3, std::min(1.0, rho) / 4.0);
    const double lap = lap_V(rho);
    auto fr = [&](double r) { return prof_.W(r); };
    const double v1 = detail::frac_laplacian_radial_pv(fr, d_, alpha_, rho,
                                                       prof_.W(rho), lap, eps);
    const double v2 = detail::frac_laplacian_radial_pv(fr, d_, alpha_, rho,
                                                       prof_.W(rho), lap, eps / 2);
    if (err) *err = std::abs(v1 - v2);
    return v2;
  }

  double operator()(double rho) const {
    if (rho_.empty()) throw std::logic_error("FracLapVTable used before build");
    rho = std::abs(rho);
    if (rho >= rho_.back()) {
      // far field: D_alpha V(x) ~ a * (integral of V) / |x|^{d+alpha}
      return val_.back() * std::pow(rho_.back() / rho, double(d_) + alpha_);
    }
    return interp_(std::log(rho + 1e-3));
  }

  double alpha() const { return alpha_; }
  int dim() const { return d_; }
  double max_node_error() const { return err_; }

  /// Laplacian of V at radius rho (radial part; used by the inner correction).
  double lap_V(double rho) const {
    if (rho < 1e-7) {
      // W'(r)/r -> W''(0) as r -> 0 (q > 2; for q <= 2 the inner Taylor is
      // bypassed near zero anyway)
      return d_ * prof_.Wsecond(1e-7);
    }
    return prof_.Wsecond(rho) + (d_ - 1) * prof_.Wprime(rho) / rho;
  }

  /// process-wide cache keyed by (alpha, d)
  static const FracLapVTable& get(double alpha, int d) {
    static std::mutex mtx;
    static std::map<std::pair<double, int>, std::unique_ptr<FracLapVTable>> cache;
    std::lock_guard<std::mutex> lk(mtx);
    auto key = std::make_pair(alpha, d);
    auto it = cache.find(key);
    if (it == cache.end()) {
      auto ptr = std::make_unique<FracLapVTable>(build(alpha, d));
      it = cache.emplace(key, std::move(ptr)).first;
    }
    return *it->second;
  }

 private:
  double alpha_ = 0.0;
  int d_ = 0;
  BarrierProfile prof_{};
  std::vector<double> rho_, val_;
  Pchip interp_;
  double err_ = 0.0;
};

// ---------------------------------------------------------------------------
// the barrier family  w_t(x) = t^{-1/b}(1+t^{-s/a}) V(t^{-1/a} x),
//                     h_k(t,x) = k (w_t * mu)(x)
// ---------------------------------------------------------------------------

/// Barrier machinery for one (idx, s, mu) triple.  mu should be compactly
/// supported and (F2)-s certified by the caller (calibration is meaningful
/// in the regime beta*(alpha,s) < beta < alpha/d, but all evaluations are
/// defined for any admissible index).
class Barrier {
 public:
  Barrier(const StableIndex& idx, double s, FiniteMeasure mu, int atom_budget = 4096)
      : idx_(idx), s_(s), mu_(std::move(mu)), prof_{double(idx.d) + idx.alpha},
        lap_(FracLapVTable::get(idx.alpha, idx.d)) {
    if (!(s >= 0.0 && s < idx.alpha))
      throw std::domain_error("Barrier: s must lie in [0, alpha)");
    mu_.atomize(atom_budget, apts_, awts_);
  }

  const StableIndex& idx() const { return idx_; }
  double s() const { return s_; }
  const FiniteMeasure& measure() const { return mu_; }

  double W(double r) const { return prof_.W(r); }
  double V(const double* x) const { return prof_.W(norm(x)); }

  double w(double t, const double* x) const {
    check_t(t);
    const double z = std::pow(t, -1.0 / idx_.alpha) * norm(x);
    return std::pow(t, -1.0 / idx_.beta) * (1.0 + std::pow(t, -s_ / idx_.alpha)) *
           prof_.W(z);
  }

  /// closed-form time derivative of w_t (differentiation under the scaling)
  double dt_w(double t, const double* x) const {
    check_t(t);
    const double a = idx_.alpha, b = idx_.beta;
    const double z = std::pow(t, -1.0 / a) * norm(x);
    const double Wz = prof_.W(z), zWp = z * prof_.Wprime(z);
    const double f1 = (-1.0 / b - s_ / a) * Wz - zWp / a;
    const double f2 = (-1.0 / b) * Wz - zWp / a;
    return std::pow(t, -1.0 / b - s_ / a - 1.0) * f1 + std::pow(t, -1.0 / b - 1.0) * f2;
  }

  /// D_alpha w_t via the exact scaling identity
  /// D_alpha w_t(x) = t^{-1/b-1}(1+t^{-s/a}) (D_alpha V)(t^{-1/a} x).
  double lap_w(double t, const double* x) const {
    check_t(t);
    const double z = std::pow(t, -1.0 / idx_.alpha) * norm(x);
    return std::pow(t, -1.0 / idx_.beta - 1.0) *
           (1.0 + std::pow(t, -s_ / idx_.alpha)) * lap_(z);
  }

  /// hbar(t,x) = (w_t * mu)(x);  h_k = k * hbar.
  double hbar(double t, const double* x) const {
    check_t(t);
    const double a = idx_.alpha, b = idx_.beta;
    const double sc = std::pow(t, -1.0 / a);
    const double pre = std::pow(t, -1.0 / b) * (1.0 + std::pow(t, -s_ / a));
    double acc = 0.0;
    for (std::size_t i = 0; i < awts_.size(); ++i)
      acc += awts_[i] * prof_.W(sc * dist(x, i));
    return pre * acc;
  }

  double h(double k, double t, const double* x) const { return k * hbar(t, x); }

  /// A(t,x) = integral of (d/dt - D_alpha) w_t(x-y) dmu(y)
  double linear_part(double t, const double* x) const {
    check_t(t);
    const double a = idx_.alpha, b = idx_.beta;
    const double sc = std::pow(t, -1.0 / a);
    const double pre_s = std::pow(t, -1.0 / b - s_ / a - 1.0);
    const double pre_0 = std::pow(t, -1.0 / b - 1.0);
    const double pre_lap = std::pow(t, -1.0 / b - 1.0) * (1.0 + std::pow(t, -s_ / a));
    double acc = 0.0;
    for (std::size_t i = 0; i < awts_.size(); ++i) {
      const double z = sc * dist(x, i);
      const double Wz = prof_.W(z), zWp = z * prof_.Wprime(z);
      const double dt_term = pre_s * ((-1.0 / b - s_ / a) * Wz - zWp / a) +
                             pre_0 * ((-1.0 / b) * Wz - zWp / a);
      acc += awts_[i] * (dt_term - pre_lap * lap_(z));
    }
    return acc;
  }

  /// (d/dt - D_alpha) h_k + h_k^{1+beta} at (t,x).
  double supersolution_residual(double k, double t, const double* x) const {
    const double A = linear_part(t, x);
    const double hb = hbar(t, x);
    return k * A + std::pow(k * hb, 1.0 + idx_.beta);
  }

  /// Smallest k making the residual nonnegative at (t,x):
  /// residual/k = A + k^beta hbar^{1+beta} is increasing in k.
  double k_needed(double t, const double* x) const {
    const double A = linear_part(t, x);
    if (A >= 0.0) return 0.0;
    const double B = std::pow(hbar(t, x), 1.0 + idx_.beta);
    return std::pow(-A / B, 1.0 / idx_.beta);
  }

  /// Measured crossover radius R1: beyond z = t^{-1/alpha} d(x, S) of this
  /// size the linear part (d/dt - D_alpha) w alone is nonnegative (log scan
  /// over the t-lattice, largest sign change reported).  Returns
  /// infinity if no crossover is found below z = 1e4 (flat-side parameters).
  double measured_crossover_R1(const std::vector<double>& ts = {1e-2, 1e-1, 1.0}) const {
    double R1 = 0.0;
    double lo[2], hi[2];
    mu_.bounds(lo, hi);
    for (double t : ts) {
      double last_bad = 0.0;
      const double sc = std::pow(t, 1.0 / idx_.alpha);
      for (double z = 1.0; z <= 1e4; z *= 1.08) {
        double x[2] = {hi[0] + z * sc, 0.0};
        if (linear_part(t, x) < 0.0) last_bad = z;
      }
      if (last_bad >= 1e4 / 1.1) return std::numeric_limits<double>::infinity();
      R1 = std::max(R1, last_bad * 1.08);
    }
    return R1;
  }

 private:
  static void check_t(double t) {
    if (!(t > 0.0)) throw std::domain_error("barrier: t must be positive");
  }
  double norm(const double* x) const {
    return idx_.d == 1 ? std::abs(x[0]) : std::hypot(x[0], x[1]);
  }
  double dist(const double* x, std::size_t i) const {
    if (idx_.d == 1) return std::abs(x[0] - apts_[i]);
    return std::hypot(x[0] - apts_[2 * i], x[1] - apts_[2 * i + 1]);
  }

  StableIndex idx_;
  double s_;
  FiniteMeasure mu_;
  BarrierProfile prof_;
  const FracLapVTable& lap_;
  std::vector<double> apts_, awts_;
};

// ---------------------------------------------------------------------------
// calibration lattice and Lambda_0
// ---------------------------------------------------------------------------

/// (t, x) lattice for residual scans: t log-spaced on [t_lo, t_hi], x built
/// from a support net plus outward offsets up to max_offset (d = 1).
struct BarrierLattice {
  std::vector<double> ts;
  std::vector<double> xs;  // d-interleaved points

  static BarrierLattice standard(const FiniteMeasure& mu, int nt = 8,
                                 double t_lo = 1e-2, double t_hi = 1.0,
                                 double max_offset = 10.0) {
    BarrierLattice L;
    for (int i = 0; i < nt; ++i)
      L.ts.push_back(t_lo * std::pow(t_hi / t_lo, double(i) / (nt - 1)));
    if (mu.d != 1)
      throw std::domain_error("BarrierLattice::standard: d=1 lattices only");
    double lo, hi;
    mu.bounds(&lo, &hi);
    for (double p : mu.support_net(0.05, 512)) L.xs.push_back(p);
    for (double off : {0.05, 0.1, 0.2, 0.5, 1.0, 2.0, 5.0, max_offset}) {
      if (off > max_offset) break;
      L.xs.push_back(hi + off);
      L.xs.push_back(lo - off);
    }
    L.xs.push_back(hi + max_offset);
    L.xs.push_back(lo - max_offset);
    return L;
  }
};

struct CalibrationResult {
  double lambda0 = 0.0;
  double worst_t = 0.0, worst_x = 0.0;  // lattice point demanding the max k
  double min_residual_at_lambda0 = 0.0;
  std::size_t lattice_points = 0;
};

/// Smallest k for which the supersolution residual is >= -tol across the
/// lattice; computed pointwise in closed form, then verified by the
/// monotone bisection predicate.  Throws convergence_error past k_cap.
inline CalibrationResult calibrate_lambda0(const Barrier& bar,
                                           const BarrierLattice& lat,
                                           double tol = 1e-9, double k_cap = 1e8) {
  CalibrationResult R;
  const int d = bar.idx().d;
  const std::size_t npts = lat.xs.size() / d;
  R.lattice_points = lat.ts.size() * npts;
  std::vector<double> kmax_per_t(lat.ts.size(), 0.0);
  std::vector<std::pair<double, double>> worst(lat.ts.size(), {0, 0});
  parallel_for(lat.ts.size(), [&](std::size_t it) {
    const double t = lat.ts[it];
    for (std::size_t ix = 0; ix < npts; ++ix) {
      const double k = bar.k_needed(t, &lat.xs[ix * d]);
      if (k > kmax_per_t[it]) {
        kmax_per_t[it] = k;
        worst[it] = {t, lat.xs[ix * d]};
      }
    }
  });
  for (std::size_t it = 0; it < lat.ts.size(); ++it)
    if (kmax_per_t[it] >= R.lambda0) {
      R.lambda0 = kmax_per_t[it];
      R.worst_t = worst[it].first;
      R.worst_x = worst[it].second;
    }
  if (R.lambda0 > k_cap)
    throw convergence_error("calibrate_lambda0: no passing k below cap " +
                            std::to_string(k_cap));

  // bisection verification of the monotone predicate on [0, 2 lambda0]
  auto passes = [&](double k) {
    for (double t : lat.ts)
      for (std::size_t ix = 0; ix < npts; ++ix)
        if (bar.supersolution_residual(k, t, &lat.xs[ix * d]) < -tol) return false;
    return true;
  };
  if (R.lambda0 > 0) {
    double klo = 0.0, khi = 2.0 * R.lambda0;
    if (!passes(khi))
      throw consistency_error("calibrate_lambda0: predicate fails above the closed form");
    for (int i = 0; i < 40; ++i) {
      const double mid = 0.5 * (klo + khi);
      (passes(mid) ? khi : klo) = mid;
    }
    R.lambda0 = khi;
  }
  // record the realized minimum residual
  double mr = std::numeric_limits<double>::infinity();
  for (double t : lat.ts)
    for (std::size_t ix = 0; ix < npts; ++ix)
      mr = std::min(mr, bar.supersolution_residual(R.lambda0, t, &lat.xs[ix * d]));
  R.min_residual_at_lambda0 = mr;
  return R;
}

/// Measured flatness exponent via the barrier race.  The supersolution
/// construction succeeds at infinity iff
///   f1(z) = (-1/beta - s/alpha) - z W'(z)/(alpha W(z)) - D_alpha V(z)/W(z)
/// has a positive limit; f1(z) + q -> 0 like 1/log(e+z^2), where
/// q = 1/beta - (d-s+alpha)/alpha.  Fitting f1 against 1/log(e+z^2) and
/// returning minus the intercept therefore measures q through the
/// principal-value quadrature; its sign is the flat/non-flat phase.
inline double barrier_flatness_exponent(const StableIndex& idx, double s,
                                        double* fit_residual = nullptr) {
  const auto& G = FracLapVTable::get(idx.alpha, idx.d);
  BarrierProfile prof{double(idx.d) + idx.alpha};
  std::vector<double> xs, ys;
  for (double z : {30.0, 100.0, 300.0, 1000.0, 3000.0, 1e4, 3e4, 1e5}) {
    const double W = prof.W(z);
    const double f1 = (-1.0 / idx.beta - s / idx.alpha) -
                      z * prof.Wprime(z) / (idx.alpha * W) - G(z) / W;
    xs.push_back(1.0 / std::log(std::exp(1.0) + z * z));
    ys.push_back(f1);
  }
  // quadratic fit in x = 1/log(e+z^2): f1 = c0 + c1 x + c2 x^2 + O(x^3)
  const std::size_t n = xs.size();
  double S[5] = {0, 0, 0, 0, 0}, T[3] = {0, 0, 0};
  for (std::size_t i = 0; i < n; ++i) {
    double p = 1.0;
    for (int k = 0; k < 5; ++k) {
      S[k] += p;
      if (k < 3) T[k] += p * ys[i];
      p *= xs[i];
    }
  }
  // solve the 3x3 normal equations by Cramer's rule
  const double M[3][3] = {{S[0], S[1], S[2]}, {S[1], S[2], S[3]}, {S[2], S[3], S[4]}};
  auto det3 = [](const double m[3][3]) {
    return m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) -
           m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0]) +
           m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
  };
  const double D = det3(M);
  double M0[3][3];
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) M0[r][c] = (c == 0) ? T[r] : M[r][c];
  const double c0 = det3(M0) / D;
  if (fit_residual) {
    // model residual: deviation of the data from the fitted quadratic
    double rr = 0.0;
    double M1[3][3], M2[3][3];
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) {
        M1[r][c] = (c == 1) ? T[r] : M[r][c];
        M2[r][c] = (c == 2) ? T[r] : M[r][c];
      }
    const double c1 = det3(M1) / D, c2 = det3(M2) / D;
    for (std::size_t i = 0; i < n; ++i)
      rr = std::max(rr, std::abs(ys[i] - (c0 + c1 * xs[i] + c2 * xs[i] * xs[i])));
    *fit_residual = rr;
  }
  return -c0;  // ~ q = 1/beta - (d-s+alpha)/alpha
}

/// Growth certificate: Lambda0 recomputed while the far edge of the lattice
/// is pushed out by factors of two.  Bounded sequence => a global barrier
/// exists (non-flat regime); power growth ~ Z^{d+alpha} => no barrier (flat).
struct BarrierGrowth {
  std::vector<double> offsets;
  std::vector<double> lambda0;
  double growth_per_doubling = 0.0;  // fitted log2 ratio
};

inline BarrierGrowth barrier_growth_certificate(const Barrier& bar,
                                                const FiniteMeasure& mu,
                                                std::vector<double> offsets = {8, 16, 32,
                                                                               64}) {
  BarrierGrowth G;
  G.offsets = offsets;
  for (double off : offsets) {
    BarrierLattice lat = BarrierLattice::standard(mu, 8, 1e-2, 1.0, off);
    G.lambda0.push_back(calibrate_lambda0(bar, lat, 1e-9, 1e30).lambda0);
  }
  std::vector<double> lx, ly;
  for (std::size_t i = 0; i < offsets.size(); ++i) {
    lx.push_back(std::log2(offsets[i]));
    ly.push_back(std::log2(std::max(G.lambda0[i], 1e-300)));
  }
  G.growth_per_doubling = linear_fit(lx, ly).first;
  return G;
}

}  // namespace fraclab
