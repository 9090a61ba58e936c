#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "stable_index.hpp"
#include "util.hpp"

namespace fraclab {

/// Normalization a_{alpha,d} of the singular-integral form of the generator,
///   D_alpha f(x) = a_{alpha,d} pv-int (f(y)-f(x)) / |y-x|^{d+alpha} dy,
/// chosen so that D_alpha has Fourier symbol -|xi|^alpha, i.e. so that it is
/// the generator of the process whose transition density this module
/// tabulates.  (Consistency with d/dt p_t is checked in the tests.)
inline double frac_laplacian_constant(double alpha, int d) {
  return alpha * std::pow(2.0, alpha - 1.0) *
         std::tgamma((d + alpha) / 2.0) /
         (std::pow(pi, d / 2.0) * std::tgamma(1.0 - alpha / 2.0));
}

namespace detail {

// Large-rho expansion of the unit-time density,
//   p_1(rho) = sum_k (-1)^{k+1} c_k rho^{-d-k*alpha},
//   c_k = 2^{k a} pi^{-d/2-1} sin(pi k a / 2) G((d+ka)/2) G(1+ka/2) / k! .
// Convergent for alpha < 1, asymptotic otherwise; summed with optimal
// truncation, returns the first omitted term as error estimate.
inline double stable_tail_series(double alpha, int d, double rho,
                                 double* err_out = nullptr) {
  const double lr = std::log(rho);
  double sum = 0.0, prev = std::numeric_limits<double>::infinity();
  double err = 0.0;
  bool have_prev = false;
  for (int k = 1; k <= 220; ++k) {
    const double ka = k * alpha;
    const double s = std::sin(pi * ka / 2.0);
    if (std::abs(s) < 1e-14) continue;  // vanishing term (k*alpha even)
    const double lc = ka * std::log(2.0) - (d / 2.0 + 1.0) * std::log(pi) +
                      std::lgamma((d + ka) / 2.0) + std::lgamma(1.0 + ka / 2.0) -
                      std::lgamma(k + 1.0) - (d + ka) * lr;
    const double term = ((k % 2) ? 1.0 : -1.0) * s * std::exp(lc);
    const double at = std::abs(term);
    if (have_prev && at > prev) {  // asymptotic regime: stop at smallest term
      err = at;
      break;
    }
    sum += term;
    prev = at;
    have_prev = true;
    err = at;
    if (at <= 1e-16 * std::abs(sum) + 1e-300) break;
  }
  if (err_out) *err_out = err;
  return sum;
}

// Analytic mass of p_1 outside the ball of radius R (R in the series regime).
// (rho^{d-1} rho^{-d-k a} integrates to R^{-k a}/(k a) in every dimension.)
inline double stable_tail_mass(double alpha, int d, double R) {
  const double surf = 2.0 * std::pow(pi, d / 2.0) / std::tgamma(d / 2.0);
  double sum = 0.0, prev = std::numeric_limits<double>::infinity();
  const double lR = std::log(R);
  bool have_prev = false;
  for (int k = 1; k <= 220; ++k) {
    const double ka = k * alpha;
    const double s = std::sin(pi * ka / 2.0);
    if (std::abs(s) < 1e-14) continue;
    const double lc = ka * std::log(2.0) - (d / 2.0 + 1.0) * std::log(pi) +
                      std::lgamma((d + ka) / 2.0) + std::lgamma(1.0 + ka / 2.0) -
                      std::lgamma(k + 1.0) - ka * lR - std::log(ka);
    const double term = ((k % 2) ? 1.0 : -1.0) * s * std::exp(lc);
    const double at = std::abs(term);
    if (have_prev && at > prev) break;
    sum += term;
    prev = at;
    have_prev = true;
    if (at <= 1e-16 * std::abs(sum) + 1e-300) break;
  }
  return surf * sum;
}

// Fourier (d=1, cosine) / Hankel (d>=2, order d/2-1) inversion of
// exp(-|xi|^alpha) at radius rho, panelled at the oscillator's zeros with a
// geometrically graded start (the integrand has an |xi|^alpha kink at zero
// for alpha < 1).
inline double stable_density_quadrature(double alpha, int d, double rho) {
  const double xi_max = std::pow(41.5, 1.0 / alpha);  // exp(-xi^a) < 1e-18
  const double nu = d / 2.0 - 1.0;

  std::vector<double> edges;
  edges.push_back(0.0);
  std::vector<double> zeros;
  if (d == 1) {
    for (int k = 1;; ++k) {
      const double z = (k - 0.5) * pi / rho;
      if (z >= xi_max) break;
      zeros.push_back(z);
      if (zeros.size() > 200000) throw std::runtime_error("kernel quadrature: rho too large");
    }
  } else {
    static const double j0[4] = {2.404825557695773, 5.520078110286311,
                                 8.653727912911013, 11.791534439014282};
    for (int k = 1;; ++k) {
      // McMahon approximations suffice: zeros only set panel edges
      const double b = (k + 0.5 * nu - 0.25) * pi;
      double jk = b - (4.0 * nu * nu - 1.0) / (8.0 * b);
      if (d == 2 && k <= 4) jk = j0[k - 1];
      const double z = jk / rho;
      if (z >= xi_max) break;
      zeros.push_back(z);
      if (zeros.size() > 200000) throw std::runtime_error("kernel quadrature: rho too large");
    }
  }
  const double first = zeros.empty() ? xi_max : zeros.front();
  for (int j = 22; j >= 1; --j) edges.push_back(first * std::pow(2.0, -j));
  edges.push_back(first);
  for (std::size_t i = 1; i < zeros.size(); ++i) edges.push_back(zeros[i]);
  if (edges.back() < xi_max) edges.push_back(xi_max);

  // keep panels short relative to the exponential envelope
  std::vector<double> refined;
  refined.push_back(edges[0]);
  const double cap = xi_max / 16.0;
  for (std::size_t i = 1; i < edges.size(); ++i) {
    const double a = edges[i - 1], b = edges[i];
    const int parts = std::max(1, int(std::ceil((b - a) / cap)));
    for (int p = 1; p <= parts; ++p) refined.push_back(a + (b - a) * p / parts);
  }

  double integral;
  if (d == 1) {
    integral = gl16_panels(
        [&](double xi) { return std::cos(rho * xi) * std::exp(-std::pow(xi, alpha)); },
        refined);
    return integral / pi;
  }
  // p_1(rho) = (2 pi)^{-d/2} rho^{1-d/2} int J_{d/2-1}(rho xi) xi^{d/2} e^{-xi^a} dxi
  integral = gl16_panels(
      [&](double xi) {
        return std::cyl_bessel_j(nu, rho * xi) * std::pow(xi, d / 2.0) *
               std::exp(-std::pow(xi, alpha));
      },
      refined);
  return integral * std::pow(2.0 * pi, -d / 2.0) * std::pow(rho, 1.0 - d / 2.0);
}

}  // namespace detail

struct KernelOptions {
  double rho_min = 1e-4;
  double rho_max = 1e4;
  int per_decade = 48;
  double series_crossover = 10.0;  // quadrature below, tail series above
};

/// Tabulated unit-time transition density p_1 of the isotropic alpha-stable
/// process (d = 1 or 2), with monotone log-log interpolation, the radial
/// cumulative mass function, and the analytic heavy-tail continuation.
/// Immutable after construction; safe for concurrent reads.
class KernelTable {
 public:
  KernelTable() = default;

  static KernelTable build(double alpha, int d, KernelOptions opt = {}) {
    if (!(alpha > 0.2 && alpha <= 1.95))
      throw std::domain_error("KernelTable: alpha supported in (0.2, 1.95]");
    if (d < 1 || d > 3)
      throw std::domain_error("KernelTable: d in {1,2} supported, d=3 experimental, d>3 unsupported");
    // d = 3 is table-only (no grid machinery); kept for envelope/normalization
    // experiments, grid cost rules out solves there
    KernelTable kt;
    kt.alpha_ = alpha;
    kt.d_ = d;
    kt.opt_ = opt;

    // p_1(0) in closed form: (2pi)^{-d} * surf(d) * Gamma(d/alpha)/alpha
    const double surf = 2.0 * std::pow(pi, d / 2.0) / std::tgamma(d / 2.0);
    kt.p0_ = std::pow(2.0 * pi, -d) * surf * std::tgamma(double(d) / alpha) / alpha;

    const int decades = int(std::round(std::log10(opt.rho_max / opt.rho_min)));
    const int n = decades * opt.per_decade;
    kt.rho_.resize(n + 1);
    kt.p_.resize(n + 1);
    for (int i = 0; i <= n; ++i)
      kt.rho_[i] = opt.rho_min * std::pow(10.0, double(i) / opt.per_decade);
    kt.rho_.back() = opt.rho_max;

    for (int i = 0; i <= n; ++i) {
      const double r = kt.rho_[i];
      kt.p_[i] = (r <= opt.series_crossover)
                     ? detail::stable_density_quadrature(alpha, d, r)
                     : detail::stable_tail_series(alpha, d, r);
      if (!(kt.p_[i] > 0.0))
        throw std::runtime_error("KernelTable: non-positive density sample");
    }
    kt.finish();
    return kt;
  }

  double alpha() const { return alpha_; }
  int dim() const { return d_; }
  double p0() const { return p0_; }
  std::size_t nodes() const { return rho_.size(); }
  double rho_min() const { return opt_.rho_min; }
  double rho_max() const { return opt_.rho_max; }

  /// p_1 at radius rho (>= 0); table interpolation inside the tabulated
  /// range, exact series beyond, quadratic-in-rho^2 blend below rho_min.
  double p1(double rho) const {
    require_built();
    rho = std::abs(rho);
    if (rho < opt_.rho_min) {
      const double f = rho / opt_.rho_min;
      return p0_ + (p_.front() - p0_) * f * f;
    }
    if (rho > opt_.rho_max) return detail::stable_tail_series(alpha_, d_, rho);
    return std::exp(logp_interp_(std::log(rho)));
  }

  /// p_t(x) via exact self-similar scaling; the implementation IS the
  /// scaling law p_t = t^{-d/a} p_1(t^{-1/a} |x|).
  double eval(double t, double rho) const {
    if (!(t > 0.0)) throw std::domain_error("eval_kernel: t must be positive");
    const double s = std::pow(t, -1.0 / alpha_);
    return std::pow(t, -double(d_) / alpha_) * p1(s * std::abs(rho));
  }

  /// Mass of p_1 inside the ball of radius rho (radial cumulative).
  double mass_within(double rho) const {
    require_built();
    rho = std::abs(rho);
    if (rho <= 0.0) return 0.0;
    if (rho >= opt_.rho_max)
      return std::max(0.0, 1.0 - detail::stable_tail_mass(alpha_, d_, rho));
    if (rho < opt_.rho_min) {
      const double surf = 2.0 * std::pow(pi, d_ / 2.0) / std::tgamma(d_ / 2.0);
      return surf * p0_ * std::pow(rho, double(d_)) / d_;
    }
    return std::min(1.0, std::max(0.0, cum_interp_(std::log(rho))));
  }

  /// Mass of p_t outside radius R.
  double mass_outside(double t, double R) const {
    return std::max(0.0, 1.0 - mass_within(std::pow(t, -1.0 / alpha_) * R));
  }

  /// |integral p_1 - 1| as realized by the table + analytic tail.
  double normalization_defect() const { return norm_defect_; }

  /// min / max of rho -> p_1(rho) (1 + rho^{d+alpha}) over the table range
  /// and the far tail regime.
  std::pair<double, double> envelope() const {
    require_built();
    double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
    auto upd = [&](double r, double p) {
      const double e = p * (1.0 + std::pow(r, d_ + alpha_));
      lo = std::min(lo, e);
      hi = std::max(hi, e);
    };
    upd(0.0, p0_);
    for (std::size_t i = 0; i < rho_.size(); ++i) upd(rho_[i], p_[i]);
    for (double r : {3e4, 1e5, 1e6})
      upd(r, detail::stable_tail_series(alpha_, d_, r));
    return {lo, hi};
  }

  // -- cache -----------------------------------------------------------------

  std::string cache_name() const {
    char buf[96];
    std::snprintf(buf, sizeof buf, "kt_a%.6g_d%d_n%zu.txt", alpha_, d_, rho_.size());
    return buf;
  }

  void save(const std::string& dir) const {
    require_built();
    std::filesystem::create_directories(dir);
    std::ofstream out(std::filesystem::path(dir) / cache_name());
    out.precision(17);
    out << "fraclab-kernel-table v1\n"
        << alpha_ << ' ' << d_ << ' ' << rho_.size() << ' ' << p0_ << '\n'
        << opt_.rho_min << ' ' << opt_.rho_max << ' ' << opt_.per_decade << ' '
        << opt_.series_crossover << '\n';
    for (std::size_t i = 0; i < rho_.size(); ++i)
      out << rho_[i] << ' ' << p_[i] << '\n';
  }

  static std::optional<KernelTable> load(const std::string& dir, double alpha,
                                         int d, KernelOptions opt = {}) {
    KernelTable probe;
    probe.alpha_ = alpha;
    probe.d_ = d;
    const int decades = int(std::round(std::log10(opt.rho_max / opt.rho_min)));
    probe.rho_.resize(std::size_t(decades) * opt.per_decade + 1);
    std::ifstream in(std::filesystem::path(dir) / probe.cache_name());
    if (!in) return std::nullopt;
    std::string header;
    std::getline(in, header);
    if (header != "fraclab-kernel-table v1") return std::nullopt;
    KernelTable kt;
    std::size_t count = 0;
    in >> kt.alpha_ >> kt.d_ >> count >> kt.p0_;
    in >> kt.opt_.rho_min >> kt.opt_.rho_max >> kt.opt_.per_decade >>
        kt.opt_.series_crossover;
    if (!in || std::abs(kt.alpha_ - alpha) > 1e-12 || kt.d_ != d) return std::nullopt;
    kt.rho_.resize(count);
    kt.p_.resize(count);
    for (std::size_t i = 0; i < count; ++i) in >> kt.rho_[i] >> kt.p_[i];
    if (!in) return std::nullopt;
    kt.finish();
    return kt;
  }

  /// Build, consulting/refreshing a cache directory when given.
  static KernelTable get(double alpha, int d, const std::string& cache_dir = "",
                         KernelOptions opt = {}) {
    if (!cache_dir.empty()) {
      if (auto kt = load(cache_dir, alpha, d, opt)) return *kt;
      KernelTable kt = build(alpha, d, opt);
      kt.save(cache_dir);
      return kt;
    }
    return build(alpha, d, opt);
  }

 private:
  void require_built() const {
    if (rho_.empty())
      throw std::logic_error("KernelTable used before construction");
  }

  void finish() {
    // radial monotonicity guard; p_1 is radially decreasing
    for (std::size_t i = 1; i < p_.size(); ++i)
      if (p_[i] > p_[i - 1] * (1.0 + 1e-9))
        throw std::runtime_error("KernelTable: radial monotonicity violated");
    std::vector<double> lx(rho_.size()), ly(rho_.size());
    for (std::size_t i = 0; i < rho_.size(); ++i) {
      lx[i] = std::log(rho_[i]);
      ly[i] = std::log(p_[i]);
    }
    logp_interp_ = Pchip(lx, ly);

    // cumulative radial mass by panelwise quadrature of the interpolant
    std::vector<double> cum(rho_.size());
    const double surf = 2.0 * std::pow(pi, d_ / 2.0) / std::tgamma(d_ / 2.0);
    double acc = surf * p0_ * std::pow(rho_[0], double(d_)) / d_;
    cum[0] = acc;
    for (std::size_t i = 1; i < rho_.size(); ++i) {
      acc += surf * gl16(
                        [&](double r) {
                          const double p = std::exp(logp_interp_(std::log(r)));
                          return p * std::pow(r, d_ - 1.0);
                        },
                        rho_[i - 1], rho_[i]);
      cum[i] = acc;
    }
    cum_interp_ = Pchip(lx, cum);
    const double total = acc + detail::stable_tail_mass(alpha_, d_, rho_.back());
    norm_defect_ = std::abs(total - 1.0);
  }

  double alpha_ = 0.0;
  int d_ = 0;
  double p0_ = 0.0;
  KernelOptions opt_;
  std::vector<double> rho_, p_;
  Pchip logp_interp_, cum_interp_;
  double norm_defect_ = 1.0;
};

}  // namespace fraclab
