#pragma once

#include <algorithm>
#include <complex>
#include <cstdint>
#include <vector>

#include "grid.hpp"
#include "kernel_table.hpp"
#include "measures.hpp"
#include "util.hpp"

namespace fraclab {

/// Discrete action of S_t on grid functions: FFT convolution with
/// cell-integrated kernel weights.
///
/// Weights are exact cell integrals of p_t in d=1 (differences of the radial
/// cumulative), and cell-averaged near the peak / midpoint beyond in d=2, so
/// the discrete operator is positivity-preserving and sub-Markov.  Two
/// boundary modes:
///   free-space : zero-padded linear convolution; heavy-tail mass that lands
///                beyond [-L,L]^d leaves the grid (tracked by the caller via
///                window_mass / mass audits).  Kernel evaluations themselves
///                never truncate: beyond the table the tail asymptote
///                ~ c t |x|^{-(d+alpha)} is used.
///   periodic   : weights folded onto the torus and the off-window tail mass
///                (nearly flat at that distance) re-inserted uniformly, then
///                normalized so constants are exactly invariant.
class Convolver {
 public:
  Convolver(const KernelTable& kt, const Grid& g, double t, bool periodic = false)
      : g_(g), t_(t), periodic_(periodic) {
    if (!(t > 0.0)) throw std::domain_error("Convolver: t must be positive");
    if (kt.dim() != g.d) throw std::logic_error("Convolver: dimension mismatch");
    const int n = g.n;
    const double h = g.h();
    if (g.d == 1) {
      // cell weights from the radial cumulative: exact quadrature
      std::vector<double> w(n);  // w[m] for offsets m = 0..n-1 (mirror for -m)
      auto F = [&](double rho) { return 0.5 * kt.mass_within(std::pow(t, -1.0 / kt.alpha()) * rho); };
      w[0] = 2.0 * F(0.5 * h);
      for (int m = 1; m < n; ++m) w[m] = F((m + 0.5) * h) - F((m - 0.5) * h);
      wsum_ = w[0];
      for (int m = 1; m < n; ++m) wsum_ += 2.0 * w[m];

      if (periodic_) {
        P_ = std::size_t(n);
        std::vector<double> wp(n, 0.0);
        wp[0] = w[0];
        for (int m = 1; m < n; ++m) {
          wp[m % n] += w[m];
          wp[(n - m) % n] += w[m];
        }
        const double leftover = std::max(0.0, 1.0 - wsum_);
        for (auto& x : wp) x += leftover / n;
        double s = 0.0;
        for (double x : wp) s += x;
        for (auto& x : wp) x /= s;  // constants exactly invariant
        khat_.assign(P_, {0.0, 0.0});
        for (int m = 0; m < n; ++m) khat_[m] = wp[m];
      } else {
        P_ = next_pow2(std::size_t(2) * n);
        khat_.assign(P_, {0.0, 0.0});
        khat_[0] = w[0];
        for (int m = 1; m < n; ++m) {
          khat_[m] += w[m];
          khat_[P_ - m] += w[m];
        }
      }
      fft_inplace(khat_, false);
    } else {
      // d = 2: cell averages (4x4 Gauss) near the peak, midpoint beyond
      const int K = 12;
      auto cell_weight = [&](int mx, int my) {
        const double cx = mx * h, cy = my * h;
        if (std::max(std::abs(mx), std::abs(my)) <= K) {
          double s = 0.0;
          static const double gx[4] = {-0.8611363115940526, -0.3399810435848563,
                                       0.3399810435848563, 0.8611363115940526};
          static const double gw[4] = {0.3478548451374538, 0.6521451548625461,
                                       0.6521451548625461, 0.3478548451374538};
          for (int a = 0; a < 4; ++a)
            for (int b = 0; b < 4; ++b) {
              const double x = cx + 0.5 * h * gx[a], y = cy + 0.5 * h * gx[b];
              s += gw[a] * gw[b] * kt.eval(t, std::sqrt(x * x + y * y));
            }
          return s * h * h / 4.0;
        }
        return kt.eval(t, std::sqrt(cx * cx + cy * cy)) * h * h;
      };
      if (periodic_)
        throw std::domain_error("Convolver: periodic mode implemented for d=1 only");
      P_ = next_pow2(std::size_t(2) * n);
      khat_.assign(P_ * P_, {0.0, 0.0});
      wsum_ = 0.0;
      for (int my = -(n - 1); my <= n - 1; ++my)
        for (int mx = -(n - 1); mx <= n - 1; ++mx) {
          double wv;
          // exploit 8-fold radial symmetry via |mx|,|my| cache-free recompute
          wv = cell_weight(std::abs(mx), std::abs(my));
          wsum_ += wv;
          const std::size_t ix = std::size_t((mx + int(P_)) % int(P_));
          const std::size_t iy = std::size_t((my + int(P_)) % int(P_));
          khat_[iy * P_ + ix] += wv;
        }
      fft2(khat_, false);
    }
  }

  const Grid& grid() const { return g_; }
  double t() const { return t_; }
  bool periodic() const { return periodic_; }

  /// Total kernel mass captured by the offset window (free-space mode);
  /// 1 - window_mass() is the per-unit-mass leak bound per application.
  double window_mass() const { return periodic_ ? 1.0 : wsum_; }

  /// out = kernel * in  (linear or circular convolution).  Not thread-safe
  /// per instance (scratch buffers); use one Convolver per thread.
  void apply(const std::vector<double>& in, std::vector<double>& out) {
    const int n = g_.n;
    if (g_.d == 1) {
      buf_.assign(P_, {0.0, 0.0});
      for (int i = 0; i < n; ++i) buf_[i] = in[i];
      fft_inplace(buf_, false);
      for (std::size_t i = 0; i < P_; ++i) buf_[i] *= khat_[i];
      fft_inplace(buf_, true);
      out.resize(n);
      for (int i = 0; i < n; ++i) out[i] = std::max(0.0, buf_[i].real());
    } else {
      buf_.assign(P_ * P_, {0.0, 0.0});
      for (int y = 0; y < n; ++y)
        for (int x = 0; x < n; ++x) buf_[std::size_t(y) * P_ + x] = in[std::size_t(y) * n + x];
      fft2(buf_, false);
      for (std::size_t i = 0; i < buf_.size(); ++i) buf_[i] *= khat_[i];
      fft2(buf_, true);
      out.resize(std::size_t(n) * n);
      for (int y = 0; y < n; ++y)
        for (int x = 0; x < n; ++x)
          out[std::size_t(y) * n + x] = std::max(0.0, buf_[std::size_t(y) * P_ + x].real());
    }
  }

 private:
  void fft2(std::vector<std::complex<double>>& a, bool inverse) const {
    std::vector<std::complex<double>> line(P_);
    for (std::size_t y = 0; y < P_; ++y) {  // rows
      for (std::size_t x = 0; x < P_; ++x) line[x] = a[y * P_ + x];
      fft_inplace(line, inverse);
      for (std::size_t x = 0; x < P_; ++x) a[y * P_ + x] = line[x];
    }
    for (std::size_t x = 0; x < P_; ++x) {  // columns
      for (std::size_t y = 0; y < P_; ++y) line[y] = a[y * P_ + x];
      fft_inplace(line, inverse);
      for (std::size_t y = 0; y < P_; ++y) a[y * P_ + x] = line[y];
    }
  }

  Grid g_;
  double t_ = 0.0;
  bool periodic_ = false;
  std::size_t P_ = 0;
  std::vector<std::complex<double>> khat_;
  std::vector<std::complex<double>> buf_;
  double wsum_ = 0.0;
};

/// S_t f for a grid function (one-shot convenience; builds a Convolver).
/// Throws accuracy_error when the kernel spread exceeds the box so badly
/// that the leak bound passes `leak_tol`.
inline GridFunction semigroup_apply(const KernelTable& kt, double t,
                                    const GridFunction& f, bool periodic = false,
                                    double leak_tol = 0.25) {
  if (!periodic) {
    const double leak = kt.mass_outside(t, f.grid.L);
    if (leak > leak_tol)
      throw accuracy_error("semigroup_apply: kernel mass outside grid = " +
                           std::to_string(leak) + " exceeds tolerance");
  }
  Convolver conv(kt, f.grid, t, periodic);
  GridFunction out(f.grid);
  conv.apply(f.v, out.v);
  return out;
}

/// S_t mu sampled at the cell centers of a target grid.  Exact 1-d formulas
/// for boxes/balls (differences of the radial cumulative); point-mass
/// quadrature for atoms, Cantor and everything else.
inline GridFunction semigroup_measure(const KernelTable& kt, double t,
                                      const FiniteMeasure& mu, const Grid& g,
                                      int atom_budget = 4096) {
  if (kt.dim() != mu.d || g.d != mu.d)
    throw std::logic_error("semigroup_measure: dimension mismatch");
  GridFunction out(g);
  const double s = std::pow(t, -1.0 / kt.alpha());

  if (mu.d == 1 && (mu.kind == MeasureKind::RestrictedLebesgue ||
                    mu.kind == MeasureKind::BallUniform)) {
    const double a = (mu.kind == MeasureKind::RestrictedLebesgue)
                         ? mu.box_lo[0]
                         : mu.ball_center[0] - mu.ball_radius;
    const double b = (mu.kind == MeasureKind::RestrictedLebesgue)
                         ? mu.box_hi[0]
                         : mu.ball_center[0] + mu.ball_radius;
    const double dens = mu.mass / (b - a);
    auto F = [&](double z) {
      const double c = 0.5 * kt.mass_within(s * std::abs(z));
      return z >= 0 ? c : -c;
    };
    for (int j = 0; j < g.n; ++j) {
      const double x = g.axis(j);
      out.v[j] = dens * (F(b - x) - F(a - x));
    }
    return out;
  }

  std::vector<double> apts, awts;
  mu.atomize(atom_budget, apts, awts);
  const std::size_t na = awts.size();
  const double tpow = std::pow(t, -double(g.d) / kt.alpha());
  parallel_for(g.size(), [&](std::size_t i) {
    double x[2];
    g.coords(i, x);
    double acc = 0.0;
    if (g.d == 1) {
      for (std::size_t a = 0; a < na; ++a)
        acc += awts[a] * kt.p1(s * std::abs(x[0] - apts[a]));
    } else {
      for (std::size_t a = 0; a < na; ++a) {
        const double dx = x[0] - apts[2 * a], dy = x[1] - apts[2 * a + 1];
        acc += awts[a] * kt.p1(s * std::sqrt(dx * dx + dy * dy));
      }
    }
    out.v[i] = tpow * acc;
  });
  return out;
}

/// Exact projection of mu onto grid cells (box mollifier at the grid scale):
/// out[i] = mu(cell_i) / |cell|.  Compactly supported, mass-exact for atoms,
/// boxes, balls and Cantor measures.
inline GridFunction project_to_cells(const FiniteMeasure& mu, const Grid& g) {
  if (mu.d != g.d) throw std::logic_error("project_to_cells: dimension mismatch");
  GridFunction out(g);
  const double h = g.h();
  if (mu.kind == MeasureKind::Atomic) {
    for (std::size_t a = 0; a < mu.wts.size(); ++a) {
      long ix = long(std::floor((mu.pts[a * g.d] + g.L) / h));
      ix = std::clamp(ix, 0l, long(g.n - 1));
      std::size_t idx = std::size_t(ix);
      if (g.d == 2) {
        long iy = long(std::floor((mu.pts[a * 2 + 1] + g.L) / h));
        iy = std::clamp(iy, 0l, long(g.n - 1));
        idx = std::size_t(iy) * g.n + std::size_t(ix);
      }
      out.v[idx] += mu.wts[a] / g.cell_volume();
    }
    return out;
  }
  if (g.d == 1) {
    for (int j = 0; j < g.n; ++j) {
      const double c = g.axis(j);
      const double m = mu.ball_mass1(c, 0.5 * h);
      if (m > 0) out.v[j] = m / h;
    }
    return out;
  }
  // d = 2: box overlap for boxes, disc quadrature for balls, resample else
  if (mu.kind == MeasureKind::RestrictedLebesgue) {
    const double area = (mu.box_hi[0] - mu.box_lo[0]) * (mu.box_hi[1] - mu.box_lo[1]);
    for (std::size_t i = 0; i < out.v.size(); ++i) {
      double c[2];
      g.coords(i, c);
      const double ox = std::max(0.0, std::min(c[0] + h / 2, mu.box_hi[0]) -
                                          std::max(c[0] - h / 2, mu.box_lo[0]));
      const double oy = std::max(0.0, std::min(c[1] + h / 2, mu.box_hi[1]) -
                                          std::max(c[1] - h / 2, mu.box_lo[1]));
      out.v[i] = mu.mass * ox * oy / area / g.cell_volume();
    }
    return out;
  }
  std::vector<double> apts, awts;
  mu.atomize(1 << 16, apts, awts);
  for (std::size_t a = 0; a < awts.size(); ++a) {
    long ix = long(std::floor((apts[a * 2] + g.L) / h));
    long iy = long(std::floor((apts[a * 2 + 1] + g.L) / h));
    ix = std::clamp(ix, 0l, long(g.n - 1));
    iy = std::clamp(iy, 0l, long(g.n - 1));
    out.v[std::size_t(iy) * g.n + std::size_t(ix)] += awts[a] / g.cell_volume();
  }
  return out;
}

/// Indicator of the cells whose closure meets supp(mu).
inline std::vector<std::uint8_t> support_cells(const FiniteMeasure& mu, const Grid& g) {
  std::vector<std::uint8_t> mask(g.size(), 0);
  const double h = g.h();
  for (std::size_t i = 0; i < mask.size(); ++i) {
    double c[2];
    g.coords(i, c);
    const double r = (g.d == 1) ? 0.5 * h : 0.7071067811865476 * h;
    mask[i] = mu.support_distance(c) <= r * (1 + 1e-12);
  }
  return mask;
}

/// S_t mu at a single point (same quadrature as semigroup_measure).
inline double semigroup_measure_at(const KernelTable& kt, double t,
                                   const std::vector<double>& apts,
                                   const std::vector<double>& awts, int d,
                                   const double* x) {
  const double s = std::pow(t, -1.0 / kt.alpha());
  double acc = 0.0;
  if (d == 1) {
    for (std::size_t a = 0; a < awts.size(); ++a)
      acc += awts[a] * kt.p1(s * std::abs(x[0] - apts[a]));
  } else {
    for (std::size_t a = 0; a < awts.size(); ++a) {
      const double dx = x[0] - apts[2 * a], dy = x[1] - apts[2 * a + 1];
      acc += awts[a] * kt.p1(s * std::sqrt(dx * dx + dy * dy));
    }
  }
  return std::pow(t, -double(d) / kt.alpha()) * acc;
}

}  // namespace fraclab
