#pragma once

#include <array>
#include <cmath>
#include <cstdio>
#include <limits>
#include <string>
#include <vector>

#include "grid.hpp"
#include "util.hpp"

namespace fraclab {

enum class MeasureKind { Atomic, GridDensity, CantorUniform, RestrictedLebesgue, BallUniform };

namespace detail {

// Mass of the self-similar two-piece Cantor measure on [0,1] (children
// [0,r] and [1-r,1], half mass each) restricted to the closed interval
// [a,b].  Exact whenever the recursion terminates by containment; at the
// depth cap the remaining cylinder is counted pro rata (error <= 2^-depth).
inline double cantor_interval_mass(double a, double b, double ratio, int depth) {
  if (b < 0.0 || a > 1.0) return 0.0;
  if (a <= 0.0 && b >= 1.0) return 1.0;
  if (depth == 0) {
    const double lo = std::max(a, 0.0), hi = std::min(b, 1.0);
    return std::max(0.0, hi - lo);
  }
  const double right = 1.0 - ratio;
  return 0.5 * cantor_interval_mass(a / ratio, b / ratio, ratio, depth - 1) +
         0.5 * cantor_interval_mass((a - right) / ratio, (b - right) / ratio,
                                    ratio, depth - 1);
}

inline double cantor_distance(double x, double ratio, int depth) {
  if (x < 0.0) return -x;
  if (x > 1.0) return x - 1.0;
  if (depth == 0) return 0.0;  // inside a cylinder of length ratio^depth_0
  const double right = 1.0 - ratio;
  if (x <= ratio) return ratio * cantor_distance(x / ratio, ratio, depth - 1);
  if (x >= right)
    return ratio * cantor_distance((x - right) / ratio, ratio, depth - 1);
  return std::min(x - ratio, right - x);  // in the middle gap
}

// area of the intersection of a disc with an axis box, by 1d quadrature of
// the chord length (quadrature-grade, used only for d=2 ball masses)
inline double disc_box_area(const double* c, double r, const double* lo,
                            const double* hi) {
  const double xa = std::max(lo[0], c[0] - r), xb = std::min(hi[0], c[0] + r);
  if (xa >= xb || r <= 0.0) return 0.0;
  auto chord = [&](double x) {
    const double dx = x - c[0];
    const double half = std::sqrt(std::max(0.0, r * r - dx * dx));
    return std::max(0.0, std::min(hi[1], c[1] + half) - std::max(lo[1], c[1] - half));
  };
  double area = 0.0;
  const int panels = 64;
  for (int i = 0; i < panels; ++i)
    area += gl16(chord, xa + (xb - xa) * i / panels, xa + (xb - xa) * (i + 1) / panels);
  return area;
}

}  // namespace detail

/// Tagged finite measure on R^d (d = 1 or 2).  Values are immutable; all
/// operations are pure.  Ball masses are exact for atoms, boxes, balls and
/// Cantor measures (analytic recursion) and quadrature-grade for grid
/// densities.
struct FiniteMeasure {
  MeasureKind kind = MeasureKind::Atomic;
  int d = 1;
  double mass = 0.0;

  // Atomic
  std::vector<double> pts;  // d-interleaved
  std::vector<double> wts;

  // GridDensity
  GridFunction density;

  // CantorUniform: affine image  offset + scale * C_ratio([0,1]),  d = 1
  double cantor_ratio = 1.0 / 3.0;
  int cantor_depth = 24;
  double cantor_offset = 0.0;
  double cantor_scale = 1.0;

  // RestrictedLebesgue / BallUniform
  std::array<double, 2> box_lo{0, 0}, box_hi{0, 0};
  std::array<double, 2> ball_center{0, 0};
  double ball_radius = 0.0;

  // -- constructors ---------------------------------------------------------

  static FiniteMeasure atoms(int d, std::vector<double> points,
                             std::vector<double> weights) {
    FiniteMeasure m;
    m.kind = MeasureKind::Atomic;
    m.d = d;
    m.pts = std::move(points);
    m.wts = std::move(weights);
    if (m.pts.size() != m.wts.size() * std::size_t(d))
      throw std::domain_error("atoms: points/weights size mismatch");
    m.mass = 0.0;
    for (double w : m.wts) {
      if (w < 0) throw std::domain_error("atoms: negative weight");
      m.mass += w;
    }
    m.check();
    return m;
  }

  static FiniteMeasure delta(double x, double w = 1.0) { return atoms(1, {x}, {w}); }
  static FiniteMeasure delta2(double x, double y, double w = 1.0) {
    return atoms(2, {x, y}, {w});
  }

  static FiniteMeasure cantor(double ratio, int depth, double total_mass,
                              double offset = 0.0, double scale = 1.0) {
    if (!(ratio > 0.0 && ratio < 0.5))
      throw std::domain_error("cantor: ratio must lie in (0, 1/2)");
    if (depth < 1 || scale <= 0.0) throw std::domain_error("cantor: bad depth/scale");
    FiniteMeasure m;
    m.kind = MeasureKind::CantorUniform;
    m.d = 1;
    m.mass = total_mass;
    m.cantor_ratio = ratio;
    m.cantor_depth = depth;
    m.cantor_offset = offset;
    m.cantor_scale = scale;
    m.check();
    return m;
  }

  static FiniteMeasure box1(double lo, double hi, double total_mass) {
    FiniteMeasure m;
    m.kind = MeasureKind::RestrictedLebesgue;
    m.d = 1;
    m.mass = total_mass;
    m.box_lo = {lo, 0};
    m.box_hi = {hi, 0};
    if (!(hi > lo)) throw std::domain_error("box1: empty box");
    m.check();
    return m;
  }

  static FiniteMeasure box2(std::array<double, 2> lo, std::array<double, 2> hi,
                            double total_mass) {
    FiniteMeasure m;
    m.kind = MeasureKind::RestrictedLebesgue;
    m.d = 2;
    m.mass = total_mass;
    m.box_lo = lo;
    m.box_hi = hi;
    if (!(hi[0] > lo[0] && hi[1] > lo[1])) throw std::domain_error("box2: empty box");
    m.check();
    return m;
  }

  static FiniteMeasure ball(int d, std::array<double, 2> center, double radius,
                            double total_mass) {
    FiniteMeasure m;
    m.kind = MeasureKind::BallUniform;
    m.d = d;
    m.mass = total_mass;
    m.ball_center = center;
    m.ball_radius = radius;
    if (radius <= 0) throw std::domain_error("ball: radius must be positive");
    m.check();
    return m;
  }

  static FiniteMeasure grid_density(GridFunction f) {
    FiniteMeasure m;
    m.kind = MeasureKind::GridDensity;
    m.d = f.grid.d;
    m.mass = f.total_mass();
    m.density = std::move(f);
    m.check();
    return m;
  }

  void check() const {
    if (!(mass > 0.0) || !std::isfinite(mass))
      throw std::domain_error("FiniteMeasure: total mass must be positive and finite");
    if (kind == MeasureKind::CantorUniform && d != 1)
      throw std::domain_error("FiniteMeasure: Cantor measures are d=1 only");
  }

  // -- core operations ------------------------------------------------------

  /// mu(B(x, r)), closed ball.
  double ball_mass(const double* x, double r) const {
    if (r < 0.0) throw std::domain_error("ball_mass: negative radius");
    switch (kind) {
      case MeasureKind::Atomic: {
        double s = 0.0;
        const double r2 = r * r;
        for (std::size_t i = 0; i < wts.size(); ++i) {
          double q = 0.0;
          for (int k = 0; k < d; ++k) {
            const double dd = pts[i * d + k] - x[k];
            q += dd * dd;
          }
          if (q <= r2 * (1.0 + 1e-14) + 1e-300) s += wts[i];
        }
        return s;
      }
      case MeasureKind::CantorUniform: {
        const double a = (x[0] - r - cantor_offset) / cantor_scale;
        const double b = (x[0] + r - cantor_offset) / cantor_scale;
        return mass * detail::cantor_interval_mass(a, b, cantor_ratio, cantor_depth);
      }
      case MeasureKind::RestrictedLebesgue: {
        if (d == 1) {
          const double len = box_hi[0] - box_lo[0];
          const double lo = std::max(box_lo[0], x[0] - r),
                       hi = std::min(box_hi[0], x[0] + r);
          return mass * std::max(0.0, hi - lo) / len;
        }
        const double area = (box_hi[0] - box_lo[0]) * (box_hi[1] - box_lo[1]);
        return mass * detail::disc_box_area(x, r, box_lo.data(), box_hi.data()) / area;
      }
      case MeasureKind::BallUniform: {
        if (d == 1) {
          const double lo = std::max(ball_center[0] - ball_radius, x[0] - r);
          const double hi = std::min(ball_center[0] + ball_radius, x[0] + r);
          return mass * std::max(0.0, hi - lo) / (2.0 * ball_radius);
        }
        // lens area of two discs
        const double dx = x[0] - ball_center[0], dy = x[1] - ball_center[1];
        const double dist = std::sqrt(dx * dx + dy * dy);
        const double R = ball_radius;
        if (dist >= R + r) return 0.0;
        if (dist <= std::abs(R - r))
          return (r >= R) ? mass : mass * (r * r) / (R * R);
        const double a1 = std::acos((dist * dist + r * r - R * R) / (2 * dist * r));
        const double a2 = std::acos((dist * dist + R * R - r * r) / (2 * dist * R));
        const double lens = r * r * (a1 - std::sin(2 * a1) / 2) +
                            R * R * (a2 - std::sin(2 * a2) / 2);
        return mass * lens / (pi * R * R);
      }
      case MeasureKind::GridDensity: {
        const Grid& g = density.grid;
        const double h = g.h();
        if (d == 1) {
          // exact integral of the piecewise-constant density over the interval
          const double a = x[0] - r, b = x[0] + r;
          double s = 0.0;
          const int j0 = std::max(0, int(std::floor((a + g.L) / h)));
          const int j1 = std::min(g.n - 1, int(std::floor((b + g.L) / h)));
          for (int j = j0; j <= j1; ++j) {
            const double clo = -g.L + j * h, chi = clo + h;
            s += density.v[j] * std::max(0.0, std::min(b, chi) - std::max(a, clo));
          }
          return s;
        }
        double s = 0.0;
        const double r2 = r * r;
        for (std::size_t i = 0; i < density.v.size(); ++i) {
          double c[2];
          g.coords(i, c);
          const double q = (c[0] - x[0]) * (c[0] - x[0]) + (c[1] - x[1]) * (c[1] - x[1]);
          if (q <= r2) s += density.v[i] * g.cell_volume();
        }
        return s;
      }
    }
    return 0.0;
  }

  double ball_mass1(double x, double r) const { return ball_mass(&x, r); }

  /// Dilation mu(./r): supports scale by r, total mass preserved.
  FiniteMeasure dilate(double r) const {
    if (!(r > 0.0)) throw std::domain_error("dilate: scale must be positive");
    FiniteMeasure m = *this;
    switch (kind) {
      case MeasureKind::Atomic:
        for (double& c : m.pts) c *= r;
        break;
      case MeasureKind::CantorUniform:
        m.cantor_offset *= r;
        m.cantor_scale *= r;
        break;
      case MeasureKind::RestrictedLebesgue:
        for (int k = 0; k < d; ++k) {
          m.box_lo[k] *= r;
          m.box_hi[k] *= r;
        }
        break;
      case MeasureKind::BallUniform:
        m.ball_center[0] *= r;
        m.ball_center[1] *= r;
        m.ball_radius *= r;
        break;
      case MeasureKind::GridDensity: {
        m.density.grid.L *= r;
        const double scale = std::pow(r, -d);
        for (double& v : m.density.v) v *= scale;
        break;
      }
    }
    return m;
  }

  FiniteMeasure translate(const double* z) const {
    FiniteMeasure m = *this;
    switch (kind) {
      case MeasureKind::Atomic:
        for (std::size_t i = 0; i < wts.size(); ++i)
          for (int k = 0; k < d; ++k) m.pts[i * d + k] += z[k];
        break;
      case MeasureKind::CantorUniform:
        m.cantor_offset += z[0];
        break;
      case MeasureKind::RestrictedLebesgue:
        for (int k = 0; k < d; ++k) {
          m.box_lo[k] += z[k];
          m.box_hi[k] += z[k];
        }
        break;
      case MeasureKind::BallUniform:
        for (int k = 0; k < d; ++k) m.ball_center[k] += z[k];
        break;
      case MeasureKind::GridDensity:
        throw std::domain_error("translate: not supported for grid densities");
    }
    return m;
  }

  FiniteMeasure scaled(double factor) const {
    if (!(factor > 0)) throw std::domain_error("scaled: factor must be positive");
    FiniteMeasure m = *this;
    m.mass *= factor;
    if (kind == MeasureKind::Atomic)
      for (double& w : m.wts) w *= factor;
    if (kind == MeasureKind::GridDensity)
      for (double& v : m.density.v) v *= factor;
    return m;
  }

  /// d(x, supp(mu)); exact for atoms/Cantor/boxes/balls, cell-resolution for
  /// grid densities.
  double support_distance(const double* x) const {
    switch (kind) {
      case MeasureKind::Atomic: {
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < wts.size(); ++i) {
          if (wts[i] <= 0.0) continue;
          double q = 0.0;
          for (int k = 0; k < d; ++k) {
            const double dd = pts[i * d + k] - x[k];
            q += dd * dd;
          }
          best = std::min(best, std::sqrt(q));
        }
        return best;
      }
      case MeasureKind::CantorUniform:
        return cantor_scale *
               detail::cantor_distance((x[0] - cantor_offset) / cantor_scale,
                                       cantor_ratio, cantor_depth);
      case MeasureKind::RestrictedLebesgue: {
        double q = 0.0;
        for (int k = 0; k < d; ++k) {
          const double dd = std::max({box_lo[k] - x[k], 0.0, x[k] - box_hi[k]});
          q += dd * dd;
        }
        return std::sqrt(q);
      }
      case MeasureKind::BallUniform: {
        double q = 0.0;
        for (int k = 0; k < d; ++k) {
          const double dd = x[k] - ball_center[k];
          q += dd * dd;
        }
        return std::max(0.0, std::sqrt(q) - ball_radius);
      }
      case MeasureKind::GridDensity: {
        double best = std::numeric_limits<double>::infinity();
        const Grid& g = density.grid;
        for (std::size_t i = 0; i < density.v.size(); ++i) {
          if (density.v[i] <= 0.0) continue;
          double c[2];
          g.coords(i, c);
          double q = 0.0;
          for (int k = 0; k < d; ++k) q += (c[k] - x[k]) * (c[k] - x[k]);
          best = std::min(best, std::sqrt(q));
        }
        return best;
      }
    }
    return std::numeric_limits<double>::infinity();
  }

  double support_distance1(double x) const { return support_distance(&x); }

  /// Points covering the support with mesh <= given (d-interleaved).
  std::vector<double> support_net(double mesh, std::size_t cap = 400000) const {
    std::vector<double> out;
    switch (kind) {
      case MeasureKind::Atomic:
        out = pts;
        break;
      case MeasureKind::CantorUniform: {
        int k = 0;
        double len = cantor_scale;
        while (len > mesh && k < 22) {
          len *= cantor_ratio;
          ++k;
        }
        // left/right endpoints of all depth-k cylinders
        std::vector<double> starts{0.0};
        for (int lvl = 0; lvl < k; ++lvl) {
          std::vector<double> next;
          next.reserve(starts.size() * 2);
          const double cl = std::pow(cantor_ratio, lvl);
          for (double s0 : starts) {
            next.push_back(s0);
            next.push_back(s0 + cl * (1.0 - cantor_ratio));
          }
          starts.swap(next);
          if (starts.size() * 2 > cap) break;
        }
        const double cl = std::pow(cantor_ratio, k);
        for (double s0 : starts) {
          out.push_back(cantor_offset + cantor_scale * s0);
          out.push_back(cantor_offset + cantor_scale * (s0 + cl));
        }
        break;
      }
      case MeasureKind::RestrictedLebesgue: {
        if (d == 1) {
          const int n = std::max(1, int(std::ceil((box_hi[0] - box_lo[0]) / mesh)));
          for (int i = 0; i <= n; ++i)
            out.push_back(box_lo[0] + (box_hi[0] - box_lo[0]) * i / n);
        } else {
          const int nx = std::max(1, int(std::ceil((box_hi[0] - box_lo[0]) / mesh)));
          const int ny = std::max(1, int(std::ceil((box_hi[1] - box_lo[1]) / mesh)));
          for (int i = 0; i <= nx && out.size() < 2 * cap; ++i)
            for (int j = 0; j <= ny; ++j) {
              out.push_back(box_lo[0] + (box_hi[0] - box_lo[0]) * i / nx);
              out.push_back(box_lo[1] + (box_hi[1] - box_lo[1]) * j / ny);
            }
        }
        break;
      }
      case MeasureKind::BallUniform: {
        const int n = std::max(1, int(std::ceil(2 * ball_radius / mesh)));
        if (d == 1) {
          for (int i = 0; i <= n; ++i)
            out.push_back(ball_center[0] - ball_radius + 2 * ball_radius * i / n);
        } else {
          for (int i = 0; i <= n && out.size() < 2 * cap; ++i)
            for (int j = 0; j <= n; ++j) {
              const double x = ball_center[0] - ball_radius + 2 * ball_radius * i / n;
              const double y = ball_center[1] - ball_radius + 2 * ball_radius * j / n;
              const double dx = x - ball_center[0], dy = y - ball_center[1];
              if (dx * dx + dy * dy <= ball_radius * ball_radius * (1 + 1e-12)) {
                out.push_back(x);
                out.push_back(y);
              }
            }
        }
        break;
      }
      case MeasureKind::GridDensity: {
        const Grid& g = density.grid;
        if (g.h() > mesh * 2.0)
          throw resolution_error("support_net: grid coarser than requested mesh");
        for (std::size_t i = 0; i < density.v.size(); ++i) {
          if (density.v[i] <= 0.0) continue;
          double c[2];
          g.coords(i, c);
          for (int k = 0; k < d; ++k) out.push_back(c[k]);
        }
        break;
      }
    }
    // deterministic thinning if over cap
    const std::size_t npts = out.size() / d;
    if (npts > cap) {
      std::vector<double> thin;
      const std::size_t stride = (npts + cap - 1) / cap;
      for (std::size_t i = 0; i < npts; i += stride)
        for (int k = 0; k < d; ++k) thin.push_back(out[i * d + k]);
      out.swap(thin);
    }
    return out;
  }

  /// Approximate by point masses for quadrature against smooth kernels.
  void atomize(int target_atoms, std::vector<double>& apts,
               std::vector<double>& awts) const {
    apts.clear();
    awts.clear();
    switch (kind) {
      case MeasureKind::Atomic:
        apts = pts;
        awts = wts;
        return;
      case MeasureKind::CantorUniform: {
        int k = 0;
        while ((1 << (k + 1)) <= target_atoms && k < cantor_depth && k < 20) ++k;
        const double cl = std::pow(cantor_ratio, k);
        std::vector<double> starts{0.0};
        for (int lvl = 0; lvl < k; ++lvl) {
          std::vector<double> next;
          next.reserve(starts.size() * 2);
          const double c2 = std::pow(cantor_ratio, lvl);
          for (double s0 : starts) {
            next.push_back(s0);
            next.push_back(s0 + c2 * (1.0 - cantor_ratio));
          }
          starts.swap(next);
        }
        const double w = mass / double(starts.size());
        for (double s0 : starts) {
          apts.push_back(cantor_offset + cantor_scale * (s0 + 0.5 * cl));
          awts.push_back(w);
        }
        return;
      }
      case MeasureKind::RestrictedLebesgue: {
        if (d == 1) {
          const int n = std::max(1, target_atoms);
          const double w = mass / n, len = box_hi[0] - box_lo[0];
          for (int i = 0; i < n; ++i) {
            apts.push_back(box_lo[0] + len * (i + 0.5) / n);
            awts.push_back(w);
          }
        } else {
          const int n = std::max(1, int(std::sqrt(double(target_atoms))));
          const double w = mass / (double(n) * n);
          for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) {
              apts.push_back(box_lo[0] + (box_hi[0] - box_lo[0]) * (i + 0.5) / n);
              apts.push_back(box_lo[1] + (box_hi[1] - box_lo[1]) * (j + 0.5) / n);
              awts.push_back(w);
            }
        }
        return;
      }
      case MeasureKind::BallUniform: {
        if (d == 1) {
          const int n = std::max(1, target_atoms);
          const double w = mass / n;
          for (int i = 0; i < n; ++i) {
            apts.push_back(ball_center[0] - ball_radius +
                           2 * ball_radius * (i + 0.5) / n);
            awts.push_back(w);
          }
        } else {
          const int n = std::max(2, int(std::sqrt(double(target_atoms) * 4 / pi)));
          std::vector<std::array<double, 2>> keep;
          for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) {
              const double x = ball_center[0] - ball_radius + 2 * ball_radius * (i + 0.5) / n;
              const double y = ball_center[1] - ball_radius + 2 * ball_radius * (j + 0.5) / n;
              const double dx = x - ball_center[0], dy = y - ball_center[1];
              if (dx * dx + dy * dy <= ball_radius * ball_radius) keep.push_back({x, y});
            }
          const double w = mass / double(keep.size());
          for (auto& p : keep) {
            apts.push_back(p[0]);
            apts.push_back(p[1]);
            awts.push_back(w);
          }
        }
        return;
      }
      case MeasureKind::GridDensity: {
        const Grid& g = density.grid;
        for (std::size_t i = 0; i < density.v.size(); ++i) {
          if (density.v[i] <= 0.0) continue;
          double c[2];
          g.coords(i, c);
          for (int k = 0; k < d; ++k) apts.push_back(c[k]);
          awts.push_back(density.v[i] * g.cell_volume());
        }
        return;
      }
    }
  }

  /// Bounding box of the support.
  void bounds(double* lo, double* hi) const {
    switch (kind) {
      case MeasureKind::Atomic: {
        for (int k = 0; k < d; ++k) {
          lo[k] = std::numeric_limits<double>::infinity();
          hi[k] = -lo[k];
        }
        for (std::size_t i = 0; i < wts.size(); ++i)
          for (int k = 0; k < d; ++k) {
            lo[k] = std::min(lo[k], pts[i * d + k]);
            hi[k] = std::max(hi[k], pts[i * d + k]);
          }
        return;
      }
      case MeasureKind::CantorUniform:
        lo[0] = cantor_offset;
        hi[0] = cantor_offset + cantor_scale;
        return;
      case MeasureKind::RestrictedLebesgue:
        for (int k = 0; k < d; ++k) {
          lo[k] = box_lo[k];
          hi[k] = box_hi[k];
        }
        return;
      case MeasureKind::BallUniform:
        for (int k = 0; k < d; ++k) {
          lo[k] = ball_center[k] - ball_radius;
          hi[k] = ball_center[k] + ball_radius;
        }
        return;
      case MeasureKind::GridDensity:
        for (int k = 0; k < d; ++k) {
          lo[k] = -density.grid.L;
          hi[k] = density.grid.L;
        }
        return;
    }
  }

  double diameter() const {
    double lo[2], hi[2];
    bounds(lo, hi);
    double q = 0.0;
    for (int k = 0; k < d; ++k) q += (hi[k] - lo[k]) * (hi[k] - lo[k]);
    return std::sqrt(q);
  }

  std::string describe() const {
    char buf[160];
    switch (kind) {
      case MeasureKind::Atomic:
        std::snprintf(buf, sizeof buf, "atoms(n=%zu,mass=%g)", wts.size(), mass);
        break;
      case MeasureKind::CantorUniform:
        std::snprintf(buf, sizeof buf, "cantor(ratio=%g,depth=%d,mass=%g,off=%g,scale=%g)",
                      cantor_ratio, cantor_depth, mass, cantor_offset, cantor_scale);
        break;
      case MeasureKind::RestrictedLebesgue:
        std::snprintf(buf, sizeof buf, "box(mass=%g)", mass);
        break;
      case MeasureKind::BallUniform:
        std::snprintf(buf, sizeof buf, "ball(r=%g,mass=%g)", ball_radius, mass);
        break;
      case MeasureKind::GridDensity:
        std::snprintf(buf, sizeof buf, "grid-density(mass=%g)", mass);
        break;
    }
    return buf;
  }
};

}  // namespace fraclab
