#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace fraclab {

/// Uniform cell-centered grid on the box [-L, L]^d, d in {1,2}.
/// n cells per axis (a power of two so convolutions pad cleanly);
/// spacing h = 2L/n; cell centers x_j = -L + (j + 1/2) h.
struct Grid {
  int d = 1;
  double L = 1.0;
  int n = 0;

  Grid() = default;
  Grid(int d_, double L_, int n_) : d(d_), L(L_), n(n_) {
    if (d != 1 && d != 2) throw std::domain_error("Grid: d must be 1 or 2");
    if (L <= 0) throw std::domain_error("Grid: L must be positive");
    if (n < 4 || (n & (n - 1)) != 0)
      throw std::domain_error("Grid: n must be a power of two >= 4");
  }

  double h() const { return 2.0 * L / n; }
  std::size_t size() const { return d == 1 ? std::size_t(n) : std::size_t(n) * n; }
  double cell_volume() const { return d == 1 ? h() : h() * h(); }

  double axis(int j) const { return -L + (j + 0.5) * h(); }

  // flat index <-> coordinates (row-major, x fastest in d=2)
  void coords(std::size_t idx, double* x) const {
    if (d == 1) {
      x[0] = axis(int(idx));
    } else {
      x[0] = axis(int(idx % n));
      x[1] = axis(int(idx / n));
    }
  }

  bool operator==(const Grid& o) const { return d == o.d && L == o.L && n == o.n; }
};

/// Sampled nonnegative function on a Grid (values at cell centers).
struct GridFunction {
  Grid grid;
  std::vector<double> v;

  GridFunction() = default;
  explicit GridFunction(const Grid& g, double fill = 0.0)
      : grid(g), v(g.size(), fill) {}

  double total_mass() const {
    double s = 0.0;
    for (double x : v) s += x;
    return s * grid.cell_volume();
  }

  double max_value() const {
    double m = 0.0;
    for (double x : v) m = std::max(m, x);
    return m;
  }

  /// Multilinear interpolation clamped to the box.
  double operator()(const double* x) const {
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
    auto at = [&](int ix, int iy) { return v[std::size_t(iy) * n + ix]; };
    return (1 - wy) * ((1 - wx) * at(jx, jy) + wx * at(jx + 1, jy)) +
           wy * ((1 - wx) * at(jx, jy + 1) + wx * at(jx + 1, jy + 1));
  }

  double at1(double x) const { return (*this)(&x); }

  bool inside(const double* x) const {
    for (int k = 0; k < grid.d; ++k)
      if (x[k] < -grid.L || x[k] > grid.L) return false;
    return true;
  }
};

}  // namespace fraclab
