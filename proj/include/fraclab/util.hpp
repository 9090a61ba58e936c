#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

namespace fraclab {

inline constexpr double pi = 3.14159265358979323846;

// Error taxonomy: domain errors use std::domain_error directly; these carry
// the measured bound / residual in the message.
struct accuracy_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct convergence_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct resolution_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct consistency_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Gauss-Legendre panels
// ---------------------------------------------------------------------------

struct GaussLegendre16 {
  // nodes (positive half) and weights for the 16-point rule on [-1,1]
  static constexpr double x[8] = {
      0.0950125098376374, 0.2816035507792589, 0.4580167776572274,
      0.6178762444026438, 0.7554044083550030, 0.8656312023878318,
      0.9445750230732326, 0.9894009349916499};
  static constexpr double w[8] = {
      0.1894506104550685, 0.1826034150449236, 0.1691565193950025,
      0.1495959888165767, 0.1246289712555339, 0.0951585116824928,
      0.0622535239386479, 0.0271524594117541};
};

/// 16-point Gauss-Legendre quadrature of f over [a,b].
template <class F>
double gl16(F&& f, double a, double b) {
  const double mid = 0.5 * (a + b), half = 0.5 * (b - a);
  double s = 0.0;
  for (int i = 0; i < 8; ++i) {
    const double dx = half * GaussLegendre16::x[i];
    s += GaussLegendre16::w[i] * (f(mid + dx) + f(mid - dx));
  }
  return s * half;
}

/// Composite gl16 over consecutive panel edges.
template <class F>
double gl16_panels(F&& f, const std::vector<double>& edges) {
  double s = 0.0;
  for (std::size_t i = 0; i + 1 < edges.size(); ++i)
    s += gl16(f, edges[i], edges[i + 1]);
  return s;
}

/// Log-spaced panel edges from a to b (a > 0), n panels.
inline std::vector<double> log_edges(double a, double b, int n) {
  std::vector<double> e(n + 1);
  const double la = std::log(a), lb = std::log(b);
  for (int i = 0; i <= n; ++i) e[i] = std::exp(la + (lb - la) * i / n);
  e.front() = a;
  e.back() = b;
  return e;
}

// ---------------------------------------------------------------------------
// Monotone cubic (PCHIP) interpolation
// ---------------------------------------------------------------------------

// Fritsch-Carlson shape-preserving cubic. Keeps interpolant monotone wherever
// the data are, which we rely on for kernel tables (no spurious wiggles in
// heavy tails).
class Pchip {
 public:
  Pchip() = default;
  Pchip(std::vector<double> x, std::vector<double> y)
      : x_(std::move(x)), y_(std::move(y)) {
    const std::size_t n = x_.size();
    if (n < 2 || y_.size() != n)
      throw std::invalid_argument("Pchip: need >= 2 nodes, matching sizes");
    d_.resize(n);
    std::vector<double> h(n - 1), del(n - 1);
    for (std::size_t i = 0; i + 1 < n; ++i) {
      h[i] = x_[i + 1] - x_[i];
      if (h[i] <= 0) throw std::invalid_argument("Pchip: x not increasing");
      del[i] = (y_[i + 1] - y_[i]) / h[i];
    }
    if (n == 2) {
      d_[0] = d_[1] = del[0];
      return;
    }
    for (std::size_t i = 1; i + 1 < n; ++i) {
      if (del[i - 1] * del[i] <= 0.0) {
        d_[i] = 0.0;
      } else {
        const double w1 = 2 * h[i] + h[i - 1], w2 = h[i] + 2 * h[i - 1];
        d_[i] = (w1 + w2) / (w1 / del[i - 1] + w2 / del[i]);
      }
    }
    d_[0] = edge_slope(h[0], h[1], del[0], del[1]);
    d_[n - 1] = edge_slope(h[n - 2], h[n - 3], del[n - 2], del[n - 3]);
  }

  double operator()(double xq) const {
    const std::size_t n = x_.size();
    if (xq <= x_.front()) return y_.front() + d_.front() * (xq - x_.front());
    if (xq >= x_.back()) return y_.back() + d_.back() * (xq - x_.back());
    std::size_t i =
        std::upper_bound(x_.begin(), x_.end(), xq) - x_.begin() - 1;
    if (i >= n - 1) i = n - 2;
    const double h = x_[i + 1] - x_[i], t = (xq - x_[i]) / h;
    const double y0 = y_[i], y1 = y_[i + 1], m0 = d_[i] * h, m1 = d_[i + 1] * h;
    const double t2 = t * t, t3 = t2 * t;
    return (2 * t3 - 3 * t2 + 1) * y0 + (t3 - 2 * t2 + t) * m0 +
           (-2 * t3 + 3 * t2) * y1 + (t3 - t2) * m1;
  }

  bool empty() const { return x_.empty(); }
  const std::vector<double>& xs() const { return x_; }
  const std::vector<double>& ys() const { return y_; }

 private:
  static double edge_slope(double h0, double h1, double del0, double del1) {
    double d = ((2 * h0 + h1) * del0 - h0 * del1) / (h0 + h1);
    if (d * del0 <= 0)
      d = 0;
    else if (del0 * del1 < 0 && std::abs(d) > 3 * std::abs(del0))
      d = 3 * del0;
    return d;
  }
  std::vector<double> x_, y_, d_;
};

// ---------------------------------------------------------------------------
// Radix-2 complex FFT (power-of-two sizes), used for grid convolutions
// ---------------------------------------------------------------------------

inline void fft_inplace(std::vector<std::complex<double>>& a, bool inverse) {
  const std::size_t n = a.size();
  if (n == 0 || (n & (n - 1)) != 0)
    throw std::invalid_argument("fft: size must be a power of two");
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = 2 * pi / double(len) * (inverse ? 1.0 : -1.0);
    const std::complex<double> wl(std::cos(ang), std::sin(ang));
    for (std::size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (std::size_t k = 0; k < len / 2; ++k) {
        const auto u = a[i + k];
        const auto v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
        w *= wl;
      }
    }
  }
  if (inverse)
    for (auto& z : a) z /= double(n);
}

inline std::size_t next_pow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

// ---------------------------------------------------------------------------
// Misc small helpers
// ---------------------------------------------------------------------------

/// Least-squares line fit; returns {slope, intercept}.
inline std::pair<double, double> linear_fit(const std::vector<double>& xs,
                                            const std::vector<double>& ys) {
  const std::size_t n = xs.size();
  if (n < 2 || ys.size() != n)
    throw std::invalid_argument("linear_fit: need >= 2 points");
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sx += xs[i];
    sy += ys[i];
    sxx += xs[i] * xs[i];
    sxy += xs[i] * ys[i];
  }
  const double det = n * sxx - sx * sx;
  if (det == 0) throw std::runtime_error("linear_fit: degenerate abscissae");
  const double slope = (n * sxy - sx * sy) / det;
  return {slope, (sy - slope * sx) / n};
}

/// Deterministic chunked parallel loop: fn(i) for i in [0,n). Results must be
/// written to pre-allocated per-index slots; reduction order is the caller's.
inline void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn,
                         unsigned nthreads = 0) {
  if (n == 0) return;
  unsigned hw = nthreads ? nthreads : std::thread::hardware_concurrency();
  if (hw <= 1 || n == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  hw = unsigned(std::min<std::size_t>(hw, n));
  std::vector<std::thread> pool;
  pool.reserve(hw);
  std::vector<std::exception_ptr> errs(hw);
  for (unsigned t = 0; t < hw; ++t) {
    pool.emplace_back([&, t]() {
      try {
        for (std::size_t i = t; i < n; i += hw) fn(i);
      } catch (...) {
        errs[t] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errs)
    if (e) std::rethrow_exception(e);
}

/// FNV-1a 64-bit hash, used for plan/config hashes in manifests.
inline std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

inline std::string hash_hex(std::uint64_t h) {
  static const char* digits = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[i] = digits[h & 0xf];
    h >>= 4;
  }
  return out;
}

}  // namespace fraclab
