#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "vortex/error.hpp"
#include "vortex/parallel.hpp"

namespace vortex {

struct Point {
  double x = 0.0;
  double y = 0.0;
  friend bool operator==(const Point&, const Point&) = default;
};

inline double distance(const Point& a, const Point& b) { return std::hypot(a.x - b.x, a.y - b.y); }

// ---------------------------------------------------------------------------
// Coupling matrix K = (1/p) [[p+q, p-q], [p-q, p+q]]

enum class definiteness { positive_definite, indefinite };

struct CouplingMatrix {
  double k11 = 0.0;
  double k12 = 0.0;
  double det = 0.0;
  definiteness tag = definiteness::indefinite;

  bool positive_definite() const { return tag == definiteness::positive_definite; }
  // Multiplier ratio |K| / k12^2 fixed by the Lagrange conditions.
  double sigma() const { return det / (k12 * k12); }
};

inline CouplingMatrix coupling_from(double p, double q) {
  if (!(p > 0.0)) throw error(errc::validation, "coupling requires p > 0");
  if (q == 0.0) throw error(errc::validation, "coupling requires q != 0");
  if (p == q) throw error(errc::validation, "coupled system requires p != q");
  CouplingMatrix K;
  K.k11 = (p + q) / p;
  K.k12 = (p - q) / p;
  K.det = 4.0 * q / p;
  K.tag = q > 0.0 ? definiteness::positive_definite : definiteness::indefinite;
  return K;
}

// ---------------------------------------------------------------------------
// Grid on [-R, R]^2 with n nodes per axis (n odd, origin is a node).

class Grid {
 public:
  Grid() = default;
  Grid(double R, int n) : R_(R), n_(n) {
    if (!(R > 0.0) || !std::isfinite(R)) throw error(errc::invalid_argument, "grid requires R > 0");
    if (n < 3 || n % 2 == 0) throw error(errc::invalid_argument, "grid requires odd n >= 3");
    h_ = 2.0 * R / (n - 1);
  }

  double R() const { return R_; }
  int n() const { return n_; }
  double spacing() const { return h_; }
  std::size_t size() const { return static_cast<std::size_t>(n_) * static_cast<std::size_t>(n_); }
  double coord(int i) const { return i == (n_ - 1) / 2 ? 0.0 : -R_ + i * h_; }
  std::size_t index(int i, int j) const { return static_cast<std::size_t>(j) * n_ + i; }
  // 1D trapezoid weight of node i
  double weight1(int i) const { return (i == 0 || i == n_ - 1) ? 0.5 * h_ : h_; }
  double weight(int i, int j) const { return weight1(i) * weight1(j); }
  double area() const { return 4.0 * R_ * R_; }

  friend bool operator==(const Grid& a, const Grid& b) { return a.R_ == b.R_ && a.n_ == b.n_; }

 private:
  double R_ = 1.0;
  int n_ = 3;
  double h_ = 1.0;
};

// Nodal values, row-major: values[j * n + i] sits at (coord(i), coord(j)).
struct ScalarField {
  Grid grid;
  std::vector<double> values;

  ScalarField() = default;
  explicit ScalarField(const Grid& g, double fill = 0.0) : grid(g), values(g.size(), fill) {}

  double& operator()(int i, int j) { return values[grid.index(i, j)]; }
  double operator()(int i, int j) const { return values[grid.index(i, j)]; }
  std::size_t size() const { return values.size(); }
};

inline void require_same_grid(const ScalarField& a, const ScalarField& b) {
  if (!(a.grid == b.grid)) throw error(errc::invalid_argument, "fields live on different grids");
}

template <class F>
ScalarField sample(const Grid& g, F&& f) {
  ScalarField out(g);
  const int n = g.n();
  for_rows(n, [&](std::size_t j) {
    const double y = g.coord(static_cast<int>(j));
    for (int i = 0; i < n; ++i) out.values[g.index(i, static_cast<int>(j))] = f(g.coord(i), y);
  });
  return out;
}

inline bool all_finite(const ScalarField& f) {
  return std::all_of(f.values.begin(), f.values.end(), [](double v) { return std::isfinite(v); });
}

// ---------------------------------------------------------------------------
// Model parameters

struct ModelParams {
  double p = 0.0;
  double q = 0.0;
  std::vector<Point> vortices_up;
  std::vector<Point> vortices_down;
  double alpha0 = 0.0;
  double beta0 = 0.0;
  double kappa = 5.0;
  double delta = 1.0;
  double rho_bar = 1.0;
  double R = 6.0;
  int n = 513;

  int N1() const { return static_cast<int>(vortices_up.size()); }
  int N2() const { return static_cast<int>(vortices_down.size()); }
};

inline double derived_alpha(const ModelParams& m, const CouplingMatrix& K) {
  return m.alpha0 + 4.0 * K.k12 / K.k11 * m.N1() - 4.0 * m.N2();
}

inline double derived_beta(const ModelParams& m, const CouplingMatrix& K) {
  return m.beta0 - 4.0 * K.k12 / K.k11 * m.N1();
}

namespace detail {
inline std::vector<Point> distinct(const std::vector<Point>& pts) {
  std::vector<Point> out;
  for (const auto& p : pts)
    if (std::find(out.begin(), out.end(), p) == out.end()) out.push_back(p);
  return out;
}

inline double min_pairwise(const std::vector<Point>& pts) {
  auto d = distinct(pts);
  double best = INFINITY;
  for (std::size_t a = 0; a < d.size(); ++a)
    for (std::size_t b = a + 1; b < d.size(); ++b) best = std::min(best, distance(d[a], d[b]));
  return best;
}
}  // namespace detail

// min(1, half the smallest distance between distinct same-family vortices) / 2
inline double default_delta(const std::vector<Point>& up, const std::vector<Point>& down) {
  double m = std::min(detail::min_pairwise(up), detail::min_pairwise(down));
  return std::min(1.0, 0.5 * m) / 2.0;
}

// Throws errc::validation naming the violated condition.
inline void validate(const ModelParams& m) {
  auto fail = [](const std::string& s) { throw error(errc::validation, s); };
  if (!(m.p > 0.0)) fail("p > 0 required");
  if (m.q == 0.0) fail("q != 0 required");
  if (m.p == m.q) fail("p != q required (the two layers must be coupled)");
  if (!(m.kappa > 4.0)) fail("kappa > 4 required for the weight h0 = (1+|x|^2)^(-kappa/2)");
  if (!(m.delta > 0.0)) fail("delta > 0 required");
  if (!(m.R > 0.0)) fail("R > 0 required");
  if (m.n < 33 || m.n % 2 == 0) fail("n must be odd and >= 33");
  if (m.rho_bar < 0.0) fail("rho_bar >= 0 required");
  const double lim = m.R - 2.0 * m.delta;
  for (const auto* fam : {&m.vortices_up, &m.vortices_down})
    for (const auto& pt : *fam)
      if (!(std::abs(pt.x) < lim && std::abs(pt.y) < lim)) {
        std::ostringstream os;
        os << "vortex point (" << pt.x << ", " << pt.y << ") must lie strictly inside [-R+2delta, R-2delta]^2";
        fail(os.str());
      }
  if (detail::min_pairwise(m.vortices_up) < 2.0 * m.delta)
    fail("balls B_delta(p_j) must be pairwise disjoint: |p_i - p_j| >= 2 delta");
  if (detail::min_pairwise(m.vortices_down) < 2.0 * m.delta)
    fail("balls B_delta(q_j) must be pairwise disjoint: |q_i - q_j| >= 2 delta");
  const CouplingMatrix K = coupling_from(m.p, m.q);
  const double a = derived_alpha(m, K);
  const double b = derived_beta(m, K);
  if (!(a > 0.0)) fail("alpha = alpha0 + (4 k12/k11) N1 - 4 N2 > 0 required");
  if (!(b > 0.0)) fail("beta = beta0 - (4 k12/k11) N1 > 0 required");
}

// ---------------------------------------------------------------------------
// Quadrature

inline double trapezoid_integral(const ScalarField& f) {
  const Grid& g = f.grid;
  const int n = g.n();
  return sum_rows(n, [&](std::size_t jj) {
    const int j = static_cast<int>(jj);
    double s = 0.0;
    for (int i = 0; i < n; ++i) s += g.weight1(i) * f.values[g.index(i, j)];
    return g.weight1(j) * s;
  });
}

// Trapezoid integral of a * b without forming the product field.
inline double trapezoid_inner(const ScalarField& a, const ScalarField& b) {
  require_same_grid(a, b);
  const Grid& g = a.grid;
  const int n = g.n();
  return sum_rows(n, [&](std::size_t jj) {
    const int j = static_cast<int>(jj);
    double s = 0.0;
    for (int i = 0; i < n; ++i) {
      const std::size_t k = g.index(i, j);
      s += g.weight1(i) * a.values[k] * b.values[k];
    }
    return g.weight1(j) * s;
  });
}

// ---------------------------------------------------------------------------
// Differential operators

// 5-point stencil inside; one-sided second-order second differences on the boundary.
inline ScalarField laplacian(const ScalarField& u) {
  const Grid& g = u.grid;
  const int n = g.n();
  const double ih2 = 1.0 / (g.spacing() * g.spacing());
  ScalarField out(g);
  auto d2 = [&](int i, int j, int di, int dj) {
    auto at = [&](int s) { return u(i + s * di, j + s * dj); };
    const int pos = di != 0 ? i : j;
    if (pos == 0) return (2.0 * at(0) - 5.0 * at(1) + 4.0 * at(2) - at(3)) * ih2;
    if (pos == n - 1) return (2.0 * at(0) - 5.0 * at(-1) + 4.0 * at(-2) - at(-3)) * ih2;
    return (at(-1) - 2.0 * at(0) + at(1)) * ih2;
  };
  if (n < 4) {
    // too small for one-sided stencils: interior only
    for (int j = 1; j < n - 1; ++j)
      for (int i = 1; i < n - 1; ++i) out(i, j) = d2(i, j, 1, 0) + d2(i, j, 0, 1);
    return out;
  }
  for_rows(n, [&](std::size_t jj) {
    const int j = static_cast<int>(jj);
    for (int i = 0; i < n; ++i) out(i, j) = d2(i, j, 1, 0) + d2(i, j, 0, 1);
  });
  return out;
}

// Fourth-order central Laplacian for nodes at least two away from the boundary;
// the outer two rings fall back to the second-order operator.
inline ScalarField laplacian4(const ScalarField& u) {
  const Grid& g = u.grid;
  const int n = g.n();
  const double c = 1.0 / (12.0 * g.spacing() * g.spacing());
  ScalarField out = laplacian(u);
  for_rows(n, [&](std::size_t jj) {
    const int j = static_cast<int>(jj);
    if (j < 2 || j > n - 3) return;
    for (int i = 2; i < n - 2; ++i) {
      const double uxx = -u(i - 2, j) + 16.0 * u(i - 1, j) - 30.0 * u(i, j) + 16.0 * u(i + 1, j) - u(i + 2, j);
      const double uyy = -u(i, j - 2) + 16.0 * u(i, j - 1) - 30.0 * u(i, j) + 16.0 * u(i, j + 1) - u(i, j + 2);
      out(i, j) = c * (uxx + uyy);
    }
  });
  return out;
}

// Mirrored (homogeneous Neumann) 5-point Laplacian. It satisfies
// W * neumann_laplacian(u) = -(1/2) d/du gradient_sq_integral(u) node by node.
inline ScalarField neumann_laplacian(const ScalarField& u) {
  const Grid& g = u.grid;
  const int n = g.n();
  const double ih2 = 1.0 / (g.spacing() * g.spacing());
  ScalarField out(g);
  auto nb = [n](int i, int s) {
    int k = i + s;
    if (k < 0) k = 1;
    if (k > n - 1) k = n - 2;
    return k;
  };
  for_rows(n, [&](std::size_t jj) {
    const int j = static_cast<int>(jj);
    for (int i = 0; i < n; ++i) {
      const double c = u(i, j);
      const double lx = u(nb(i, -1), j) - 2.0 * c + u(nb(i, 1), j);
      const double ly = u(i, nb(j, -1)) - 2.0 * c + u(i, nb(j, 1));
      out(i, j) = (lx + ly) * ih2;
    }
  });
  return out;
}

// Integral of |grad u|^2 from forward differences on grid edges, each edge
// weighted by the trapezoid weight of its transverse coordinate.
inline double gradient_sq_integral(const ScalarField& u) {
  const Grid& g = u.grid;
  const int n = g.n();
  const double h = g.spacing();
  return sum_rows(n, [&](std::size_t jj) {
    const int j = static_cast<int>(jj);
    double sx = 0.0, sy = 0.0;
    for (int i = 0; i + 1 < n; ++i) {
      const double d = u(i + 1, j) - u(i, j);
      sx += d * d;
    }
    for (int i = 0; i < n; ++i) {
      if (j + 1 < n) {
        const double d = u(i, j + 1) - u(i, j);
        sy += g.weight1(i) * d * d;
      }
    }
    return g.weight1(j) / h * sx + sy / h;
  });
}

}  // namespace vortex
