#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "vortex/lbfgs.hpp"

using namespace vortex;

namespace {

struct Vec {
  std::vector<double> v;
};

double dot(const Vec& a, const Vec& b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.v.size(); ++k) s += a.v[k] * b.v[k];
  return s;
}
void axpy(double a, const Vec& x, Vec& y) {
  for (std::size_t k = 0; k < y.v.size(); ++k) y.v[k] += a * x.v[k];
}
void scale(Vec& x, double a) {
  for (auto& e : x.v) e *= a;
}

double inf_norm(const Vec& g) {
  double m = 0.0;
  for (double e : g.v) m = std::max(m, std::abs(e));
  return m;
}

// f = sum_k c_k (x_k - k)^2 / 2 with spread-out curvatures
struct Quadratic {
  std::vector<double> c;
  int evals = 0;
  Evaluation<Vec> evaluate(const Vec& x) {
    ++evals;
    Evaluation<Vec> e;
    e.grad.v.resize(x.v.size());
    for (std::size_t k = 0; k < x.v.size(); ++k) {
      const double d = x.v[k] - static_cast<double>(k);
      e.value += 0.5 * c[k] * d * d;
      e.grad.v[k] = c[k] * d;
    }
    e.stationarity = inf_norm(e.grad);
    return e;
  }
  Vec precondition(const Vec& g) const { return g; }
  void project(Vec&) const {}
};

// Chained Rosenbrock
struct Rosenbrock {
  Evaluation<Vec> evaluate(const Vec& x) {
    Evaluation<Vec> e;
    const std::size_t n = x.v.size();
    e.grad.v.assign(n, 0.0);
    for (std::size_t k = 0; k + 1 < n; ++k) {
      const double a = x.v[k + 1] - x.v[k] * x.v[k], b = 1.0 - x.v[k];
      e.value += 100.0 * a * a + b * b;
      e.grad.v[k] += -400.0 * a * x.v[k] - 2.0 * b;
      e.grad.v[k + 1] += 200.0 * a;
    }
    e.stationarity = inf_norm(e.grad);
    return e;
  }
  Vec precondition(const Vec& g) const { return g; }
  void project(Vec&) const {}
};

// Sum-to-zero subspace via projection
struct ProjectedQuadratic {
  Evaluation<Vec> evaluate(const Vec& x) {
    Evaluation<Vec> e;
    e.grad.v.resize(x.v.size());
    for (std::size_t k = 0; k < x.v.size(); ++k) {
      const double d = x.v[k] - 1.0 - static_cast<double>(k);
      e.value += 0.5 * d * d;
      e.grad.v[k] = d;
    }
    Vec pg = e.grad;
    project(pg);
    e.stationarity = inf_norm(pg);
    return e;
  }
  Vec precondition(const Vec& g) const { return g; }
  void project(Vec& d) const {
    double m = 0.0;
    for (double e : d.v) m += e;
    m /= static_cast<double>(d.v.size());
    for (auto& e : d.v) e -= m;
  }
};

// Gradient deliberately inconsistent with the value
struct Liar {
  Evaluation<Vec> evaluate(const Vec& x) {
    Evaluation<Vec> e;
    e.value = x.v[0];
    e.grad.v = {-1.0};
    e.stationarity = 1.0;
    return e;
  }
  Vec precondition(const Vec& g) const { return g; }
  void project(Vec&) const {}
};

}  // namespace

TEST(Lbfgs, IllConditionedQuadratic) {
  Quadratic q;
  for (int k = 0; k < 50; ++k) q.c.push_back(std::pow(10.0, 3.0 * k / 49.0));
  LbfgsOptions o;
  o.grad_tol = 1e-10;
  o.max_iters = 1000;
  auto r = lbfgs_minimize(q, Vec{std::vector<double>(50, 0.0)}, o);
  ASSERT_TRUE(r.converged);
  EXPECT_EQ(r.stop_reason, "converged");
  for (int k = 0; k < 50; ++k) EXPECT_NEAR(r.x.v[k], k, 1e-9);
  for (std::size_t k = 1; k < r.trace.size(); ++k) EXPECT_LE(r.trace[k].value, r.trace[k - 1].value);
}

TEST(Lbfgs, MemoryBeatsSteepestDescent) {
  Quadratic q;
  for (int k = 0; k < 30; ++k) q.c.push_back(1.0 + 99.0 * k / 29.0);
  LbfgsOptions o;
  o.grad_tol = 1e-8;
  o.max_iters = 20000;
  auto with = lbfgs_minimize(q, Vec{std::vector<double>(30, 0.0)}, o);
  o.memory = 0;
  auto without = lbfgs_minimize(q, Vec{std::vector<double>(30, 0.0)}, o);
  ASSERT_TRUE(with.converged);
  ASSERT_TRUE(without.converged);
  EXPECT_LT(with.iters * 3, without.iters);
}

TEST(Lbfgs, Rosenbrock) {
  Rosenbrock f;
  LbfgsOptions o;
  o.grad_tol = 1e-9;
  o.max_iters = 5000;
  Vec x0{{-1.2, 1.0, -1.2, 1.0, -1.2, 1.0}};
  auto r = lbfgs_minimize(f, x0, o);
  ASSERT_TRUE(r.converged) << r.stop_reason;
  for (double e : r.x.v) EXPECT_NEAR(e, 1.0, 1e-7);
  for (std::size_t k = 1; k < r.trace.size(); ++k) EXPECT_LE(r.trace[k].value, r.trace[k - 1].value);
}

TEST(Lbfgs, StaysOnProjectedSubspace) {
  ProjectedQuadratic f;
  LbfgsOptions o;
  o.grad_tol = 1e-12;
  auto r = lbfgs_minimize(f, Vec{std::vector<double>(8, 0.0)}, o);
  ASSERT_TRUE(r.converged);
  double s = 0.0;
  for (double e : r.x.v) s += e;
  EXPECT_NEAR(s, 0.0, 1e-12);
  // constrained minimizer: targets minus their mean
  for (int k = 0; k < 8; ++k) EXPECT_NEAR(r.x.v[k], k - 3.5, 1e-10);
}

TEST(Lbfgs, IterationBudget) {
  Rosenbrock f;
  LbfgsOptions o;
  o.max_iters = 3;
  int calls = 0;
  const std::function<void(int, const Vec&, const Evaluation<Vec>&)> cb = [&](int, const Vec&, const Evaluation<Vec>&) {
    ++calls;
  };
  auto r = lbfgs_minimize(f, Vec{{-1.2, 1.0}}, o, cb);
  EXPECT_FALSE(r.converged);
  EXPECT_EQ(r.stop_reason, "max-iters-exceeded");
  EXPECT_EQ(r.iters, 3);
  EXPECT_EQ(r.trace.size(), 4u);
  EXPECT_EQ(calls, 4);
}

TEST(Lbfgs, InconsistentGradientFailsTheLineSearch) {
  Liar f;
  try {
    lbfgs_minimize(f, Vec{{0.0}}, LbfgsOptions{});
    FAIL();
  } catch (const error& e) {
    EXPECT_EQ(e.code(), errc::line_search_failure);
  }
}

TEST(Lbfgs, AlreadyStationaryStart) {
  Quadratic q;
  q.c = {1.0, 2.0, 3.0};
  auto r = lbfgs_minimize(q, Vec{{0.0, 1.0, 2.0}}, LbfgsOptions{});
  EXPECT_TRUE(r.converged);
  EXPECT_EQ(r.iters, 0);
  EXPECT_EQ(q.evals, 1);
}
