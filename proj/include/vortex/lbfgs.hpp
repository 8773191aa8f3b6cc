#pragma once

// Preconditioned limited-memory BFGS with backtracking line search.
//
// Vec needs copy semantics plus ADL-visible
//   double dot(const Vec&, const Vec&);
//   void axpy(double a, const Vec& x, Vec& y);   // y += a x
//   void scale(Vec& x, double a);
// Problem needs
//   Evaluation<Vec> evaluate(const Vec& x);      // may throw error(errc::overflow)
//   Vec precondition(const Vec& g);              // SPD approximation of the inverse Hessian
//   void project(Vec& d);                        // onto the feasible subspace

#include <cmath>
#include <deque>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "vortex/error.hpp"

namespace vortex {

template <class Vec>
struct Evaluation {
  double value = 0.0;
  Vec grad;
  double stationarity = 0.0;  // the quantity compared against grad_tol
};

struct LbfgsOptions {
  int max_iters = 500;
  double grad_tol = 1e-8;
  int memory = 10;  // 0 gives preconditioned steepest descent
  double shrink = 0.5;
  double c1 = 1e-4;
  double min_step = 1e-14;
};

struct TraceEntry {
  int iter = 0;
  double value = 0.0;
  double grad_norm = 0.0;
};

template <class Vec>
struct LbfgsResult {
  Vec x;
  Evaluation<Vec> last;
  std::vector<TraceEntry> trace;
  bool converged = false;
  int iters = 0;
  std::string stop_reason;
};

template <class Vec, class Problem>
LbfgsResult<Vec> lbfgs_minimize(Problem& prob, Vec x, const LbfgsOptions& opt,
                                const std::function<void(int, const Vec&, const Evaluation<Vec>&)>& on_iterate = {}) {
  struct Pair {
    Vec s, y;
    double rho;
  };
  std::deque<Pair> mem;
  double gamma = 1.0;

  LbfgsResult<Vec> res;
  Evaluation<Vec> ev = prob.evaluate(x);
  res.trace.push_back({0, ev.value, ev.stationarity});
  if (on_iterate) on_iterate(0, x, ev);

  auto direction = [&](const Vec& g) {
    Vec q = g;
    std::vector<double> al(mem.size());
    for (std::size_t k = mem.size(); k-- > 0;) {
      al[k] = mem[k].rho * dot(mem[k].s, q);
      axpy(-al[k], mem[k].y, q);
    }
    Vec r = prob.precondition(q);
    scale(r, gamma);
    for (std::size_t k = 0; k < mem.size(); ++k) {
      const double b = mem[k].rho * dot(mem[k].y, r);
      axpy(al[k] - b, mem[k].s, r);
    }
    scale(r, -1.0);
    prob.project(r);
    return r;
  };

  for (int it = 1; it <= opt.max_iters; ++it) {
    if (ev.stationarity <= opt.grad_tol) {
      res.converged = true;
      break;
    }
    Vec d = direction(ev.grad);
    double gd = dot(ev.grad, d);
    if (!(gd < 0.0)) {
      mem.clear();
      gamma = 1.0;
      d = direction(ev.grad);
      gd = dot(ev.grad, d);
      if (!(gd < 0.0)) throw error(errc::line_search_failure, "no descent direction available");
    }

    const double ftol = 1e-12 * (1.0 + std::abs(ev.value));
    double t = 1.0;
    Vec xt;
    Evaluation<Vec> et;
    for (;;) {
      xt = x;
      axpy(t, d, xt);
      bool ok = true;
      try {
        et = prob.evaluate(xt);
      } catch (const error& e) {
        if (e.code() != errc::overflow) throw;
        ok = false;
      }
      if (ok && std::isfinite(et.value)) {
        const bool armijo = et.value <= ev.value + opt.c1 * t * gd;
        bool flat = false;
        if (!armijo && et.value <= ev.value + ftol) {
          // decrease below the functional's resolution: accept on slope reduction
          const double gdt = dot(et.grad, d);
          flat = std::abs(gdt) <= 0.9 * std::abs(gd);
        }
        if (armijo || flat) break;
      }
      t *= opt.shrink;
      if (t < opt.min_step) {
        throw error(errc::line_search_failure,
                    "step underflow at iteration " + std::to_string(it) +
                        " (stationarity " + std::to_string(ev.stationarity) + ")");
      }
    }

    if (opt.memory > 0) {
      Vec s = xt;
      axpy(-1.0, x, s);
      Vec y = et.grad;
      axpy(-1.0, ev.grad, y);
      const double sy = dot(s, y);
      if (sy > std::numeric_limits<double>::epsilon() * std::sqrt(dot(s, s) * dot(y, y))) {
        Vec Py = prob.precondition(y);
        gamma = sy / dot(y, Py);
        mem.push_back({std::move(s), std::move(y), 1.0 / sy});
        if (static_cast<int>(mem.size()) > opt.memory) mem.pop_front();
      }
    }
    x = std::move(xt);
    ev = std::move(et);
    res.iters = it;
    res.trace.push_back({it, ev.value, ev.stationarity});
    if (on_iterate) on_iterate(it, x, ev);
  }
  if (!res.converged && ev.stationarity <= opt.grad_tol) res.converged = true;
  res.stop_reason = res.converged ? "converged" : "max-iters-exceeded";
  res.x = std::move(x);
  res.last = std::move(ev);
  return res;
}

}  // namespace vortex
