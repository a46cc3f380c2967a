#pragma once
// Implicit Euler steppers for the chemotaxis system with extra cross-diffusion:
//
//   pp:  d_t rho = div(grad rho - rho grad c),
//        d_t c   = lap c + delta lap rho - c + rho^alpha        (eps = 1)
//   pe:  d_t rho = div((1+delta rho) grad rho - rho grad v),
//        -lap v + v = delta rho + rho^alpha,  c = v - delta rho (eps = 0)
//   log: pe system solved in w = delta log rho, so rho = exp(w/delta) stays
//        positive; optional eta regularization adds a bi-Laplacian, a
//        4-Laplacian and a w*rho reaction term.
//
// Each scheme solves one coupled Newton system per time step. The log scheme
// uses the logarithmic mean for the drift face density, which makes the
// discrete entropy inequality exact (the log-variable test functions
// telescope); diffusive faces use arithmetic means, which dominate the
// logarithmic mean and so preserve both dissipation bounds.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <stdexcept>
#include <vector>

#include "kscd/linalg.hpp"
#include "kscd/model.hpp"
#include "kscd/newton.hpp"

namespace kscd {

enum class Scheme { PP, PE, Log };

/// Manufactured-solution forcing, evaluated at cell centers and the new time
/// level. `rho` feeds the density equation; `c` feeds the chemical (pp) or
/// elliptic v (pe) equation.
struct Forcing {
  std::function<double(double, double, double)> rho;
  std::function<double(double, double, double)> c;
};

namespace detail {

// Logarithmic mean L = (a-b)/(log a - log b) with the products a*dL/da and
// b*dL/db, which stay finite even when a and b differ by hundreds of orders
// of magnitude (the raw derivatives blow up like b/a there, but the chain
// rule through rho = exp(w/delta) only ever needs the products). Series form
// in u = (a-b)/(a+b) near a = b (Ismail-Roe style).
struct LogMean {
  double value;
  double a_da;  // a * dL/da
  double b_db;  // b * dL/db
};

inline LogMean log_mean(double a, double b) {
  const double sum = a + b;
  const double u = (a - b) / sum;
  const double u2 = u * u;
  LogMean lm;
  if (u2 < 0.0625) {  // |u| < 0.25
    const double D = 1.0 + u2 * (1.0 / 3.0 + u2 * (1.0 / 5.0 + u2 * (1.0 / 7.0 + u2 / 9.0)));
    const double dDdu = u * (2.0 / 3.0 + u2 * (4.0 / 5.0 + u2 * (6.0 / 7.0 + u2 * 8.0 / 9.0)));
    lm.value = 0.5 * sum / D;
    // dL/da = 1/(2D) - (a+b)/(2D^2) * dD/du * du/da, du/da = 2b/(a+b)^2
    lm.a_da = a * (0.5 / D - b * dDdu / (D * D * sum));
    lm.b_db = b * (0.5 / D + a * dDdu / (D * D * sum));
  } else {
    const double s = std::log(a / b);
    lm.value = (a - b) / s;
    lm.a_da = (a - lm.value) / s;
    lm.b_db = (lm.value - b) / s;
  }
  return lm;
}

inline Vec nan_vec(Eigen::Index n) {
  return Vec::Constant(n, std::numeric_limits<double>::quiet_NaN());
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Parabolic-parabolic system, unknowns x = [rho; c].

struct PPSystem {
  const Grid& g;
  const State& old_state;
  double dt;
  const Params& p;
  const Forcing* forcing;
  double t_new;
  SpMat lap_rho;  // Neumann
  SpMat lap_c;    // p.c_boundary

  PPSystem(const Grid& grid, const State& old_s, double dt_, const Params& p_,
           const Forcing* f = nullptr)
      : g(grid),
        old_state(old_s),
        dt(dt_),
        p(p_),
        forcing(f),
        t_new(old_s.t + dt_),
        lap_rho(laplacian_matrix(grid, Bc::Neumann)),
        lap_c(laplacian_matrix(grid, p_.c_boundary)) {}

  int n() const { return g.cells(); }

  Vec residual(const Vec& x) const {
    const int nc = n();
    Vec r(2 * nc);
    auto rho = x.head(nc);
    auto c = x.tail(nc);
    for (int i = 0; i < nc; ++i) {
      r[i] = (rho[i] - old_state.rho[i]) / dt;
      r[nc + i] = (c[i] - old_state.c[i]) / dt + c[i] - signal_production_scalar(rho[i], p.alpha);
    }
    // rho equation flux and the Laplacian terms of the c equation
    Vec lc = lap_c * c;
    Vec lr = lap_rho * rho;
    for (int i = 0; i < nc; ++i) r[nc + i] -= lc[i] + p.delta * lr[i];
    for (const Face& fc : g.faces) {
      double m = 0.5 * (rho[fc.p] + rho[fc.n]);
      double flux = fc.area / fc.dist * ((rho[fc.n] - rho[fc.p]) - m * (c[fc.n] - c[fc.p]));
      r[fc.p] -= flux / g.measure[static_cast<std::size_t>(fc.p)];
      r[fc.n] += flux / g.measure[static_cast<std::size_t>(fc.n)];
    }
    if (forcing) {
      for (int i = 0; i < nc; ++i) {
        if (forcing->rho) r[i] -= forcing->rho(g.cx[i], g.cy[i], t_new);
        if (forcing->c) r[nc + i] -= forcing->c(g.cx[i], g.cy[i], t_new);
      }
    }
    return r;
  }

  SpMat jacobian(const Vec& x) const {
    const int nc = n();
    auto rho = x.head(nc);
    auto c = x.tail(nc);
    std::vector<Triplet> trip;
    trip.reserve(16 * g.faces.size() + 6 * nc);
    for (int i = 0; i < nc; ++i) {
      trip.emplace_back(i, i, 1.0 / dt);
      trip.emplace_back(nc + i, nc + i, 1.0 / dt + 1.0);
      trip.emplace_back(nc + i, i, -signal_production_deriv(rho[i], p.alpha));
    }
    for (int k = 0; k < lap_c.outerSize(); ++k)
      for (SpMat::InnerIterator it(lap_c, k); it; ++it)
        trip.emplace_back(nc + static_cast<int>(it.row()), nc + static_cast<int>(it.col()),
                          -it.value());
    for (int k = 0; k < lap_rho.outerSize(); ++k)
      for (SpMat::InnerIterator it(lap_rho, k); it; ++it)
        trip.emplace_back(nc + static_cast<int>(it.row()), static_cast<int>(it.col()),
                          -p.delta * it.value());
    for (const Face& fc : g.faces) {
      const double t = fc.area / fc.dist;
      const double dc = c[fc.n] - c[fc.p];
      const double m = 0.5 * (rho[fc.p] + rho[fc.n]);
      const double dF_drp = t * (-1.0 - 0.5 * dc);
      const double dF_drn = t * (1.0 - 0.5 * dc);
      const double dF_dcp = t * m;
      const double dF_dcn = -t * m;
      const double vp = g.measure[static_cast<std::size_t>(fc.p)];
      const double vn = g.measure[static_cast<std::size_t>(fc.n)];
      trip.emplace_back(fc.p, fc.p, -dF_drp / vp);
      trip.emplace_back(fc.p, fc.n, -dF_drn / vp);
      trip.emplace_back(fc.p, nc + fc.p, -dF_dcp / vp);
      trip.emplace_back(fc.p, nc + fc.n, -dF_dcn / vp);
      trip.emplace_back(fc.n, fc.p, dF_drp / vn);
      trip.emplace_back(fc.n, fc.n, dF_drn / vn);
      trip.emplace_back(fc.n, nc + fc.p, dF_dcp / vn);
      trip.emplace_back(fc.n, nc + fc.n, dF_dcn / vn);
    }
    SpMat J(2 * nc, 2 * nc);
    J.setFromTriplets(trip.begin(), trip.end());
    return J;
  }
};

// ---------------------------------------------------------------------------
// Reformulated parabolic-elliptic system, unknowns x = [rho; v].

struct PESystem {
  const Grid& g;
  const Field& old_rho;
  double dt;
  const Params& p;
  const Forcing* forcing;
  double t_new;
  SpMat lap;  // Neumann, shared by rho and v

  PESystem(const Grid& grid, const Field& old_rho_, double t_old, double dt_, const Params& p_,
           const Forcing* f = nullptr)
      : g(grid),
        old_rho(old_rho_),
        dt(dt_),
        p(p_),
        forcing(f),
        t_new(t_old + dt_),
        lap(laplacian_matrix(grid, Bc::Neumann)) {}

  int n() const { return g.cells(); }

  Vec residual(const Vec& x) const {
    const int nc = n();
    Vec r(2 * nc);
    auto rho = x.head(nc);
    auto v = x.tail(nc);
    Vec lv = lap * v;
    for (int i = 0; i < nc; ++i) {
      r[i] = (rho[i] - old_rho[i]) / dt;
      r[nc + i] = -lv[i] + v[i] - p.delta * rho[i] - signal_production_scalar(rho[i], p.alpha);
    }
    for (const Face& fc : g.faces) {
      double m = 0.5 * (rho[fc.p] + rho[fc.n]);
      double flux = fc.area / fc.dist *
                    ((1.0 + p.delta * m) * (rho[fc.n] - rho[fc.p]) - m * (v[fc.n] - v[fc.p]));
      r[fc.p] -= flux / g.measure[static_cast<std::size_t>(fc.p)];
      r[fc.n] += flux / g.measure[static_cast<std::size_t>(fc.n)];
    }
    if (forcing) {
      for (int i = 0; i < nc; ++i) {
        if (forcing->rho) r[i] -= forcing->rho(g.cx[i], g.cy[i], t_new);
        if (forcing->c) r[nc + i] -= forcing->c(g.cx[i], g.cy[i], t_new);
      }
    }
    return r;
  }

  SpMat jacobian(const Vec& x) const {
    const int nc = n();
    auto rho = x.head(nc);
    auto v = x.tail(nc);
    std::vector<Triplet> trip;
    trip.reserve(12 * g.faces.size() + 4 * nc);
    for (int i = 0; i < nc; ++i) {
      trip.emplace_back(i, i, 1.0 / dt);
      trip.emplace_back(nc + i, nc + i, 1.0);
      trip.emplace_back(nc + i, i, -p.delta - signal_production_deriv(rho[i], p.alpha));
    }
    for (int k = 0; k < lap.outerSize(); ++k)
      for (SpMat::InnerIterator it(lap, k); it; ++it)
        trip.emplace_back(nc + static_cast<int>(it.row()), nc + static_cast<int>(it.col()),
                          -it.value());
    for (const Face& fc : g.faces) {
      const double t = fc.area / fc.dist;
      const double drho = rho[fc.n] - rho[fc.p];
      const double dv = v[fc.n] - v[fc.p];
      const double m = 0.5 * (rho[fc.p] + rho[fc.n]);
      const double dF_drp = t * (0.5 * p.delta * drho - (1.0 + p.delta * m) - 0.5 * dv);
      const double dF_drn = t * (0.5 * p.delta * drho + (1.0 + p.delta * m) - 0.5 * dv);
      const double dF_dvp = t * m;
      const double dF_dvn = -t * m;
      const double vp = g.measure[static_cast<std::size_t>(fc.p)];
      const double vn = g.measure[static_cast<std::size_t>(fc.n)];
      trip.emplace_back(fc.p, fc.p, -dF_drp / vp);
      trip.emplace_back(fc.p, fc.n, -dF_drn / vp);
      trip.emplace_back(fc.p, nc + fc.p, -dF_dvp / vp);
      trip.emplace_back(fc.p, nc + fc.n, -dF_dvn / vp);
      trip.emplace_back(fc.n, fc.p, dF_drp / vn);
      trip.emplace_back(fc.n, fc.n, dF_drn / vn);
      trip.emplace_back(fc.n, nc + fc.p, dF_dvp / vn);
      trip.emplace_back(fc.n, nc + fc.n, dF_dvn / vn);
    }
    SpMat J(2 * nc, 2 * nc);
    J.setFromTriplets(trip.begin(), trip.end());
    return J;
  }
};

// ---------------------------------------------------------------------------
// Log-variable scheme, unknowns x = [w; v] with rho = exp(w/delta).

struct LogSystem {
  const Grid& g;
  const Field& old_rho;
  double dt;
  const Params& p;
  SpMat lap;     // Neumann
  SpMat lap_sq;  // only assembled when eta > 0

  LogSystem(const Grid& grid, const Field& old_rho_, double dt_, const Params& p_)
      : g(grid), old_rho(old_rho_), dt(dt_), p(p_), lap(laplacian_matrix(grid, Bc::Neumann)) {
    if (!(p.delta > 0.0)) throw std::invalid_argument("log scheme requires delta > 0");
    if (p.eta > 0.0) lap_sq = (lap * lap).pruned();
  }

  int n() const { return g.cells(); }

  // rho = exp(w/delta); w/delta beyond 700 is a range failure and poisons the
  // residual, which the step controller answers with a smaller dt.
  bool densities(const Vec& w, Vec& rho) const {
    const int nc = n();
    rho.resize(nc);
    for (int i = 0; i < nc; ++i) {
      double e = w[i] / p.delta;
      if (e > 700.0) return false;
      rho[i] = std::exp(e);
    }
    return true;
  }

  Vec residual(const Vec& x) const {
    const int nc = n();
    auto w = x.head(nc);
    auto v = x.tail(nc);
    Vec rho;
    if (!densities(w, rho)) return detail::nan_vec(2 * nc);
    Vec r(2 * nc);
    Vec lv = lap * v;
    for (int i = 0; i < nc; ++i) {
      r[i] = (rho[i] - old_rho[i]) / dt;
      r[nc + i] = -lv[i] + v[i] - p.delta * rho[i] - std::pow(rho[i], p.alpha);
    }
    for (const Face& fc : g.faces) {
      double m = 0.5 * (rho[fc.p] + rho[fc.n]);
      double lm = detail::log_mean(rho[fc.p], rho[fc.n]).value;
      double flux = fc.area / fc.dist *
                    ((1.0 + p.delta * m) * (rho[fc.n] - rho[fc.p]) - lm * (v[fc.n] - v[fc.p]));
      r[fc.p] -= flux / g.measure[static_cast<std::size_t>(fc.p)];
      r[fc.n] += flux / g.measure[static_cast<std::size_t>(fc.n)];
    }
    if (p.eta > 0.0) {
      Vec l2w = lap_sq * w;
      for (int i = 0; i < nc; ++i) r[i] += p.eta * (l2w[i] + w[i] * rho[i]);
      const double inv_d2 = 1.0 / (p.delta * p.delta);
      for (const Face& fc : g.faces) {
        double dw = (w[fc.n] - w[fc.p]) / fc.dist;
        double gflux = fc.area * dw * dw * dw;
        r[fc.p] += p.eta * inv_d2 * gflux / g.measure[static_cast<std::size_t>(fc.p)];
        r[fc.n] -= p.eta * inv_d2 * gflux / g.measure[static_cast<std::size_t>(fc.n)];
      }
    }
    return r;
  }

  SpMat jacobian(const Vec& x) const {
    const int nc = n();
    auto w = x.head(nc);
    auto v = x.tail(nc);
    Vec rho;
    if (!densities(w, rho)) throw std::runtime_error("log scheme: jacobian at out-of-range state");
    Vec drho(nc);  // d rho_i / d w_i
    for (int i = 0; i < nc; ++i) drho[i] = rho[i] / p.delta;
    std::vector<Triplet> trip;
    trip.reserve(16 * g.faces.size() + 4 * nc + (p.eta > 0.0 ? lap_sq.nonZeros() : 0));
    for (int i = 0; i < nc; ++i) {
      trip.emplace_back(i, i, drho[i] / dt);
      trip.emplace_back(nc + i, nc + i, 1.0);
      trip.emplace_back(nc + i, i,
                        (-p.delta - p.alpha * std::pow(rho[i], p.alpha - 1.0)) * drho[i]);
    }
    for (int k = 0; k < lap.outerSize(); ++k)
      for (SpMat::InnerIterator it(lap, k); it; ++it)
        trip.emplace_back(nc + static_cast<int>(it.row()), nc + static_cast<int>(it.col()),
                          -it.value());
    for (const Face& fc : g.faces) {
      const double t = fc.area / fc.dist;
      const double dr = rho[fc.n] - rho[fc.p];
      const double dv = v[fc.n] - v[fc.p];
      const double m = 0.5 * (rho[fc.p] + rho[fc.n]);
      const detail::LogMean lm = detail::log_mean(rho[fc.p], rho[fc.n]);
      const double dF_dwp = t * ((0.5 * p.delta * dr - (1.0 + p.delta * m)) * drho[fc.p] -
                                 lm.a_da * dv / p.delta);
      const double dF_dwn = t * ((0.5 * p.delta * dr + (1.0 + p.delta * m)) * drho[fc.n] -
                                 lm.b_db * dv / p.delta);
      const double dF_dvp = t * lm.value;
      const double dF_dvn = -t * lm.value;
      const double vp = g.measure[static_cast<std::size_t>(fc.p)];
      const double vn = g.measure[static_cast<std::size_t>(fc.n)];
      trip.emplace_back(fc.p, fc.p, -dF_dwp / vp);
      trip.emplace_back(fc.p, fc.n, -dF_dwn / vp);
      trip.emplace_back(fc.p, nc + fc.p, -dF_dvp / vp);
      trip.emplace_back(fc.p, nc + fc.n, -dF_dvn / vp);
      trip.emplace_back(fc.n, fc.p, dF_dwp / vn);
      trip.emplace_back(fc.n, fc.n, dF_dwn / vn);
      trip.emplace_back(fc.n, nc + fc.p, dF_dvp / vn);
      trip.emplace_back(fc.n, nc + fc.n, dF_dvn / vn);
    }
    if (p.eta > 0.0) {
      for (int k = 0; k < lap_sq.outerSize(); ++k)
        for (SpMat::InnerIterator it(lap_sq, k); it; ++it)
          trip.emplace_back(static_cast<int>(it.row()), static_cast<int>(it.col()),
                            p.eta * it.value());
      for (int i = 0; i < nc; ++i)
        trip.emplace_back(i, i, p.eta * (rho[i] + w[i] * drho[i]));
      const double inv_d2 = 1.0 / (p.delta * p.delta);
      for (const Face& fc : g.faces) {
        double dw = (w[fc.n] - w[fc.p]) / fc.dist;
        double dG = 3.0 * fc.area * dw * dw / fc.dist;  // dG/dw_n = -dG/dw_p
        const double vp = g.measure[static_cast<std::size_t>(fc.p)];
        const double vn = g.measure[static_cast<std::size_t>(fc.n)];
        trip.emplace_back(fc.p, fc.n, p.eta * inv_d2 * dG / vp);
        trip.emplace_back(fc.p, fc.p, -p.eta * inv_d2 * dG / vp);
        trip.emplace_back(fc.n, fc.n, -p.eta * inv_d2 * dG / vn);
        trip.emplace_back(fc.n, fc.p, p.eta * inv_d2 * dG / vn);
      }
    }
    SpMat J(2 * nc, 2 * nc);
    J.setFromTriplets(trip.begin(), trip.end());
    return J;
  }
};

// ---------------------------------------------------------------------------
// Spec-facing residual evaluators.

inline Vec residual_pp(const State& new_s, const State& old_s, double dt, const Params& p,
                       const Forcing* forcing = nullptr) {
  if (p.eps != 1) throw std::invalid_argument("residual_pp: requires eps = 1");
  PPSystem sys(*old_s.rho.g, old_s, dt, p, forcing);
  const int n = sys.n();
  Vec x(2 * n);
  for (int i = 0; i < n; ++i) {
    x[i] = new_s.rho[i];
    x[n + i] = new_s.c[i];
  }
  return sys.residual(x);
}

inline Vec residual_pe(const Field& new_rho, const Field& old_rho, const Field& v, double dt,
                       const Params& p, double t_old = 0.0, const Forcing* forcing = nullptr) {
  if (p.eps != 0) throw std::invalid_argument("residual_pe: requires eps = 0");
  PESystem sys(*old_rho.g, old_rho, t_old, dt, p, forcing);
  const int n = sys.n();
  Vec x(2 * n);
  for (int i = 0; i < n; ++i) {
    x[i] = new_rho[i];
    x[n + i] = v[i];
  }
  return sys.residual(x);
}

inline Vec residual_log(const Field& new_w, const Field& new_v, const State& old, double dt,
                        const Params& p) {
  LogSystem sys(*old.rho.g, old.rho, dt, p);
  const int n = sys.n();
  Vec x(2 * n);
  for (int i = 0; i < n; ++i) {
    x[i] = new_w[i];
    x[n + i] = new_v[i];
  }
  return sys.residual(x);
}

// ---------------------------------------------------------------------------

/// Quasi-static chemical: (-lap + I) c = rho^alpha with the configured
/// boundary condition. Reference model for the delta = 0 sweeps.
inline Field solve_elliptic_c(const Field& rho, const Params& p) {
  const Grid& g = *rho.g;
  SpMat L = laplacian_matrix(g, p.c_boundary);
  std::vector<Triplet> trip;
  trip.reserve(L.nonZeros() + g.cells());
  for (int k = 0; k < L.outerSize(); ++k)
    for (SpMat::InnerIterator it(L, k); it; ++it)
      trip.emplace_back(static_cast<int>(it.row()), static_cast<int>(it.col()), -it.value());
  for (int i = 0; i < g.cells(); ++i) trip.emplace_back(i, i, 1.0);
  SpMat A(g.cells(), g.cells());
  A.setFromTriplets(trip.begin(), trip.end());
  Vec b(g.cells());
  for (int i = 0; i < g.cells(); ++i) b[i] = signal_production_scalar(rho[i], p.alpha);
  LinearSolveResult res = linear_solve(A, b);
  if (!res.ok) throw std::runtime_error("solve_elliptic_c: " + res.error);
  Field c(g, 0.0, "c");
  for (int i = 0; i < g.cells(); ++i) c[i] = res.x[i];
  return c;
}

// ---------------------------------------------------------------------------
// Time stepping.

struct TimeController {
  double dt = 1e-3;
  double dt_min = 1e-13;
  double dt_max = 1e-2;
  double shrink = 0.5;
  double grow = 1.2;
  double growth_guard = 2.0;  // max per-step L-inf growth factor of rho

  void validate() const {
    if (!(dt_min > 0.0) || !(dt_min <= dt) || !(dt <= dt_max))
      throw std::invalid_argument("time controller: need 0 < dt_min <= dt <= dt_max");
    if (!(shrink > 0.0 && shrink < 1.0)) throw std::invalid_argument("time controller: shrink in (0,1)");
    if (!(grow >= 1.0)) throw std::invalid_argument("time controller: grow >= 1");
    if (!(growth_guard > 1.0)) throw std::invalid_argument("time controller: growth_guard > 1");
  }
};

enum class StepStatus { Accepted, RetrySmallerDt, Breakdown };

struct StepOutcome {
  StepStatus status = StepStatus::Breakdown;
  State new_state;
  int newton_iters = 0;
  double dt_used = 0.0;
};

namespace detail {

inline double linf(const Field& f) {
  double m = 0.0;
  for (double x : f.v) m = std::max(m, std::abs(x));
  return m;
}

// One Newton solve at a fixed dt. Residual rows are scaled by dt (parabolic
// rows) and normalized by the state magnitude so that tol_residual means the
// same thing far from and close to blow-up.
inline StepOutcome attempt_step(const State& state, double dt, const Params& p, Scheme scheme,
                                const NewtonSettings& ns, const Forcing* forcing) {
  const Grid& g = *state.rho.g;
  const int n = g.cells();
  StepOutcome out;
  out.status = StepStatus::RetrySmallerDt;
  out.dt_used = dt;

  const double srho = std::max(1.0, linf(state.rho));
  Vec x0(2 * n);
  Vec row_scale(2 * n);
  ResidualFn rfn;
  JacobianFn jfn;

  PPSystem* pps = nullptr;
  PESystem* pes = nullptr;
  LogSystem* logs = nullptr;
  // Systems are kept alive for the whole attempt.
  std::unique_ptr<PPSystem> pp_store;
  std::unique_ptr<PESystem> pe_store;
  std::unique_ptr<LogSystem> log_store;

  if (scheme == Scheme::PP) {
    pp_store = std::make_unique<PPSystem>(g, state, dt, p, forcing);
    pps = pp_store.get();
    const double sc = std::max(1.0, linf(state.c));
    for (int i = 0; i < n; ++i) {
      x0[i] = state.rho[i];
      x0[n + i] = state.c[i];
      row_scale[i] = dt / srho;
      row_scale[n + i] = dt / sc;
    }
    rfn = [pps, row_scale](const Vec& x) { return Vec(pps->residual(x).cwiseProduct(row_scale)); };
    jfn = [pps, row_scale](const Vec& x) { return SpMat(row_scale.asDiagonal() * pps->jacobian(x)); };
  } else if (scheme == Scheme::PE) {
    pe_store = std::make_unique<PESystem>(g, state.rho, state.t, dt, p, forcing);
    pes = pe_store.get();
    Field v0 = reformulate(state, p.delta);
    const double sv = std::max(1.0, linf(v0));
    for (int i = 0; i < n; ++i) {
      x0[i] = state.rho[i];
      x0[n + i] = v0[i];
      row_scale[i] = dt / srho;
      row_scale[n + i] = 1.0 / sv;
    }
    rfn = [pes, row_scale](const Vec& x) { return Vec(pes->residual(x).cwiseProduct(row_scale)); };
    jfn = [pes, row_scale](const Vec& x) { return SpMat(row_scale.asDiagonal() * pes->jacobian(x)); };
  } else {
    log_store = std::make_unique<LogSystem>(g, state.rho, dt, p);
    logs = log_store.get();
    Field v0 = reformulate(state, p.delta);
    const double sv = std::max(1.0, linf(v0));
    for (int i = 0; i < n; ++i) {
      if (!(state.rho[i] > 0.0))
        throw std::invalid_argument("log scheme: density must be strictly positive");
      x0[i] = p.delta * std::log(state.rho[i]);
      x0[n + i] = v0[i];
      row_scale[i] = dt / srho;
      row_scale[n + i] = 1.0 / sv;
    }
    rfn = [logs, row_scale](const Vec& x) { return Vec(logs->residual(x).cwiseProduct(row_scale)); };
    jfn = [logs, row_scale](const Vec& x) { return SpMat(row_scale.asDiagonal() * logs->jacobian(x)); };
  }

  NewtonResult nr = newton(rfn, ns.jacobian == JacobianMode::Analytic ? jfn : JacobianFn{}, x0, ns);
  out.newton_iters = nr.iterations;
  if (!nr.converged) return out;

  Field rho_new(g, 0.0, "rho"), c_new(g, 0.0, "c");
  if (scheme == Scheme::PP) {
    for (int i = 0; i < n; ++i) {
      rho_new[i] = nr.x[i];
      c_new[i] = nr.x[n + i];
    }
  } else if (scheme == Scheme::PE) {
    Field v(g, 0.0, "v");
    for (int i = 0; i < n; ++i) {
      rho_new[i] = nr.x[i];
      v[i] = nr.x[n + i];
    }
    c_new = recover_c(v, rho_new, p.delta);
  } else {
    for (int i = 0; i < n; ++i) {
      rho_new[i] = std::exp(nr.x[i] / p.delta);
      c_new[i] = nr.x[n + i] - p.delta * rho_new[i];
    }
  }
  if (!all_finite(rho_new) || !all_finite(c_new)) return out;
  out.new_state = State{std::move(rho_new), std::move(c_new), state.t + dt};
  out.status = StepStatus::Accepted;
  return out;
}

}  // namespace detail

/// One adaptive implicit Euler step. Retries with dt*shrink on Newton failure
/// or growth-guard violation; grows dt after success; reports Breakdown when
/// the next retry would fall below dt_min. `dt_cap` bounds the attempted dt
/// (used to land on record times) without entering the controller's memory.
inline StepOutcome advance(const State& state, TimeController& ctrl, const Params& p,
                           Scheme scheme, const NewtonSettings& ns,
                           const Forcing* forcing = nullptr,
                           double dt_cap = std::numeric_limits<double>::infinity()) {
  ctrl.validate();
  p.validate();
  if (scheme == Scheme::PP && p.eps != 1)
    throw std::invalid_argument("advance: pp scheme requires eps = 1");
  if ((scheme == Scheme::PE || scheme == Scheme::Log) && p.eps != 0)
    throw std::invalid_argument("advance: pe/log schemes require eps = 0");
  if ((scheme == Scheme::PE || scheme == Scheme::Log) && p.c_boundary != Bc::Neumann)
    throw std::invalid_argument("advance: pe/log schemes support only no-flux c");

  const double linf_old = detail::linf(state.rho);
  bool capped_first = dt_cap < ctrl.dt;
  double dt = std::min(ctrl.dt, dt_cap);
  while (true) {
    StepOutcome out = detail::attempt_step(state, dt, p, scheme, ns, forcing);
    if (out.status == StepStatus::Accepted) {
      double linf_new = detail::linf(out.new_state.rho);
      bool guard_ok = linf_new <= ctrl.growth_guard * std::max(linf_old, 1e-300) || linf_new <= 1e-12;
      // A negative excursion as deep as the peak is high marks a runaway of
      // the central drift flux, not a tolerable undershoot.
      double min_new = 0.0;
      for (double r : out.new_state.rho.v) min_new = std::min(min_new, r);
      if (min_new < -std::max(1.0, linf_new)) guard_ok = false;
      if (guard_ok) {
        if (!capped_first || dt >= ctrl.dt)
          ctrl.dt = std::min(ctrl.dt * ctrl.grow, ctrl.dt_max);
        return out;
      }
    }
    double dt_next = dt * ctrl.shrink;
    if (dt_next < ctrl.dt_min) {
      StepOutcome bd;
      bd.status = StepStatus::Breakdown;
      bd.dt_used = dt;
      bd.new_state = state;
      return bd;
    }
    dt = dt_next;
    ctrl.dt = dt_next;
    capped_first = false;
  }
}

}  // namespace kscd
