#pragma once
// Experiment orchestration: single runs with diagnostics and snapshots,
// delta sweeps against the delta = 0 reference, blow-up probes, and the
// steady-bump scaling study. Everything here is deterministic.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <vector>

#include "kscd/diagnostics.hpp"
#include "kscd/model.hpp"
#include "kscd/schemes.hpp"

namespace kscd {

struct RunOptions {
  std::vector<double> record_times;   // snapshot instants, hit exactly
  bool stop_at_steady = false;        // stop once |drho|_inf/dt < tol * rho_max
  double steady_rel_tol = 1e-6;
  long max_steps = 2'000'000;
};

struct RunResult {
  std::vector<DiagRecord> diag;
  std::vector<State> snapshots;  // one per reached record time, in order
  State final_state;
  bool breakdown = false;
  bool reached_steady = false;
  long steps = 0;
  double final_dt = 0.0;
  double last_step_change = 0.0;  // |drho|_inf/dt of the last accepted step
};

/// Advances from state.t to T (or breakdown), recording diagnostics at every
/// accepted step. The attempted dt is capped so that record times and T are
/// hit exactly.
inline RunResult run(State state, double T, TimeController ctrl, const Params& p, Scheme scheme,
                     const NewtonSettings& ns, const RunOptions& opt = {},
                     const Forcing* forcing = nullptr) {
  RunResult out;
  std::vector<double> records = opt.record_times;
  std::sort(records.begin(), records.end());
  std::size_t next_rec = 0;
  auto time_eps = [&](double t) { return 1e-9 * std::max(1.0, std::abs(t)); };
  while (next_rec < records.size() && records[next_rec] <= state.t + time_eps(state.t)) {
    out.snapshots.push_back(state);
    ++next_rec;
  }

  while (state.t < T - time_eps(T) && out.steps < opt.max_steps) {
    double cap = T - state.t;
    if (next_rec < records.size()) cap = std::min(cap, records[next_rec] - state.t);
    cap = std::max(cap, ctrl.dt_min);
    StepOutcome so = advance(state, ctrl, p, scheme, ns, forcing, cap);
    if (so.status != StepStatus::Accepted) {
      out.breakdown = true;
      out.final_dt = so.dt_used;
      break;
    }
    ++out.steps;
    out.final_dt = so.dt_used;
    out.diag.push_back(make_diag_record(so.new_state, state, so.dt_used, p));

    double dmax = 0.0;
    for (int i = 0; i < state.rho.size(); ++i)
      dmax = std::max(dmax, std::abs(so.new_state.rho[i] - state.rho[i]));
    out.last_step_change = dmax / so.dt_used;
    bool steady = opt.stop_at_steady &&
                  out.last_step_change <
                      opt.steady_rel_tol * std::max(out.diag.back().rho_max, 1e-300);
    state = std::move(so.new_state);
    while (next_rec < records.size() && records[next_rec] <= state.t + time_eps(state.t)) {
      out.snapshots.push_back(state);
      ++next_rec;
    }
    if (steady) {
      out.reached_steady = true;
      break;
    }
  }
  out.final_state = std::move(state);
  return out;
}

// ---------------------------------------------------------------------------

struct PowerLawFit {
  double exponent = 0.0;
  double r2 = 0.0;
};

/// Least-squares slope of log y against log x with coefficient of
/// determination. Rejects degenerate abscissae and nonpositive data.
inline PowerLawFit fit_power_law(const std::vector<double>& xs, const std::vector<double>& ys) {
  if (xs.size() != ys.size() || xs.size() < 2)
    throw std::invalid_argument("fit_power_law: need at least two points");
  std::vector<double> lx(xs.size()), ly(ys.size());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (!(xs[i] > 0.0) || !(ys[i] > 0.0))
      throw std::invalid_argument("fit_power_law: data must be positive");
    lx[i] = std::log(xs[i]);
    ly[i] = std::log(ys[i]);
  }
  double n = static_cast<double>(xs.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    mx += lx[i];
    my += ly[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxx += (lx[i] - mx) * (lx[i] - mx);
    sxy += (lx[i] - mx) * (ly[i] - my);
    syy += (ly[i] - my) * (ly[i] - my);
  }
  if (!(sxx > 0.0)) throw std::invalid_argument("fit_power_law: degenerate abscissa");
  PowerLawFit fit;
  fit.exponent = sxy / sxx;
  if (syy == 0.0) {
    fit.r2 = 1.0;  // constant data, exactly reproduced by slope 0
  } else {
    double ss_res = syy - sxy * sxy / sxx;
    fit.r2 = 1.0 - ss_res / syy;
  }
  return fit;
}

// ---------------------------------------------------------------------------

enum class ErrorNorm { L2, H2 };

struct SweepSpec {
  std::vector<double> deltas;  // sorted descending, all > 0
  Params base;                 // delta field ignored
  Scheme scheme = Scheme::PP;  // pp for eps = 1, pe for eps = 0
  GridSpec grid;
  InitialData init;
  double T = 0.05;
  double dt = 1e-4;
  std::vector<double> record_times;
  ErrorNorm error_norm = ErrorNorm::H2;
  NewtonSettings newton;
};

struct SweepEntry {
  double delta = 0.0;
  double error = 0.0;
  bool valid = false;
};

struct SweepResult {
  std::vector<SweepEntry> entries;
  double fitted_exponent = 0.0;
  double fit_r2 = 0.0;
  bool fit_ok = false;
};

namespace detail {

// Fixed-dt trajectory capturing the states at the requested step indices.
struct FixedDtTrajectory {
  std::vector<State> states;
  bool breakdown = false;
};

inline FixedDtTrajectory run_fixed_dt(State state, const Params& p, Scheme scheme, double dt,
                                      long nsteps, const std::vector<long>& record_steps,
                                      const NewtonSettings& ns) {
  FixedDtTrajectory out;
  std::size_t next = 0;
  while (next < record_steps.size() && record_steps[next] == 0) {
    out.states.push_back(state);
    ++next;
  }
  for (long k = 1; k <= nsteps; ++k) {
    TimeController ctrl;
    ctrl.dt = ctrl.dt_min = ctrl.dt_max = dt;  // no adaptivity inside sweeps
    ctrl.grow = 1.0;
    StepOutcome so = advance(state, ctrl, p, scheme, ns);
    if (so.status != StepStatus::Accepted) {
      out.breakdown = true;
      return out;
    }
    state = std::move(so.new_state);
    while (next < record_steps.size() && record_steps[next] == k) {
      out.states.push_back(state);
      ++next;
    }
  }
  return out;
}

inline double pair_norm(const Field& a_rho, const Field& b_rho, const Field& a_c,
                        const Field& b_c, bool include_c, ErrorNorm norm) {
  const Grid& g = *a_rho.g;
  Field dr(g), dc(g);
  for (int i = 0; i < g.cells(); ++i) dr[i] = a_rho[i] - b_rho[i];
  double n2 = 0.0;
  DiffNorms nr = discrete_h2_norms(dr);
  n2 += (norm == ErrorNorm::L2) ? nr.l2 * nr.l2 : nr.h2 * nr.h2;
  if (include_c) {
    for (int i = 0; i < g.cells(); ++i) dc[i] = a_c[i] - b_c[i];
    DiffNorms ncn = discrete_h2_norms(dc);
    n2 += (norm == ErrorNorm::L2) ? ncn.l2 * ncn.l2 : ncn.h2 * ncn.h2;
  }
  return std::sqrt(n2);
}

}  // namespace detail

/// Errors E(delta) = max over record times of the chosen difference norm of
/// (rho_delta - rho) (plus (c_delta - c) when eps = 1) against the delta = 0
/// run on the identical grid and time partition, and the fitted rate.
inline SweepResult delta_sweep(const SweepSpec& s) {
  if (s.deltas.size() < 2) throw std::invalid_argument("delta_sweep: at least two deltas required");
  for (std::size_t i = 0; i < s.deltas.size(); ++i) {
    if (!(s.deltas[i] > 0.0)) throw std::invalid_argument("delta_sweep: deltas must be positive");
    if (i > 0 && !(s.deltas[i] < s.deltas[i - 1]))
      throw std::invalid_argument("delta_sweep: deltas must be sorted descending");
  }
  if (!(s.T > 0.0) || !(s.dt > 0.0)) throw std::invalid_argument("delta_sweep: need T, dt > 0");
  if (s.scheme == Scheme::Log)
    throw std::invalid_argument("delta_sweep: the delta = 0 reference cannot use the log scheme");
  if ((s.scheme == Scheme::PP) != (s.base.eps == 1))
    throw std::invalid_argument("delta_sweep: scheme and eps inconsistent");

  Grid g = build_grid(s.grid);
  Field rho0 = initial_density(g, s.init);
  Field c0(g, 0.0, "c");

  long nsteps = std::lround(s.T / s.dt);
  if (!(std::abs(nsteps * s.dt - s.T) <= 1e-9 * s.T) || nsteps < 1)
    throw std::invalid_argument("delta_sweep: T must be a multiple of dt");
  std::vector<double> rec = s.record_times.empty() ? std::vector<double>{s.T} : s.record_times;
  std::sort(rec.begin(), rec.end());
  std::vector<long> rec_steps;
  for (double t : rec) {
    long k = std::lround(t / s.dt);
    if (k < 0 || k > nsteps || std::abs(k * s.dt - t) > 1e-9 * std::max(1.0, t))
      throw std::invalid_argument("delta_sweep: record times must lie on the dt lattice");
    rec_steps.push_back(k);
  }

  Params pref = s.base;
  pref.delta = 0.0;
  auto start = [&]() {
    State st;
    st.rho = rho0;
    st.c = (s.base.eps == 1) ? c0 : solve_elliptic_c(rho0, pref);
    st.t = 0.0;
    return st;
  };
  // eps = 0 reference: the pe scheme at delta = 0 is the classical
  // parabolic-elliptic model (v = c).
  detail::FixedDtTrajectory ref =
      detail::run_fixed_dt(start(), pref, s.scheme, s.dt, nsteps, rec_steps, s.newton);
  if (ref.breakdown) throw std::runtime_error("delta_sweep: reference run broke down");

  SweepResult out;
  for (double d : s.deltas) {
    Params pd = s.base;
    pd.delta = d;
    SweepEntry e;
    e.delta = d;
    detail::FixedDtTrajectory tr =
        detail::run_fixed_dt(start(), pd, s.scheme, s.dt, nsteps, rec_steps, s.newton);
    if (!tr.breakdown && tr.states.size() == ref.states.size()) {
      double err = 0.0;
      for (std::size_t k = 0; k < tr.states.size(); ++k)
        err = std::max(err, detail::pair_norm(tr.states[k].rho, ref.states[k].rho,
                                              tr.states[k].c, ref.states[k].c,
                                              s.base.eps == 1, s.error_norm));
      e.error = err;
      e.valid = std::isfinite(err) && err > 0.0;
    }
    out.entries.push_back(e);
  }

  std::vector<double> xs, ys;
  for (const auto& e : out.entries)
    if (e.valid) {
      xs.push_back(e.delta);
      ys.push_back(e.error);
    }
  if (xs.size() >= 2) {
    PowerLawFit fit = fit_power_law(xs, ys);
    out.fitted_exponent = fit.exponent;
    out.fit_r2 = fit.r2;
    out.fit_ok = true;
  }
  return out;
}

// ---------------------------------------------------------------------------

struct BlowupReport {
  double alpha = 0.0;
  double delta = 0.0;
  bool broke_down = false;
  double t_break = 0.0;   // simulation clock when the controller gave up
  double final_dt = 0.0;
  double final_linf = 0.0;
};

/// Runs until breakdown or T_cap and reports when the time controller hit the
/// dt floor.
inline BlowupReport blowup_probe(State state, double T_cap, TimeController ctrl, const Params& p,
                                 Scheme scheme, const NewtonSettings& ns) {
  BlowupReport rep;
  rep.alpha = p.alpha;
  rep.delta = p.delta;
  RunResult rr = run(std::move(state), T_cap, ctrl, p, scheme, ns);
  rep.broke_down = rr.breakdown;
  rep.t_break = rr.final_state.t;
  rep.final_dt = rr.final_dt;
  rep.final_linf = rr.diag.empty() ? 0.0 : rr.diag.back().rho_max;
  return rep;
}

// ---------------------------------------------------------------------------

struct BumpEntry {
  double delta = 0.0;
  double radius = 0.0;
  double rho_max = 0.0;
  double steady_residual = 0.0;  // |drho|_inf/dt at the last step
  bool converged = false;
};

struct BumpReport {
  std::vector<BumpEntry> entries;
  double radius_exponent = 0.0;   // radius ~ delta^a
  double height_exponent = 0.0;   // rho_max ~ delta^-b
  double radius_r2 = 0.0;
  double height_r2 = 0.0;
  bool fits_ok = false;
  double level = 1e-2;
};

/// Steady-bump scaling study on a radial grid: integrate each delta to the
/// steady state, measure the level-set radius at height 1e-2 and the peak
/// height, and fit both power laws.
inline BumpReport bump_study(const std::vector<double>& deltas, const Params& base,
                             const GridSpec& gs, const InitialData& init, TimeController ctrl0,
                             const NewtonSettings& ns, double T_cap = 50.0) {
  if (gs.kind != GridKind::Radial)
    throw std::invalid_argument("bump_study: radial grid required");
  BumpReport rep;
  Grid g = build_grid(gs);
  Field rho0 = initial_density(g, init);
  for (double d : deltas) {
    Params p = base;
    p.delta = d;
    State st;
    st.rho = rho0;
    st.c = Field(g, 0.0, "c");
    st.t = 0.0;
    RunOptions opt;
    opt.stop_at_steady = true;
    opt.steady_rel_tol = 1e-6;
    TimeController ctrl = ctrl0;
    RunResult rr = run(std::move(st), T_cap, ctrl, p, Scheme::PP, ns, opt);
    BumpEntry e;
    e.delta = d;
    e.converged = rr.reached_steady;
    if (!rr.diag.empty()) e.rho_max = rr.diag.back().rho_max;
    e.steady_residual = rr.last_step_change;
    e.radius = level_set_radius(rr.final_state.rho, rep.level);
    rep.entries.push_back(e);
  }
  std::vector<double> xs, rs, hs;
  for (const auto& e : rep.entries)
    if (e.converged && e.radius > 0.0 && e.rho_max > 0.0) {
      xs.push_back(e.delta);
      rs.push_back(e.radius);
      hs.push_back(e.rho_max);
    }
  if (xs.size() >= 2) {
    PowerLawFit fr = fit_power_law(xs, rs);
    PowerLawFit fh = fit_power_law(xs, hs);
    rep.radius_exponent = fr.exponent;
    rep.radius_r2 = fr.r2;
    rep.height_exponent = -fh.exponent;
    rep.height_r2 = fh.r2;
    rep.fits_ok = true;
  }
  return rep;
}

}  // namespace kscd
