#pragma once
// Damped Newton iteration on sparse residual systems. Convergence is declared
// on the max norm of the residual; after the tolerance is met the iteration
// polishes until it stagnates, which leaves converged steps at the rounding
// floor rather than at the nominal tolerance.

#include <cmath>
#include <functional>
#include <limits>
#include <string>

#include "kscd/linalg.hpp"

namespace kscd {

enum class JacobianMode { Analytic, FiniteDifference };

struct NewtonSettings {
  double tol_residual = 1e-10;
  int max_iter = 50;
  JacobianMode jacobian = JacobianMode::Analytic;
};

struct NewtonResult {
  Vec x;
  bool converged = false;
  int iterations = 0;
  double residual_norm = std::numeric_limits<double>::quiet_NaN();
  std::string error;
};

using ResidualFn = std::function<Vec(const Vec&)>;
using JacobianFn = std::function<SpMat(const Vec&)>;

/// Forward-difference Jacobian, column by column, with sqrt(ulp) step scaling.
inline SpMat fd_jacobian(const ResidualFn& residual, const Vec& x, const Vec& r0) {
  const auto n = x.size();
  const double sqeps = std::sqrt(std::numeric_limits<double>::epsilon());
  std::vector<Triplet> trip;
  Vec xp = x;
  for (Eigen::Index j = 0; j < n; ++j) {
    double h = sqeps * std::max(std::abs(x[j]), 1.0);
    xp[j] = x[j] + h;
    Vec rj = residual(xp);
    xp[j] = x[j];
    for (Eigen::Index i = 0; i < n; ++i) {
      double d = (rj[i] - r0[i]) / h;
      if (d != 0.0) trip.emplace_back(static_cast<int>(i), static_cast<int>(j), d);
    }
  }
  SpMat J(n, n);
  J.setFromTriplets(trip.begin(), trip.end());
  return J;
}

inline double inf_norm(const Vec& v) { return v.size() ? v.cwiseAbs().maxCoeff() : 0.0; }

/// Newton iteration x <- x - J^{-1} r(x). `jacobian` may be empty when the
/// settings select finite differences. A residual containing NaN/Inf at the
/// initial guess is a range failure, reported as non-convergence.
inline NewtonResult newton(const ResidualFn& residual, const JacobianFn& jacobian, Vec guess,
                           const NewtonSettings& s) {
  NewtonResult out;
  if (!(s.tol_residual > 0.0) || s.max_iter < 1) {
    out.error = "newton: invalid settings";
    return out;
  }
  Vec x = std::move(guess);
  Vec r = residual(x);
  if (!r.allFinite()) {
    out.error = "newton: residual not finite at initial guess";
    return out;
  }
  double rn = inf_norm(r);
  const double floor = 1e-15 * std::max(1.0, rn);
  int polish_left = 3;  // the converging iteration plus at most two polish solves
  for (int it = 0; it < s.max_iter; ++it) {
    if (rn <= floor) break;
    if (rn <= s.tol_residual && polish_left == 0) break;

    SpMat J = (s.jacobian == JacobianMode::FiniteDifference || !jacobian) ? fd_jacobian(residual, x, r)
                                                                          : jacobian(x);
    LinearSolveResult lin = linear_solve(J, -r);
    if (!lin.ok) {
      if (rn <= s.tol_residual) break;  // tolerance already met, keep x
      out.error = "newton: linear solve failed (" + lin.error + ")";
      out.x = std::move(x);
      out.residual_norm = rn;
      out.iterations = it;
      return out;
    }

    // Backtracking: halve the update while it leaves the residual non-finite
    // or larger than before.
    double lambda = 1.0;
    bool improved = false;
    Vec x_new, r_new;
    double rn_new = rn;
    for (int bt = 0; bt < 9; ++bt) {
      x_new = x + lambda * lin.x;
      r_new = residual(x_new);
      if (r_new.allFinite()) {
        rn_new = inf_norm(r_new);
        if (rn_new < rn) {
          improved = true;
          break;
        }
      }
      lambda *= 0.5;
    }
    if (!improved) {
      if (rn <= s.tol_residual) break;  // stagnated inside the tolerance
      out.error = "newton: no descent direction (stagnation)";
      out.x = std::move(x);
      out.residual_norm = rn;
      out.iterations = it;
      return out;
    }
    x = std::move(x_new);
    r = std::move(r_new);
    rn = rn_new;
    out.iterations = it + 1;
    if (rn <= s.tol_residual) --polish_left;
  }
  if (rn <= s.tol_residual) {
    out.converged = true;
    out.x = std::move(x);
    out.residual_norm = rn;
    out.error.clear();
    return out;
  }
  out.error = "newton: max_iter exceeded";
  out.x = std::move(x);
  out.residual_norm = rn;
  return out;
}

}  // namespace kscd
