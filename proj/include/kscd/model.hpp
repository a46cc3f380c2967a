#pragma once
// Model data: parameters of the chemotaxis system, simulation state, initial
// data, the signal-production nonlinearity, the diffusion-matrix eigenvalues,
// and the v = c + delta*rho change of variable.

#include <cmath>
#include <complex>
#include <numbers>
#include <stdexcept>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "kscd/grid.hpp"
#include "kscd/operators.hpp"

namespace kscd {

struct GridSpec {
  GridKind kind = GridKind::Polar;
  int n1 = 0;
  int n2 = 0;
  double radius = 1.0;
  std::array<double, 4> bounds{0.0, 1.0, 0.0, 1.0};
};

inline Grid build_grid(const GridSpec& s) {
  switch (s.kind) {
    case GridKind::Rect:
      return build_rect(s.n1, s.n2, s.bounds);
    case GridKind::Polar:
      return build_polar(s.n1, s.n2, s.radius);
    case GridKind::Radial:
      return build_radial(s.n1, s.radius);
  }
  throw std::invalid_argument("build_grid: unknown kind");
}

struct Params {
  double delta = 0.0;  // cross-diffusion strength
  int eps = 1;         // 1: parabolic-parabolic, 0: parabolic-elliptic
  double alpha = 1.0;  // signal-production exponent
  double eta = 0.0;    // elliptic regularization of the log scheme
  Bc c_boundary = Bc::Neumann;
  GridSpec domain;

  void validate() const {
    if (!(delta >= 0.0)) throw std::invalid_argument("params: delta must be >= 0");
    if (!(alpha > 0.0)) throw std::invalid_argument("params: alpha must be > 0");
    if (eps != 0 && eps != 1) throw std::invalid_argument("params: eps must be 0 or 1");
    if (!(eta >= 0.0)) throw std::invalid_argument("params: eta must be >= 0");
  }
};

struct State {
  Field rho;
  Field c;
  double t = 0.0;
};

/// Density profile of the first experiment's initial datum.
inline double eval_rho0_experiment1(double x, double y) {
  double q = x * x + y * y - 1.0;
  double s = x - 0.1;
  return 80.0 * q * q * s * s + 5.0;
}

/// Gaussian bump of total mass M (over the whole plane), width theta,
/// centered at (x0, y0).
inline double eval_bump(double x, double y, double x0, double y0, double M, double theta) {
  if (!(theta > 0.0) || !(M > 0.0)) throw std::invalid_argument("eval_bump: need M > 0, theta > 0");
  double r2 = (x - x0) * (x - x0) + (y - y0) * (y - y0);
  return M / (2.0 * std::numbers::pi * theta) * std::exp(-r2 / (2.0 * theta));
}

struct BumpSpec {
  double x0 = 0.0;
  double y0 = 0.0;
  double M = 1.0;
  double theta = 1.0;
};

struct InitialData {
  struct Experiment1 {};
  struct Constant {
    double value = 0.0;
  };
  struct BumpSum {
    std::vector<BumpSpec> bumps;
  };
  struct Custom {
    std::vector<double> values;
  };
  std::variant<Experiment1, BumpSum, Constant, Custom> variant = Experiment1{};
};

/// Evaluates the initial density at cell centers (midpoint quadrature).
inline Field initial_density(const Grid& g, const InitialData& init) {
  Field rho0(g, 0.0, "rho");
  if (std::holds_alternative<InitialData::Experiment1>(init.variant)) {
    for (int i = 0; i < g.cells(); ++i) rho0[i] = eval_rho0_experiment1(g.cx[i], g.cy[i]);
  } else if (auto* c = std::get_if<InitialData::Constant>(&init.variant)) {
    if (!(c->value >= 0.0)) throw std::invalid_argument("initial data: constant must be >= 0");
    for (int i = 0; i < g.cells(); ++i) rho0[i] = c->value;
  } else if (auto* bs = std::get_if<InitialData::BumpSum>(&init.variant)) {
    for (const BumpSpec& b : bs->bumps) {
      if (!(b.M > 0.0) || !(b.theta > 0.0))
        throw std::invalid_argument("initial data: bump needs M > 0, theta > 0");
      for (int i = 0; i < g.cells(); ++i)
        rho0[i] += eval_bump(g.cx[i], g.cy[i], b.x0, b.y0, b.M, b.theta);
    }
  } else if (auto* t = std::get_if<InitialData::Custom>(&init.variant)) {
    if (static_cast<int>(t->values.size()) != g.cells())
      throw std::invalid_argument("initial data: custom table length does not match cell count");
    for (int i = 0; i < g.cells(); ++i) {
      if (!(t->values[static_cast<std::size_t>(i)] >= 0.0))
        throw std::invalid_argument("initial data: custom table has negative entries");
      rho0[i] = t->values[static_cast<std::size_t>(i)];
    }
  }
  return rho0;
}

struct SignalProduction {
  Field value;
  bool clamped = false;
};

/// Elementwise max(rho,0)^alpha; reports whether negative densities were
/// clamped.
inline SignalProduction signal_production(const Field& rho, double alpha) {
  SignalProduction out{Field(*rho.g, 0.0, "rho^alpha"), false};
  for (int i = 0; i < rho.size(); ++i) {
    double r = rho[i];
    if (r < 0.0) {
      out.clamped = true;
      r = 0.0;
    }
    out.value[i] = std::pow(r, alpha);
  }
  return out;
}

inline double signal_production_scalar(double rho, double alpha) {
  return std::pow(rho < 0.0 ? 0.0 : rho, alpha);
}

/// d(max(rho,0)^alpha)/drho, zero on the clamped branch.
inline double signal_production_deriv(double rho, double alpha) {
  if (rho <= 0.0) return 0.0;
  return alpha * std::pow(rho, alpha - 1.0);
}

/// Eigenvalues 1 +- i*sqrt(delta*rho) of the diffusion matrix; the real part
/// is 1 for every admissible state, which is the normal-ellipticity property.
inline std::pair<std::complex<double>, std::complex<double>> diffusion_eigenvalues(double rho,
                                                                                   double delta) {
  if (!(rho >= 0.0) || !(delta >= 0.0))
    throw std::invalid_argument("diffusion_eigenvalues: need rho >= 0, delta >= 0");
  double im = std::sqrt(delta * rho);
  return {std::complex<double>(1.0, im), std::complex<double>(1.0, -im)};
}

/// v = c + delta*rho.
inline Field reformulate(const State& s, double delta) {
  if (s.rho.g != s.c.g) throw std::invalid_argument("reformulate: fields on different grids");
  Field v(*s.rho.g, 0.0, "v");
  for (int i = 0; i < v.size(); ++i) v[i] = s.c[i] + delta * s.rho[i];
  return v;
}

/// c = v - delta*rho; exact inverse of reformulate up to rounding.
inline Field recover_c(const Field& v, const Field& rho, double delta) {
  if (v.g != rho.g) throw std::invalid_argument("recover_c: fields on different grids");
  Field c(*v.g, 0.0, "c");
  for (int i = 0; i < c.size(); ++i) c[i] = v[i] - delta * rho[i];
  return c;
}

}  // namespace kscd
