#pragma once
// Text output formats: diagnostics CSV (17 significant digits, one row per
// accepted step), snapshot files in canonical cell order, and the sweep,
// blow-up and bump report CSVs.

#include <cstdio>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "kscd/diagnostics.hpp"
#include "kscd/grid.hpp"
#include "kscd/harness.hpp"

namespace kscd {

/// Decimal text with 17 significant digits; round-trips doubles exactly.
inline std::string fmt17(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

inline std::ofstream open_out(const std::string& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open output file: " + path);
  return os;
}

inline const char* diag_csv_header() {
  return "t,mass,rho_min,rho_max,H1,H2p,H3p,diss_sqrt,diss_grad,entropy_residual,clamped";
}

inline void write_diag_csv(const std::string& path, const std::vector<DiagRecord>& rows) {
  std::ofstream os = open_out(path);
  os << diag_csv_header() << "\n";
  for (const DiagRecord& d : rows) {
    os << fmt17(d.t) << ',' << fmt17(d.mass) << ',' << fmt17(d.rho_min) << ',' << fmt17(d.rho_max)
       << ',' << fmt17(d.H1) << ',' << fmt17(d.H2p) << ',' << fmt17(d.H3p) << ','
       << fmt17(d.diss_sqrt) << ',' << fmt17(d.diss_grad) << ',' << fmt17(d.entropy_residual)
       << ',' << (d.clamped ? 1 : 0) << "\n";
  }
}

inline std::string grid_header(const Grid& g) {
  switch (g.kind) {
    case GridKind::Rect:
      return "# grid rect " + std::to_string(g.n1) + " " + std::to_string(g.n2) + " " +
             fmt17(g.bounds[0]) + " " + fmt17(g.bounds[1]) + " " + fmt17(g.bounds[2]) + " " +
             fmt17(g.bounds[3]);
    case GridKind::Polar:
      return "# grid polar " + std::to_string(g.n1) + " " + std::to_string(g.n2) + " " +
             fmt17(g.radius);
    case GridKind::Radial:
      return "# grid radial " + std::to_string(g.n1) + " " + fmt17(g.radius);
  }
  return "";
}

/// Snapshot: grid header line, time/variable line, then one value per line in
/// canonical cell order (row-major for rect, r-outer/theta-inner for polar).
inline void write_snapshot(const std::string& path, const Field& f, double t) {
  std::ofstream os = open_out(path);
  os << grid_header(*f.g) << "\n";
  os << "# t " << fmt17(t) << " variable " << (f.tag.empty() ? "field" : f.tag) << "\n";
  for (int i = 0; i < f.size(); ++i) os << fmt17(f[i]) << "\n";
}

inline void write_sweep_csv(const std::string& errors_path, const std::string& fit_path,
                            const SweepResult& r) {
  {
    std::ofstream os = open_out(errors_path);
    os << "delta,error,valid\n";
    for (const SweepEntry& e : r.entries)
      os << fmt17(e.delta) << ',' << fmt17(e.error) << ',' << (e.valid ? 1 : 0) << "\n";
  }
  {
    std::ofstream os = open_out(fit_path);
    os << "fitted_exponent,fit_r2,n_points\n";
    int n = 0;
    for (const SweepEntry& e : r.entries)
      if (e.valid) ++n;
    os << fmt17(r.fitted_exponent) << ',' << fmt17(r.fit_r2) << ',' << n << "\n";
  }
}

inline void write_blowup_csv(const std::string& path, const BlowupReport& r) {
  std::ofstream os = open_out(path);
  os << "alpha,delta,broke_down,t_break,final_dt,final_linf\n";
  os << fmt17(r.alpha) << ',' << fmt17(r.delta) << ',' << (r.broke_down ? 1 : 0) << ','
     << (r.broke_down ? fmt17(r.t_break) : std::string()) << ',' << fmt17(r.final_dt) << ','
     << fmt17(r.final_linf) << "\n";
}

inline void write_bump_csv(const std::string& entries_path, const std::string& fit_path,
                           const BumpReport& r) {
  {
    std::ofstream os = open_out(entries_path);
    os << "delta,radius,rho_max,steady_residual,converged,level\n";
    for (const BumpEntry& e : r.entries)
      os << fmt17(e.delta) << ',' << fmt17(e.radius) << ',' << fmt17(e.rho_max) << ','
         << fmt17(e.steady_residual) << ',' << (e.converged ? 1 : 0) << ',' << fmt17(r.level)
         << "\n";
  }
  {
    std::ofstream os = open_out(fit_path);
    os << "radius_exponent,radius_r2,height_exponent,height_r2\n";
    os << fmt17(r.radius_exponent) << ',' << fmt17(r.radius_r2) << ','
       << fmt17(r.height_exponent) << ',' << fmt17(r.height_r2) << "\n";
  }
}

}  // namespace kscd
