#pragma once
// Structured finite-volume grids on the computational domains: uniform
// rectangle, polar disk, and 1D radial disk. Geometry is exposed through face
// lists so the discrete operators work uniformly across grid kinds.

#include <array>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace kscd {

enum class GridKind { Rect, Polar, Radial };

/// Interior face between cells p and n. `area` is the face measure and `dist`
/// the center-to-center distance along the face normal.
struct Face {
  int p;
  int n;
  double area;
  double dist;
};

/// Positive-area boundary face; `dist` is the cell-center-to-face distance.
/// `in1`, `in2` are the first and second cells inward along the face normal
/// (-1 when the grid is too small), used for ghost extrapolation.
struct BoundaryFace {
  int cell;
  double area;
  double dist;
  int in1 = -1;
  int in2 = -1;
};

struct Grid {
  GridKind kind = GridKind::Rect;
  int n1 = 0;                      // rect: nx, polar/radial: nr
  int n2 = 1;                      // rect: ny, polar: ntheta, radial: 1
  std::array<double, 4> bounds{};  // rect only: ax, bx, ay, by
  double radius = 0.0;             // polar/radial only

  std::vector<double> measure;  // per-cell volume
  std::vector<double> cx, cy;   // cell centers, cartesian
  std::vector<double> cr;       // cell center radius (polar/radial)
  std::vector<Face> faces;
  std::vector<BoundaryFace> bfaces;

  int cells() const { return static_cast<int>(measure.size()); }

  double domain_measure() const {
    if (kind == GridKind::Rect)
      return (bounds[1] - bounds[0]) * (bounds[3] - bounds[2]);
    return std::numbers::pi * radius * radius;
  }

  // Canonical cell order: rect row-major (x fastest), polar r-outer/theta-inner.
  int index(int i, int j) const {
    return kind == GridKind::Rect ? j * n1 + i : i * n2 + j;
  }
};

/// Cell-centered scalar bound to a grid.
struct Field {
  const Grid* g = nullptr;
  std::vector<double> v;
  std::string tag;

  Field() = default;
  Field(const Grid& grid, double fill = 0.0, std::string t = "")
      : g(&grid), v(static_cast<std::size_t>(grid.cells()), fill), tag(std::move(t)) {}

  double& operator[](int i) { return v[static_cast<std::size_t>(i)]; }
  double operator[](int i) const { return v[static_cast<std::size_t>(i)]; }
  int size() const { return static_cast<int>(v.size()); }
};

template <class Fn>
Field sample(const Grid& g, Fn&& fn, std::string tag = "") {
  Field f(g, 0.0, std::move(tag));
  for (int i = 0; i < g.cells(); ++i) f[i] = fn(g.cx[i], g.cy[i]);
  return f;
}

inline bool all_finite(const Field& f) {
  for (double x : f.v)
    if (!std::isfinite(x)) return false;
  return true;
}

namespace detail {

// Compensated (Kahan) summation; keeps grid-wide reductions at O(eps)
// independently of the cell count, which the 1e-12 measure/mass invariants
// rely on for fine grids.
class KahanSum {
 public:
  void add(double x) {
    double y = x - c_;
    double t = s_ + y;
    c_ = (t - s_) - y;
    s_ = t;
  }
  double value() const { return s_; }

 private:
  double s_ = 0.0;
  double c_ = 0.0;
};

inline void check_measure_sum(const Grid& g) {
  KahanSum ks;
  for (double m : g.measure) {
    if (!(m > 0.0)) throw std::runtime_error("grid: nonpositive cell measure");
    ks.add(m);
  }
  double total = g.domain_measure();
  if (std::abs(ks.value() - total) > 1e-12 * total)
    throw std::runtime_error("grid: cell measures do not sum to domain measure");
}

}  // namespace detail

/// Uniform tensor grid on [ax,bx] x [ay,by].
inline Grid build_rect(int nx, int ny, std::array<double, 4> bounds) {
  if (nx < 2 || ny < 2) throw std::invalid_argument("build_rect: nx, ny >= 2 required");
  if (!(bounds[1] > bounds[0]) || !(bounds[3] > bounds[2]))
    throw std::invalid_argument("build_rect: degenerate bounds");
  Grid g;
  g.kind = GridKind::Rect;
  g.n1 = nx;
  g.n2 = ny;
  g.bounds = bounds;
  const double hx = (bounds[1] - bounds[0]) / nx;
  const double hy = (bounds[3] - bounds[2]) / ny;
  const int n = nx * ny;
  g.measure.assign(n, hx * hy);
  g.cx.resize(n);
  g.cy.resize(n);
  g.cr.resize(n);
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i < nx; ++i) {
      int id = g.index(i, j);
      g.cx[id] = bounds[0] + (i + 0.5) * hx;
      g.cy[id] = bounds[2] + (j + 0.5) * hy;
      g.cr[id] = std::hypot(g.cx[id], g.cy[id]);
    }
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i + 1 < nx; ++i)
      g.faces.push_back({g.index(i, j), g.index(i + 1, j), hy, hx});
  for (int j = 0; j + 1 < ny; ++j)
    for (int i = 0; i < nx; ++i)
      g.faces.push_back({g.index(i, j), g.index(i, j + 1), hx, hy});
  for (int j = 0; j < ny; ++j) {
    g.bfaces.push_back({g.index(0, j), hy, hx / 2, g.index(1, j), nx > 2 ? g.index(2, j) : -1});
    g.bfaces.push_back({g.index(nx - 1, j), hy, hx / 2, g.index(nx - 2, j),
                        nx > 2 ? g.index(nx - 3, j) : -1});
  }
  for (int i = 0; i < nx; ++i) {
    g.bfaces.push_back({g.index(i, 0), hx, hy / 2, g.index(i, 1), ny > 2 ? g.index(i, 2) : -1});
    g.bfaces.push_back({g.index(i, ny - 1), hx, hy / 2, g.index(i, ny - 2),
                        ny > 2 ? g.index(i, ny - 3) : -1});
  }
  detail::check_measure_sum(g);
  return g;
}

/// Polar grid on the disk of radius R: nr uniform rings, ntheta sectors,
/// periodic in theta. The r=0 face has zero area and is omitted, so the
/// innermost ring closes without a ghost cell.
inline Grid build_polar(int nr, int ntheta, double R) {
  if (nr < 2 || ntheta < 4 || !(R > 0.0))
    throw std::invalid_argument("build_polar: need nr >= 2, ntheta >= 4, R > 0");
  Grid g;
  g.kind = GridKind::Polar;
  g.n1 = nr;
  g.n2 = ntheta;
  g.radius = R;
  const double dr = R / nr;
  const double dth = 2.0 * std::numbers::pi / ntheta;
  const int n = nr * ntheta;
  g.measure.resize(n);
  g.cx.resize(n);
  g.cy.resize(n);
  g.cr.resize(n);
  for (int i = 0; i < nr; ++i) {
    const double r0 = i * dr, r1 = (i + 1) * dr;
    const double rc = 0.5 * (r0 + r1);
    const double vol = 0.5 * (r1 * r1 - r0 * r0) * dth;
    for (int j = 0; j < ntheta; ++j) {
      int id = g.index(i, j);
      double th = (j + 0.5) * dth;
      g.measure[id] = vol;
      g.cr[id] = rc;
      g.cx[id] = rc * std::cos(th);
      g.cy[id] = rc * std::sin(th);
    }
  }
  // radial faces between ring i and ring i+1
  for (int i = 0; i + 1 < nr; ++i) {
    const double rf = (i + 1) * dr;
    for (int j = 0; j < ntheta; ++j)
      g.faces.push_back({g.index(i, j), g.index(i + 1, j), rf * dth, dr});
  }
  // angular faces within each ring, wrapping at j = ntheta-1
  for (int i = 0; i < nr; ++i) {
    const double rc = (i + 0.5) * dr;
    for (int j = 0; j < ntheta; ++j)
      g.faces.push_back({g.index(i, j), g.index(i, (j + 1) % ntheta), dr, rc * dth});
  }
  for (int j = 0; j < ntheta; ++j)
    g.bfaces.push_back({g.index(nr - 1, j), R * dth, dr / 2, g.index(nr - 2, j),
                        nr > 2 ? g.index(nr - 3, j) : -1});
  detail::check_measure_sum(g);
  return g;
}

/// Radially symmetric grid on the disk of radius R: annular cells with full
/// 2*pi measure, one unknown per ring.
inline Grid build_radial(int nr, double R) {
  if (nr < 2 || !(R > 0.0)) throw std::invalid_argument("build_radial: need nr >= 2, R > 0");
  Grid g;
  g.kind = GridKind::Radial;
  g.n1 = nr;
  g.n2 = 1;
  g.radius = R;
  const double dr = R / nr;
  g.measure.resize(nr);
  g.cx.resize(nr);
  g.cy.assign(nr, 0.0);
  g.cr.resize(nr);
  for (int i = 0; i < nr; ++i) {
    const double r0 = i * dr, r1 = (i + 1) * dr;
    g.measure[i] = std::numbers::pi * (r1 * r1 - r0 * r0);
    g.cr[i] = 0.5 * (r0 + r1);
    g.cx[i] = g.cr[i];
  }
  for (int i = 0; i + 1 < nr; ++i) {
    const double rf = (i + 1) * dr;
    g.faces.push_back({i, i + 1, 2.0 * std::numbers::pi * rf, dr});
  }
  g.bfaces.push_back({nr - 1, 2.0 * std::numbers::pi * R, dr / 2, nr - 2, nr > 2 ? nr - 3 : -1});
  detail::check_measure_sum(g);
  return g;
}

/// Midpoint-rule integral of a cell field over the domain.
inline double integrate(const Field& f) {
  if (!f.g) throw std::invalid_argument("integrate: field not bound to a grid");
  detail::KahanSum ks;
  for (int i = 0; i < f.size(); ++i) ks.add(f[i] * f.g->measure[static_cast<std::size_t>(i)]);
  return ks.value();
}

}  // namespace kscd
