#include <catch2/catch_amalgamated.hpp>
#include <cmath>
#include <numbers>

#include "kscd/diagnostics.hpp"
#include "kscd/grid.hpp"
#include "test_support.hpp"

using namespace kscd;
using std::numbers::pi;

TEST_CASE("entropy_H1 closed forms") {
  Grid g = build_polar(24, 32, 1.0);
  CHECK(entropy_H1(Field(g, 1.0)) == Catch::Approx(-pi).epsilon(1e-12));
  CHECK(std::abs(entropy_H1(Field(g, std::numbers::e))) < 1e-12);
  CHECK(entropy_H1(Field(g, 0.0)) == 0.0);

  // convexity-consistency: constant fields give |Omega| rho (log rho - 1)
  double r = 3.7;
  CHECK(entropy_H1(Field(g, r)) == Catch::Approx(pi * r * (std::log(r) - 1.0)).epsilon(1e-12));
}

TEST_CASE("entropy_Hp closed forms and refinement oracle") {
  Grid g = build_rect(8, 8, {0, 1, 0, 1});
  CHECK(entropy_Hp(Field(g, 2.0), 2) == Catch::Approx(4.0).epsilon(1e-13));
  CHECK(entropy_Hp(Field(g, 0.0), 3) == 0.0);
  CHECK_THROWS_AS(entropy_Hp(Field(g, 1.0), 4), std::invalid_argument);

  auto hp2 = [](int nr, int nt) {
    Grid gg = build_polar(nr, nt, 1.0);
    return entropy_Hp(sample(gg, eval_rho0_experiment1), 2);
  };
  double coarse = hp2(80, 96);
  double fine = hp2(320, 384);
  CHECK(coarse == Catch::Approx(fine).epsilon(5e-3));
}

TEST_CASE("entropy residual of a constant steady state") {
  Grid g = build_polar(10, 12, 1.0);
  Params p;
  p.alpha = 1.5;
  p.delta = 0.01;
  double r = 2.0;
  State s;
  s.rho = Field(g, r, "rho");
  s.c = Field(g, 0.0, "c");
  double expected = -(p.delta * r * r + std::pow(r, p.alpha + 1.0)) * pi;
  CHECK(entropy_residual_H1(s, s, 1e-2, p) == Catch::Approx(expected).epsilon(1e-11));
}

TEST_CASE("entropy residual approaches the continuous-in-time value as dt -> 0") {
  Grid g = build_radial(40, 1.0);
  Params p;
  p.alpha = 1.0;
  p.delta = 0.02;
  Field base = sample(g, [](double x, double) { return 2.0 + std::cos(pi * x); });
  auto rho_at = [&](double t) {
    Field f = base;
    double a = 1.0 + 0.5 * t;
    for (int i = 0; i < f.size(); ++i) f[i] *= a;
    return f;
  };
  // continuous-in-time residual of the same discrete functionals:
  // dH1/dt = sum V log(rho) drho/dt with drho/dt = 0.5 * base
  double t0 = 0.3;
  Field r0 = rho_at(t0);
  double dH = 0.0;
  for (int i = 0; i < g.cells(); ++i)
    dH += std::log(r0[i]) * 0.5 * base[i] * g.measure[static_cast<std::size_t>(i)];
  auto [ds, dg] = dissipation_terms(r0, p.delta);
  double cont = dH + ds + dg - entropy_inequality_rhs(r0, p);

  auto disc = [&](double dt) {
    State sn, so;
    sn.rho = rho_at(t0);
    so.rho = rho_at(t0 - dt);
    sn.c = so.c = Field(g, 0.0, "c");
    return entropy_residual_H1(sn, so, dt, p);
  };
  double gap1 = std::abs(disc(1e-2) - cont);
  double gap2 = std::abs(disc(5e-3) - cont);
  CHECK(gap2 < gap1);
  CHECK(gap1 / gap2 == Catch::Approx(2.0).epsilon(0.35));  // first order in dt
}

TEST_CASE("dissipation terms") {
  Grid g = build_rect(50, 50, {0, 1, 0, 1});
  auto [a0, b0] = dissipation_terms(Field(g, 1.5), 0.3);
  CHECK(a0 == 0.0);
  CHECK(b0 == 0.0);

  Field f = sample(g, [](double x, double) { return x * x; });
  auto [ds, dg] = dissipation_terms(f, 0.0);
  CHECK(dg == 0.0);                                  // delta = 0
  CHECK(ds == Catch::Approx(4.0 * (1.0 - 1.0 / 50)).epsilon(1e-12));
  CHECK(std::abs(ds - 4.0) < 8.0 / 50);              // 4 int |grad x|^2 = 4, O(h)
}

TEST_CASE("discrete H2 norms") {
  Grid g = build_rect(64, 64, {0, 1, 0, 1});
  DiffNorms z = discrete_h2_norms(Field(g, 0.0));
  CHECK(z.l2 == 0.0);
  CHECK(z.h2 == 0.0);

  DiffNorms c = discrete_h2_norms(Field(g, 2.0));
  CHECK(c.l2 == Catch::Approx(2.0).epsilon(1e-13));  // sqrt(c^2 |Omega|)
  CHECK(c.h1 == Catch::Approx(c.l2).epsilon(1e-13));
  CHECK(c.h2 == Catch::Approx(c.l2).epsilon(1e-13));

  // |lap sin(pi x)|^2_{L2} = pi^4 / 2 on the unit square
  Field f = sample(g, [](double x, double) { return std::sin(pi * x); });
  DiffNorms n = discrete_h2_norms(f);
  double lap_part = n.h2 * n.h2 - n.h1 * n.h1;
  CHECK(lap_part == Catch::Approx(pi * pi * pi * pi / 2.0).epsilon(0.02));
}

TEST_CASE("norm ordering holds for random fields") {
  int seed = 900;
  for (const Grid& g :
       {build_rect(9, 7, {0, 1, 0, 1}), build_polar(8, 12, 1.0), build_radial(15, 1.0)}) {
    for (int k = 0; k < 5; ++k) {
      Field f = kscd_test::random_field(g, -2.0, 2.0, static_cast<unsigned>(seed++));
      DiffNorms n = discrete_h2_norms(f);
      CHECK(n.l2 <= n.h1 + 1e-15);
      CHECK(n.h1 <= n.h2 + 1e-15);
    }
  }
}

TEST_CASE("grad_laplacian_seminorm basics") {
  Grid g = build_rect(32, 32, {0, 1, 0, 1});
  CHECK(grad_laplacian_seminorm(Field(g, 0.0)) == 0.0);
  CHECK(grad_laplacian_seminorm(Field(g, 5.0)) < 1e-20);
  Field f = sample(g, [](double x, double) { return std::cos(pi * x); });
  CHECK(grad_laplacian_seminorm(f) > 0.0);
}

TEST_CASE("level_set_radius measures crossing radii") {
  Grid g = build_radial(200, 1.0);
  CHECK(level_set_radius(Field(g, 2e-2), 1e-2) == Catch::Approx(1.0));  // never below

  Field step = sample(g, [](double x, double) { return x < 0.3 ? 1.0 : 0.0; });
  CHECK(level_set_radius(step, 1e-2) == Catch::Approx(0.3).margin(1.0 / 200 + 1e-12));

  const double theta = 5e-3;
  Field gauss = sample(g, [&](double x, double) { return std::exp(-x * x / (2 * theta)); });
  for (double lvl : {0.5, 0.1, 1e-2}) {
    double expected = std::sqrt(-2.0 * theta * std::log(lvl));
    CHECK(level_set_radius(gauss, lvl) == Catch::Approx(expected).margin(2.0 / 200));
  }
  // monotone nonincreasing in the level for unimodal profiles
  CHECK(level_set_radius(gauss, 0.5) <= level_set_radius(gauss, 0.1));
  CHECK(level_set_radius(gauss, 0.1) <= level_set_radius(gauss, 1e-2));

  Grid gp = build_polar(8, 8, 1.0);
  CHECK_THROWS_AS(level_set_radius(Field(gp, 1.0), 0.5), std::invalid_argument);
}
