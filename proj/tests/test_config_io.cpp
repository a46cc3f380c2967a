#include <catch2/catch_amalgamated.hpp>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "kscd/config.hpp"
#include "kscd/io.hpp"

using namespace kscd;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream is(path);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

std::filesystem::path tmpdir() {
  auto dir = std::filesystem::temp_directory_path() / "kscd_io_test";
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("minimal config gets the documented defaults") {
  Config cfg = parse_config(R"({
    "scheme": "pp",
    "params": {"delta": 1e-3, "alpha": 1.0},
    "grid": {"kind": "polar", "nr": 8, "ntheta": 8}
  })");
  CHECK(cfg.scheme == Scheme::PP);
  CHECK(cfg.params.eps == 1);
  CHECK(cfg.params.eta == 0.0);
  CHECK(cfg.params.c_boundary == Bc::Neumann);
  CHECK(cfg.time.dt_min == 1e-13);
  CHECK(cfg.newton.jacobian == JacobianMode::Analytic);
  CHECK(cfg.newton.tol_residual == 1e-10);
  CHECK(cfg.newton.max_iter == 50);

  Config cpe = parse_config(R"({
    "scheme": "pe",
    "params": {"delta": 1e-3, "alpha": 0.5},
    "grid": {"kind": "radial", "nr": 16}
  })");
  CHECK(cpe.params.eps == 0);  // defaulted from the scheme
}

TEST_CASE("config rejects invalid values naming the key") {
  auto rejects = [](const std::string& text, const std::string& needle) {
    try {
      parse_config(text);
      FAIL("expected ConfigError for " + needle);
    } catch (const ConfigError& e) {
      CHECK(std::string(e.what()).find(needle) != std::string::npos);
    }
  };
  rejects(R"({"scheme":"pp","params":{"delta":1e-3,"alpha":1,"eps":2},
              "grid":{"kind":"polar","nr":8,"ntheta":8}})",
          "eps");
  rejects(R"({"scheme":"pp","params":{"delta":-1e-3,"alpha":1},
              "grid":{"kind":"polar","nr":8,"ntheta":8}})",
          "delta");
  rejects(R"({"scheme":"pp","params":{"delta":1e-3,"alpha":1,"bogus":3},
              "grid":{"kind":"polar","nr":8,"ntheta":8}})",
          "params.bogus");
  rejects(R"({"scheme":"log","params":{"delta":1e-3,"alpha":1,"eps":1},
              "grid":{"kind":"polar","nr":8,"ntheta":8}})",
          "eps");
  rejects(R"({"scheme":"pe","params":{"delta":1e-3,"alpha":1,"c_boundary":"dirichlet0"},
              "grid":{"kind":"radial","nr":8}})",
          "c_boundary");
  rejects(R"({"scheme":"pp","params":{"delta":1e-3,"alpha":1},
              "grid":{"kind":"polar","nr":1,"ntheta":8}})",
          "grid");
  rejects(R"({"scheme":"pp","params":{"delta":1e-3,"alpha":1},
              "grid":{"kind":"rect","ny":8}})",
          "grid.nx");
  rejects(R"({"scheme":"pp","params":{"delta":1e-3},
              "grid":{"kind":"polar","nr":8,"ntheta":8}})",
          "params.alpha");
  rejects(R"({"scheme":"pp","params":{"delta":1e-3,"alpha":1},
              "grid":{"kind":"rect","nx":8,"ny":8,"bounds":[0,"x",0,1]}})",
          "config");
}

TEST_CASE("fmt17 round-trips doubles exactly") {
  for (double x : {1.0, -3.5e-13, 2.0 / 3.0, 6.62607015e-34, 123456789.123456789, 0.0}) {
    std::string s = fmt17(x);
    double back = std::strtod(s.c_str(), nullptr);
    CHECK(std::memcmp(&back, &x, sizeof(double)) == 0);
  }
}

TEST_CASE("diagnostics CSV format") {
  auto dir = tmpdir();
  std::string path = (dir / "diag.csv").string();
  DiagRecord d;
  d.t = 0.125;
  d.mass = 26.5;
  d.rho_min = 1.0;
  d.rho_max = 3.0;
  d.H1 = -1.5;
  d.H2p = 2.0;
  d.H3p = 4.0;
  d.diss_sqrt = 0.25;
  d.diss_grad = 0.5;
  d.entropy_residual = -7.0;
  d.clamped = false;
  write_diag_csv(path, {d});
  std::string text = slurp(path);
  CHECK(text.rfind("t,mass,rho_min,rho_max,H1,H2p,H3p,diss_sqrt,diss_grad,entropy_residual,clamped\n",
                   0) == 0);
  CHECK(text.find("0.125,26.5,1,3,-1.5,2,4,0.25,0.5,-7,0") != std::string::npos);

  write_diag_csv(path, {d});
  CHECK(slurp(path) == text);  // byte-identical on rewrite
}

TEST_CASE("snapshot format carries grid, time and tag") {
  auto dir = tmpdir();
  Grid g = build_polar(3, 4, 2.0);
  Field f(g, 1.0, "rho");
  f[0] = 0.5;
  std::string path = (dir / "snap.txt").string();
  write_snapshot(path, f, 0.25);
  std::istringstream is(slurp(path));
  std::string line1, line2;
  std::getline(is, line1);
  std::getline(is, line2);
  CHECK(line1 == "# grid polar 3 4 2");
  CHECK(line2 == "# t 0.25 variable rho");
  int count = 0;
  std::string line;
  double first = -1.0;
  while (std::getline(is, line)) {
    if (count == 0) first = std::strtod(line.c_str(), nullptr);
    ++count;
  }
  CHECK(count == g.cells());
  CHECK(first == 0.5);

  Grid gr = build_rect(2, 3, {0.0, 1.0, 0.0, 2.0});
  std::string path2 = (dir / "snap2.txt").string();
  write_snapshot(path2, Field(gr, 0.0, "c"), 0.0);
  std::istringstream is2(slurp(path2));
  std::getline(is2, line1);
  CHECK(line1 == "# grid rect 2 3 0 1 0 2");
}
