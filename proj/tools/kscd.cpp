// Command-line driver: run | sweep | blowup | bumps, all fed by a JSON config.
// Exit codes: 0 ok, 2 config or usage error, 3 breakdown (run), 4 numerical
// failure.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "kscd/config.hpp"
#include "kscd/harness.hpp"
#include "kscd/io.hpp"

namespace {

using namespace kscd;

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitBreakdown = 3;
constexpr int kExitNumerical = 4;

void usage(std::ostream& os) {
  os << "usage: kscd <run|sweep|blowup|bumps> <config.json> [options]\n"
        "  run    <config>                  single simulation, diagnostics CSV + snapshots\n"
        "  sweep  <config> --deltas d1,d2,... [--norm l2|h2]\n"
        "                                   vanishing cross-diffusion rate study\n"
        "  blowup <config>                  integrate until breakdown or time.T\n"
        "  bumps  <config> --deltas d1,d2,...\n"
        "                                   steady bump scaling study (radial grid)\n";
}

std::string read_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("config: cannot read file '" + path + "'");
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

std::vector<double> parse_deltas(const std::string& arg) {
  std::vector<double> out;
  std::stringstream ss(arg);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    std::size_t pos = 0;
    double v = std::stod(item, &pos);
    if (pos != item.size()) throw ConfigError("config: bad delta value '" + item + "'");
    if (!(v > 0.0)) throw ConfigError("config: deltas must be positive");
    out.push_back(v);
  }
  if (out.empty()) throw ConfigError("config: empty delta list");
  std::sort(out.begin(), out.end(), std::greater<double>());
  return out;
}

std::string with_suffix(const std::string& path, const std::string& suffix) {
  std::filesystem::path p(path);
  std::filesystem::path q = p.parent_path() / (p.stem().string() + suffix + p.extension().string());
  return q.string();
}

// Output paths are part of the config contract: failures are config errors.
void prepare_output_paths(const Config& cfg, bool snapshots) {
  std::error_code ec;
  std::filesystem::path diag(cfg.outputs.diag_csv);
  if (diag.has_parent_path()) std::filesystem::create_directories(diag.parent_path(), ec);
  if (snapshots) std::filesystem::create_directories(cfg.outputs.snapshot_dir, ec);
  std::ofstream probe(cfg.outputs.diag_csv, std::ios::app);
  if (!probe) throw ConfigError("config: key 'outputs.diag_csv' is not writable: " +
                                cfg.outputs.diag_csv);
  if (snapshots) {
    auto p = std::filesystem::path(cfg.outputs.snapshot_dir) / ".writable";
    std::ofstream sp(p);
    if (!sp) throw ConfigError("config: key 'outputs.snapshot_dir' is not writable: " +
                               cfg.outputs.snapshot_dir);
    sp.close();
    std::filesystem::remove(p, ec);
  }
}

State initial_state(const Grid& g, const Config& cfg) {
  State st;
  st.rho = initial_density(g, cfg.init);
  st.c = Field(g, 0.0, "c");
  st.t = 0.0;
  if (cfg.scheme == Scheme::Log) {
    for (int i = 0; i < g.cells(); ++i)
      if (!(st.rho[i] > 0.0))
        throw ConfigError("config: key 'init' must be strictly positive for the log scheme");
  }
  return st;
}

int cmd_run(const Config& cfg) {
  Grid g = build_grid(cfg.params.domain);
  State st = initial_state(g, cfg);
  prepare_output_paths(cfg, true);
  RunOptions opt;
  opt.record_times = cfg.outputs.record_times;
  RunResult rr = run(std::move(st), cfg.T, cfg.time, cfg.params, cfg.scheme, cfg.newton, opt);
  write_diag_csv(cfg.outputs.diag_csv, rr.diag);
  for (std::size_t k = 0; k < rr.snapshots.size(); ++k) {
    char idx[8];
    std::snprintf(idx, sizeof(idx), "%03zu", k);
    std::filesystem::path dir(cfg.outputs.snapshot_dir);
    write_snapshot((dir / ("snap_" + std::string(idx) + "_rho.txt")).string(), rr.snapshots[k].rho,
                   rr.snapshots[k].t);
    write_snapshot((dir / ("snap_" + std::string(idx) + "_c.txt")).string(), rr.snapshots[k].c,
                   rr.snapshots[k].t);
  }
  if (rr.breakdown) {
    std::cerr << "run: breakdown at t = " << fmt17(rr.final_state.t)
              << " (dt fell below dt_min); partial outputs written\n";
    return kExitBreakdown;
  }
  return kExitOk;
}

int cmd_sweep(const Config& cfg, const std::vector<double>& deltas, ErrorNorm norm) {
  if (deltas.size() < 2) throw ConfigError("config: at least two deltas required for sweep");
  if (cfg.scheme == Scheme::Log)
    throw ConfigError("config: key 'scheme' must be pp or pe for sweep (the delta = 0 reference "
                      "cannot use the log scheme)");
  SweepSpec spec;
  spec.deltas = deltas;
  spec.base = cfg.params;
  spec.scheme = cfg.scheme;
  spec.grid = cfg.params.domain;
  spec.init = cfg.init;
  spec.T = cfg.T;
  spec.dt = cfg.time.dt;
  spec.record_times = cfg.outputs.record_times;
  spec.error_norm = norm;
  spec.newton = cfg.newton;
  prepare_output_paths(cfg, false);
  SweepResult res = delta_sweep(spec);
  write_sweep_csv(cfg.outputs.diag_csv, with_suffix(cfg.outputs.diag_csv, "_fit"), res);
  for (const SweepEntry& e : res.entries)
    if (!e.valid)
      std::cerr << "sweep: delta = " << fmt17(e.delta) << " excluded (breakdown or zero error)\n";
  if (!res.fit_ok) {
    std::cerr << "sweep: fewer than two valid deltas, no fit\n";
    return kExitNumerical;
  }
  if (res.fit_r2 < 0.95)
    std::cerr << "sweep: poor fit, r2 = " << fmt17(res.fit_r2) << " < 0.95\n";
  return kExitOk;
}

int cmd_blowup(const Config& cfg) {
  Grid g = build_grid(cfg.params.domain);
  State st = initial_state(g, cfg);
  prepare_output_paths(cfg, false);
  BlowupReport rep = blowup_probe(std::move(st), cfg.T, cfg.time, cfg.params, cfg.scheme, cfg.newton);
  write_blowup_csv(cfg.outputs.diag_csv, rep);
  return kExitOk;
}

int cmd_bumps(const Config& cfg, const std::vector<double>& deltas) {
  if (cfg.params.domain.kind != GridKind::Radial)
    throw ConfigError("config: key 'grid.kind' must be radial for bumps");
  if (cfg.scheme != Scheme::PP)
    throw ConfigError("config: key 'scheme' must be pp for bumps (Dirichlet chemical)");
  prepare_output_paths(cfg, false);
  BumpReport rep =
      bump_study(deltas, cfg.params, cfg.params.domain, cfg.init, cfg.time, cfg.newton, cfg.T);
  write_bump_csv(cfg.outputs.diag_csv, with_suffix(cfg.outputs.diag_csv, "_fit"), rep);
  for (const BumpEntry& e : rep.entries)
    if (!e.converged)
      std::cerr << "bumps: delta = " << fmt17(e.delta) << " did not reach the steady state\n";
  if (!rep.fits_ok) {
    std::cerr << "bumps: fewer than two converged deltas, no fit\n";
    return kExitNumerical;
  }
  if (rep.radius_r2 < 0.95 || rep.height_r2 < 0.95)
    std::cerr << "bumps: poor fit, r2 = " << fmt17(rep.radius_r2) << " / "
              << fmt17(rep.height_r2) << " < 0.95\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  if (args.size() < 2) {
    usage(std::cerr);
    return kExitConfig;
  }
  const std::string& cmd = args[0];
  const std::string& config_path = args[1];

  std::vector<double> deltas;
  ErrorNorm norm = ErrorNorm::H2;
  try {
    for (std::size_t i = 2; i < args.size(); ++i) {
      if (args[i] == "--deltas" && i + 1 < args.size()) {
        deltas = parse_deltas(args[++i]);
      } else if (args[i] == "--norm" && i + 1 < args.size()) {
        const std::string& n = args[++i];
        if (n == "l2")
          norm = ErrorNorm::L2;
        else if (n == "h2")
          norm = ErrorNorm::H2;
        else
          throw ConfigError("config: --norm must be l2 or h2");
      } else {
        usage(std::cerr);
        return kExitConfig;
      }
    }

    Config cfg = parse_config(read_file(config_path));
    if (cmd == "run") return cmd_run(cfg);
    if (cmd == "sweep") {
      if (deltas.empty()) throw ConfigError("config: sweep requires --deltas");
      return cmd_sweep(cfg, deltas, norm);
    }
    if (cmd == "blowup") return cmd_blowup(cfg);
    if (cmd == "bumps") {
      if (deltas.empty()) throw ConfigError("config: bumps requires --deltas");
      return cmd_bumps(cfg, deltas);
    }
    usage(std::cerr);
    return kExitConfig;
  } catch (const ConfigError& e) {
    std::cerr << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumerical;
  }
}
