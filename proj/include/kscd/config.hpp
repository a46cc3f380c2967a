#pragma once
// JSON configuration: schema-validated, unknown keys rejected, defaults per
// the documented contract (dt_min = 1e-13, eta = 0, c_boundary = neumann,
// jacobian = analytic).

#include <json.hpp>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "kscd/harness.hpp"
#include "kscd/model.hpp"
#include "kscd/schemes.hpp"

namespace kscd {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct OutputSpec {
  std::string diag_csv = "diagnostics.csv";
  std::string snapshot_dir = "snapshots";
  std::vector<double> record_times;
};

struct Config {
  Scheme scheme = Scheme::PP;
  Params params;
  InitialData init;
  double T = 1.0;
  TimeController time;
  NewtonSettings newton;
  OutputSpec outputs;
};

namespace detail {

using Json = nlohmann::json;

inline void reject_unknown(const Json& j, const std::set<std::string>& allowed,
                           const std::string& where) {
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!allowed.count(it.key()))
      throw ConfigError("config: unknown key '" + where + it.key() + "'");
}

inline double get_num(const Json& j, const std::string& key, const std::string& where) {
  if (!j.contains(key)) throw ConfigError("config: key '" + where + key + "' is required");
  if (!j.at(key).is_number()) throw ConfigError("config: key '" + where + key + "' must be a number");
  return j.at(key).get<double>();
}

inline double get_num_or(const Json& j, const std::string& key, double dflt,
                         const std::string& where) {
  if (!j.contains(key)) return dflt;
  return get_num(j, key, where);
}

inline std::string get_str(const Json& j, const std::string& key, const std::string& where) {
  if (!j.contains(key) || !j.at(key).is_string())
    throw ConfigError("config: key '" + where + key + "' must be a string");
  return j.at(key).get<std::string>();
}

}  // namespace detail

inline Config parse_config_checked(const std::string& text);

inline Config parse_config(const std::string& text) {
  try {
    return parse_config_checked(text);
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    // malformed values surfacing as json exceptions are schema violations
    throw ConfigError(std::string("config: ") + e.what());
  }
}

inline Config parse_config_checked(const std::string& text) {
  using detail::Json;
  Json j;
  try {
    j = Json::parse(text);
  } catch (const std::exception& e) {
    throw ConfigError(std::string("config: invalid JSON (") + e.what() + ")");
  }
  if (!j.is_object()) throw ConfigError("config: top level must be an object");
  detail::reject_unknown(j, {"scheme", "params", "grid", "init", "time", "newton", "outputs"}, "");

  Config cfg;

  std::string scheme = detail::get_str(j, "scheme", "");
  if (scheme == "pp")
    cfg.scheme = Scheme::PP;
  else if (scheme == "pe")
    cfg.scheme = Scheme::PE;
  else if (scheme == "log")
    cfg.scheme = Scheme::Log;
  else
    throw ConfigError("config: key 'scheme' must be one of pp, pe, log");

  // params
  if (!j.contains("params") || !j.at("params").is_object())
    throw ConfigError("config: key 'params' must be an object");
  {
    const Json& jp = j.at("params");
    detail::reject_unknown(jp, {"delta", "eps", "alpha", "eta", "c_boundary"}, "params.");
    if (!jp.contains("delta")) throw ConfigError("config: key 'params.delta' is required");
    if (!jp.contains("alpha")) throw ConfigError("config: key 'params.alpha' is required");
    cfg.params.delta = detail::get_num(jp, "delta", "params.");
    cfg.params.alpha = detail::get_num(jp, "alpha", "params.");
    cfg.params.eta = detail::get_num_or(jp, "eta", 0.0, "params.");
    if (jp.contains("eps")) {
      double e = detail::get_num(jp, "eps", "params.");
      if (e != 0.0 && e != 1.0) throw ConfigError("config: key 'params.eps' must be 0 or 1");
      cfg.params.eps = static_cast<int>(e);
    } else {
      cfg.params.eps = (cfg.scheme == Scheme::PP) ? 1 : 0;
    }
    if (jp.contains("c_boundary")) {
      std::string bc = detail::get_str(jp, "c_boundary", "params.");
      if (bc == "neumann")
        cfg.params.c_boundary = Bc::Neumann;
      else if (bc == "dirichlet0")
        cfg.params.c_boundary = Bc::Dirichlet0;
      else
        throw ConfigError("config: key 'params.c_boundary' must be neumann or dirichlet0");
    }
    if (!(cfg.params.delta >= 0.0)) throw ConfigError("config: key 'params.delta' must be >= 0");
    if (!(cfg.params.alpha > 0.0)) throw ConfigError("config: key 'params.alpha' must be > 0");
    if (!(cfg.params.eta >= 0.0)) throw ConfigError("config: key 'params.eta' must be >= 0");
  }
  if (cfg.scheme == Scheme::PP && cfg.params.eps != 1)
    throw ConfigError("config: key 'params.eps' must be 1 for the pp scheme");
  if ((cfg.scheme == Scheme::PE || cfg.scheme == Scheme::Log) && cfg.params.eps != 0)
    throw ConfigError("config: key 'params.eps' must be 0 for the pe/log schemes");
  if ((cfg.scheme == Scheme::PE || cfg.scheme == Scheme::Log) &&
      cfg.params.c_boundary != Bc::Neumann)
    throw ConfigError("config: key 'params.c_boundary' must be neumann for the pe/log schemes");
  if (cfg.scheme == Scheme::Log && !(cfg.params.delta > 0.0))
    throw ConfigError("config: key 'params.delta' must be > 0 for the log scheme");

  // grid
  if (!j.contains("grid") || !j.at("grid").is_object())
    throw ConfigError("config: key 'grid' must be an object");
  {
    const Json& jg = j.at("grid");
    std::string kind = detail::get_str(jg, "kind", "grid.");
    GridSpec gs;
    if (kind == "rect") {
      detail::reject_unknown(jg, {"kind", "nx", "ny", "bounds"}, "grid.");
      gs.kind = GridKind::Rect;
      gs.n1 = static_cast<int>(detail::get_num(jg, "nx", "grid."));
      gs.n2 = static_cast<int>(detail::get_num(jg, "ny", "grid."));
      if (jg.contains("bounds")) {
        if (!jg.at("bounds").is_array() || jg.at("bounds").size() != 4)
          throw ConfigError("config: key 'grid.bounds' must be [ax, bx, ay, by]");
        for (int k = 0; k < 4; ++k) gs.bounds[static_cast<std::size_t>(k)] = jg.at("bounds")[static_cast<std::size_t>(k)].get<double>();
      }
    } else if (kind == "polar") {
      detail::reject_unknown(jg, {"kind", "nr", "ntheta", "R"}, "grid.");
      gs.kind = GridKind::Polar;
      gs.n1 = static_cast<int>(detail::get_num(jg, "nr", "grid."));
      gs.n2 = static_cast<int>(detail::get_num(jg, "ntheta", "grid."));
      gs.radius = detail::get_num_or(jg, "R", 1.0, "grid.");
    } else if (kind == "radial") {
      detail::reject_unknown(jg, {"kind", "nr", "R"}, "grid.");
      gs.kind = GridKind::Radial;
      gs.n1 = static_cast<int>(detail::get_num(jg, "nr", "grid."));
      gs.radius = detail::get_num_or(jg, "R", 1.0, "grid.");
    } else {
      throw ConfigError("config: key 'grid.kind' must be rect, polar or radial");
    }
    cfg.params.domain = gs;
  }

  // init
  if (j.contains("init")) {
    const Json& ji = j.at("init");
    if (!ji.is_object()) throw ConfigError("config: key 'init' must be an object");
    std::string variant = detail::get_str(ji, "variant", "init.");
    if (variant == "experiment1") {
      detail::reject_unknown(ji, {"variant"}, "init.");
      cfg.init.variant = InitialData::Experiment1{};
    } else if (variant == "constant") {
      detail::reject_unknown(ji, {"variant", "value"}, "init.");
      InitialData::Constant c;
      c.value = detail::get_num(ji, "value", "init.");
      if (!(c.value >= 0.0)) throw ConfigError("config: key 'init.value' must be >= 0");
      cfg.init.variant = c;
    } else if (variant == "bump_sum") {
      detail::reject_unknown(ji, {"variant", "bumps"}, "init.");
      if (!ji.contains("bumps") || !ji.at("bumps").is_array() || ji.at("bumps").empty())
        throw ConfigError("config: key 'init.bumps' must be a nonempty array");
      InitialData::BumpSum bs;
      for (const auto& jb : ji.at("bumps")) {
        detail::reject_unknown(jb, {"x0", "y0", "M", "theta"}, "init.bumps[].");
        BumpSpec b;
        b.x0 = detail::get_num(jb, "x0", "init.bumps[].");
        b.y0 = detail::get_num(jb, "y0", "init.bumps[].");
        b.M = detail::get_num(jb, "M", "init.bumps[].");
        b.theta = detail::get_num(jb, "theta", "init.bumps[].");
        if (!(b.M > 0.0) || !(b.theta > 0.0))
          throw ConfigError("config: keys 'init.bumps[].M' and 'init.bumps[].theta' must be > 0");
        bs.bumps.push_back(b);
      }
      cfg.init.variant = bs;
    } else if (variant == "custom") {
      detail::reject_unknown(ji, {"variant", "values"}, "init.");
      if (!ji.contains("values") || !ji.at("values").is_array())
        throw ConfigError("config: key 'init.values' must be an array");
      InitialData::Custom t;
      for (const auto& v : ji.at("values")) t.values.push_back(v.get<double>());
      cfg.init.variant = t;
    } else {
      throw ConfigError("config: key 'init.variant' must be experiment1, bump_sum, constant or custom");
    }
  }

  // time
  cfg.time.dt = 1e-3;
  cfg.time.dt_min = 1e-13;
  cfg.time.dt_max = 1e-2;
  if (j.contains("time")) {
    const Json& jt = j.at("time");
    if (!jt.is_object()) throw ConfigError("config: key 'time' must be an object");
    detail::reject_unknown(jt, {"T", "dt", "dt_min", "dt_max", "growth_guard"}, "time.");
    cfg.T = detail::get_num_or(jt, "T", 1.0, "time.");
    cfg.time.dt = detail::get_num_or(jt, "dt", 1e-3, "time.");
    cfg.time.dt_min = detail::get_num_or(jt, "dt_min", 1e-13, "time.");
    cfg.time.dt_max = detail::get_num_or(jt, "dt_max", std::max(1e-2, cfg.time.dt), "time.");
    cfg.time.growth_guard = detail::get_num_or(jt, "growth_guard", 2.0, "time.");
  }
  if (!(cfg.T > 0.0)) throw ConfigError("config: key 'time.T' must be > 0");
  cfg.time.dt_max = std::max(cfg.time.dt_max, cfg.time.dt);
  try {
    cfg.time.validate();
  } catch (const std::exception& e) {
    throw ConfigError(std::string("config: key 'time': ") + e.what());
  }

  // newton
  if (j.contains("newton")) {
    const Json& jn = j.at("newton");
    if (!jn.is_object()) throw ConfigError("config: key 'newton' must be an object");
    detail::reject_unknown(jn, {"tol", "max_iter", "jacobian"}, "newton.");
    cfg.newton.tol_residual = detail::get_num_or(jn, "tol", 1e-10, "newton.");
    cfg.newton.max_iter = static_cast<int>(detail::get_num_or(jn, "max_iter", 50, "newton."));
    if (jn.contains("jacobian")) {
      std::string m = detail::get_str(jn, "jacobian", "newton.");
      if (m == "analytic")
        cfg.newton.jacobian = JacobianMode::Analytic;
      else if (m == "fd")
        cfg.newton.jacobian = JacobianMode::FiniteDifference;
      else
        throw ConfigError("config: key 'newton.jacobian' must be analytic or fd");
    }
    if (!(cfg.newton.tol_residual > 0.0))
      throw ConfigError("config: key 'newton.tol' must be > 0");
    if (cfg.newton.max_iter < 1) throw ConfigError("config: key 'newton.max_iter' must be >= 1");
  }

  // outputs
  if (j.contains("outputs")) {
    const Json& jo = j.at("outputs");
    if (!jo.is_object()) throw ConfigError("config: key 'outputs' must be an object");
    detail::reject_unknown(jo, {"diag_csv", "snapshot_dir", "record_times"}, "outputs.");
    if (jo.contains("diag_csv")) cfg.outputs.diag_csv = detail::get_str(jo, "diag_csv", "outputs.");
    if (jo.contains("snapshot_dir"))
      cfg.outputs.snapshot_dir = detail::get_str(jo, "snapshot_dir", "outputs.");
    if (jo.contains("record_times")) {
      if (!jo.at("record_times").is_array())
        throw ConfigError("config: key 'outputs.record_times' must be an array");
      for (const auto& v : jo.at("record_times"))
        cfg.outputs.record_times.push_back(v.get<double>());
    }
  }

  // sanity of the grid spec itself (resolution, extents)
  try {
    Grid g = build_grid(cfg.params.domain);
    if (std::holds_alternative<InitialData::Custom>(cfg.init.variant)) {
      const auto& t = std::get<InitialData::Custom>(cfg.init.variant);
      if (static_cast<int>(t.values.size()) != g.cells())
        throw ConfigError("config: key 'init.values' length does not match the grid cell count");
    }
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(std::string("config: key 'grid': ") + e.what());
  }

  return cfg;
}

}  // namespace kscd
