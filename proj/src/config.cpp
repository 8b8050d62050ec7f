#include "epispde/config.hpp"

#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace epispde {

namespace {

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void fail(int line, const std::string& msg) {
  throw ConfigError("line " + std::to_string(line) + ": " + msg);
}

double parse_number(const std::string& s, int line) {
  errno = 0;
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end == s.c_str() || *end != '\0' || errno == ERANGE)
    fail(line, "expected a number, got '" + s + "'");
  return v;
}

int parse_int(const std::string& s, int line) {
  const double v = parse_number(s, line);
  if (v != std::floor(v) || std::fabs(v) > 1e9) fail(line, "expected an integer, got '" + s + "'");
  return static_cast<int>(v);
}

std::uint64_t parse_u64(const std::string& s, int line) {
  errno = 0;
  char* end = nullptr;
  const unsigned long long v = std::strtoull(s.c_str(), &end, 10);
  if (end == s.c_str() || *end != '\0' || errno == ERANGE)
    fail(line, "expected an unsigned integer, got '" + s + "'");
  return static_cast<std::uint64_t>(v);
}

std::vector<std::string> split_csv(const std::string& s) {
  std::vector<std::string> parts;
  std::string cur;
  for (char c : s) {
    if (c == ',') {
      parts.push_back(trim(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  parts.push_back(trim(cur));
  return parts;
}

FieldSpec parse_field_spec(const std::string& raw, int line) {
  const std::string s = trim(raw);
  if (s.size() < 2 || s.front() != '{' || s.back() != '}')
    fail(line, "expected a field spec like {constant: 1.0}");
  const std::string body = s.substr(1, s.size() - 2);
  const std::size_t colon = body.find(':');
  if (colon == std::string::npos) fail(line, "field spec needs 'kind: args'");
  const std::string kind = trim(body.substr(0, colon));
  const std::vector<std::string> args = split_csv(body.substr(colon + 1));

  FieldSpec spec;
  if (kind == "constant") {
    if (args.size() != 1) fail(line, "{constant: v} takes one value");
    spec.kind = FieldSpec::Kind::Constant;
    spec.base = parse_number(args[0], line);
  } else if (kind == "cosine") {
    if (args.size() != 3) fail(line, "{cosine: base, amp, mode} takes three values");
    spec.kind = FieldSpec::Kind::Cosine;
    spec.base = parse_number(args[0], line);
    spec.amp = parse_number(args[1], line);
    spec.mode = parse_int(args[2], line);
    if (spec.mode < 0) fail(line, "cosine mode must be >= 0");
  } else if (kind == "file") {
    if (args.size() != 1 || args[0].empty()) fail(line, "{file: path} takes one path");
    spec.kind = FieldSpec::Kind::File;
    spec.path = args[0];
  } else {
    fail(line, "unknown field kind '" + kind + "'");
  }
  return spec;
}

}  // namespace

RunConfig parse_config(const std::string& text) {
  RunConfig cfg;
  std::set<std::string> seen;
  std::set<std::string> required = {"time.horizon", "model.lambda", "model.mu1",
                                    "model.mu2",    "model.alpha",  "model.k1",
                                    "model.k2",     "noise.mode",   "init.S0",
                                    "init.I0",      "mc.seed",      "mc.n_paths"};

  std::istringstream in(text);
  std::string raw;
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    const std::size_t hash = raw.find('#');
    if (hash != std::string::npos) raw = raw.substr(0, hash);
    const std::string stripped = trim(raw);
    if (stripped.empty()) continue;
    const std::size_t eq = stripped.find('=');
    if (eq == std::string::npos) fail(line, "expected 'key = value'");
    const std::string key = trim(stripped.substr(0, eq));
    const std::string value = trim(stripped.substr(eq + 1));
    if (key.empty()) fail(line, "missing key");
    if (value.empty()) fail(line, "missing value for '" + key + "'");
    if (!seen.insert(key).second) fail(line, "duplicate key '" + key + "'");

    if (key == "grid.n") {
      cfg.n = parse_int(value, line);
    } else if (key == "time.dt") {
      cfg.dt = parse_number(value, line);
    } else if (key == "time.horizon") {
      cfg.horizon = parse_number(value, line);
    } else if (key == "time.record_every") {
      cfg.record_every = parse_int(value, line);
    } else if (key == "model.lambda") {
      cfg.lambda = parse_field_spec(value, line);
    } else if (key == "model.mu1") {
      cfg.mu1 = parse_field_spec(value, line);
    } else if (key == "model.mu2") {
      cfg.mu2 = parse_field_spec(value, line);
    } else if (key == "model.alpha") {
      cfg.alpha = parse_field_spec(value, line);
    } else if (key == "model.k1") {
      cfg.k1 = parse_number(value, line);
    } else if (key == "model.k2") {
      cfg.k2 = parse_number(value, line);
    } else if (key == "noise.mode") {
      if (value != "kl" && value != "space_independent")
        fail(line, "noise.mode must be 'kl' or 'space_independent'");
      cfg.noise.mode = value;
    } else if (key == "noise.family") {
      if (value != "geometric" && value != "polynomial")
        fail(line, "noise.family must be 'geometric' or 'polynomial'");
      cfg.noise.family = value;
    } else if (key == "noise.a") {
      cfg.noise.a = parse_number(value, line);
    } else if (key == "noise.q_or_r") {
      cfg.noise.q_or_r = parse_number(value, line);
    } else if (key == "noise.K") {
      cfg.noise.K = parse_int(value, line);
    } else if (key == "noise.sigma1") {
      cfg.noise.sigma1 = parse_number(value, line);
    } else if (key == "noise.sigma2") {
      cfg.noise.sigma2 = parse_number(value, line);
    } else if (key == "noise.tail_tol") {
      cfg.noise.tail_tol = parse_number(value, line);
    } else if (key == "init.S0") {
      cfg.s0 = parse_field_spec(value, line);
    } else if (key == "init.I0") {
      cfg.i0 = parse_field_spec(value, line);
    } else if (key == "mc.seed") {
      cfg.seed = parse_u64(value, line);
    } else if (key == "mc.n_paths") {
      cfg.n_paths = parse_int(value, line);
    } else if (key == "analysis.window_frac") {
      cfg.analysis.window_frac = parse_number(value, line);
    } else if (key == "analysis.eps_slope") {
      cfg.analysis.eps_slope = parse_number(value, line);
    } else if (key == "analysis.eps_perm") {
      cfg.analysis.eps_perm = parse_number(value, line);
    } else if (key == "analysis.p") {
      cfg.analysis.p = parse_number(value, line);
    } else if (key == "output.snapshot_times") {
      for (const std::string& part : split_csv(value))
        cfg.snapshot_times.push_back(parse_number(part, line));
    } else if (key == "output.snapshot_path") {
      cfg.snapshot_path = value;
    } else {
      fail(line, "unknown key '" + key + "'");
    }
  }

  for (const std::string& key : required)
    if (seen.find(key) == seen.end())
      throw ConfigError("missing required key '" + key + "'");
  if (cfg.noise.mode == "kl")
    for (const char* key : {"noise.family", "noise.a", "noise.q_or_r", "noise.K"})
      if (seen.find(key) == seen.end())
        throw ConfigError(std::string("missing required key '") + key + "' for kl noise");
  return cfg;
}

RunConfig load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

Field materialize(const FieldSpec& spec, const Grid& grid, const std::string& name) {
  switch (spec.kind) {
    case FieldSpec::Kind::Constant:
      return Field(grid, spec.base);
    case FieldSpec::Kind::Cosine: {
      Field f(grid);
      for (int j = 0; j < grid.n; ++j)
        f[j] = spec.base + spec.amp * std::cos(spec.mode * M_PI * grid.center(j));
      return f;
    }
    case FieldSpec::Kind::File: {
      std::ifstream in(spec.path);
      if (!in) throw ConfigError(name + ": cannot open field file '" + spec.path + "'");
      std::vector<double> values;
      double v = 0.0;
      while (in >> v) values.push_back(v);
      if (static_cast<int>(values.size()) != grid.n)
        throw ConfigError(name + ": field file '" + spec.path + "' has " +
                          std::to_string(values.size()) + " values, grid has " +
                          std::to_string(grid.n));
      return Field(grid, std::move(values));
    }
    case FieldSpec::Kind::Unset:
      break;
  }
  throw ConfigError(name + ": field not specified");
}

Simulation build_simulation(const RunConfig& cfg) {
  Simulation sim;
  try {
    sim.grid = Grid(cfg.n);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }

  sim.params.lambda = materialize(cfg.lambda, sim.grid, "model.lambda");
  sim.params.mu1 = materialize(cfg.mu1, sim.grid, "model.mu1");
  sim.params.mu2 = materialize(cfg.mu2, sim.grid, "model.mu2");
  sim.params.alpha = materialize(cfg.alpha, sim.grid, "model.alpha");
  sim.params.k1 = cfg.k1;
  sim.params.k2 = cfg.k2;
  try {
    sim.params = validate_params(std::move(sim.params), sim.grid);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }

  try {
    if (cfg.noise.mode == "space_independent") {
      sim.noise = NoiseSpec::space_independent(cfg.noise.sigma1, cfg.noise.sigma2);
    } else {
      SpeciesNoise sn;
      sn.family = cfg.noise.family == "geometric" ? CoeffFamily::Geometric
                                                  : CoeffFamily::Polynomial;
      sn.a = cfg.noise.a;
      sn.param = cfg.noise.q_or_r;
      sn.truncation = cfg.noise.K;
      sim.noise = NoiseSpec::kl(sn, sn, cfg.noise.tail_tol);
    }
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }

  if (!(cfg.dt > 0.0)) throw ConfigError("time.dt must be > 0");
  if (cfg.record_every < 1) throw ConfigError("time.record_every must be >= 1");
  if (!(cfg.horizon >= cfg.dt)) throw ConfigError("time.horizon must be at least one step");
  sim.step = StepConfig{cfg.dt, cfg.record_every};
  sim.horizon = cfg.horizon;

  Field s0 = materialize(cfg.s0, sim.grid, "init.S0");
  Field i0 = materialize(cfg.i0, sim.grid, "init.I0");
  try {
    s0.require_finite("init.S0");
    i0.require_finite("init.I0");
    s0.flag_nonnegative();
    i0.flag_nonnegative();
  } catch (const std::invalid_argument&) {
    throw ConfigError("initial data must be finite and nonnegative");
  }
  sim.init = SystemState{std::move(s0), std::move(i0), 0.0};

  if (cfg.n_paths < 1) throw ConfigError("mc.n_paths must be >= 1");
  sim.seed = cfg.seed;
  sim.n_paths = cfg.n_paths;

  if (!(cfg.analysis.window_frac > 0.0 && cfg.analysis.window_frac < 1.0))
    throw ConfigError("analysis.window_frac must lie in (0,1)");
  if (!(cfg.analysis.p > 0.0 && cfg.analysis.p < 1.0))
    throw ConfigError("analysis.p must lie in (0,1)");
  if (!(cfg.analysis.eps_slope > 0.0) || !(cfg.analysis.eps_perm > 0.0))
    throw ConfigError("analysis.eps_slope and analysis.eps_perm must be > 0");
  sim.analysis = cfg.analysis;
  sim.snapshot_times = cfg.snapshot_times;
  sim.snapshot_path = cfg.snapshot_path;
  if (!sim.snapshot_times.empty() && sim.snapshot_path.empty())
    throw ConfigError("output.snapshot_times requires output.snapshot_path");
  return sim;
}

std::string format_g17(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string results_to_csv(const EnsembleStats& stats) {
  std::string out =
      "t,paths,mass_s_mean,mass_s_stderr,mass_s_min,mass_s_max,"
      "mass_i_mean,mass_i_stderr,mass_i_min,mass_i_max,"
      "total_mass_mean,total_mass_stderr,perm_mean,perm_stderr,perm_rms,"
      "mass_i_p_mean,mass_i_p_stderr\n";
  const std::vector<double> perm_rms = stats.perm_statistic();
  for (std::size_t idx = 0; idx < stats.times.size(); ++idx) {
    const auto& ms = stats.at(idx, Observable::MassS);
    const auto& mi = stats.at(idx, Observable::MassI);
    const auto& tot = stats.at(idx, Observable::TotalMass);
    const auto& pm = stats.at(idx, Observable::Perm);
    const auto& mp = stats.at(idx, Observable::MassIP);
    out += format_g17(stats.times[idx]);
    out += ',' + std::to_string(ms.count);
    out += ',' + format_g17(ms.mean) + ',' + format_g17(ms.stderr_of_mean());
    out += ',' + format_g17(ms.min) + ',' + format_g17(ms.max);
    out += ',' + format_g17(mi.mean) + ',' + format_g17(mi.stderr_of_mean());
    out += ',' + format_g17(mi.min) + ',' + format_g17(mi.max);
    out += ',' + format_g17(tot.mean) + ',' + format_g17(tot.stderr_of_mean());
    out += ',' + format_g17(pm.mean) + ',' + format_g17(pm.stderr_of_mean());
    out += ',' + format_g17(perm_rms[idx]);
    out += ',' + format_g17(mp.mean) + ',' + format_g17(mp.stderr_of_mean());
    out += '\n';
  }
  return out;
}

std::string results_to_csv(const SweepResult& sweep) {
  std::string out =
      "param,value,r_hat,mu2_minus_alpha_star,mu_star,lambda_star,a2,r_p,"
      "predicted,slope,slope_stderr,perm_avg,verdict,note\n";
  for (const SweepRow& row : sweep.rows) {
    std::string note = row.note;
    for (char& c : note)
      if (c == ',' || c == '\n') c = ';';
    out += sweep.param;
    out += ',' + format_g17(row.value);
    out += ',' + format_g17(row.report.r_hat);
    out += ',' + format_g17(row.report.mu2_minus_alpha_star);
    out += ',' + format_g17(row.report.mu_star);
    out += ',' + format_g17(row.report.lambda_star);
    out += ',' + format_g17(row.report.a2);
    out += ',' + (row.report.r_p ? format_g17(*row.report.r_p) : std::string("nan"));
    out += ',' + row.predicted;
    out += ',' + format_g17(row.slope) + ',' + format_g17(row.slope_stderr);
    out += ',' + format_g17(row.perm_avg);
    out += ',' + row.verdict;
    out += ',' + note;
    out += '\n';
  }
  return out;
}

namespace {

void write_atomic(const std::string& content, const std::string& path) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open '" + tmp + "': " + std::strerror(errno));
    out << content;
    out.flush();
    if (!out) {
      std::remove(tmp.c_str());
      throw std::runtime_error("write to '" + tmp + "' failed: " + std::strerror(errno));
    }
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) {
    const std::string msg = std::strerror(errno);
    std::remove(tmp.c_str());
    throw std::runtime_error("rename to '" + path + "' failed: " + msg);
  }
}

}  // namespace

void write_results(const EnsembleStats& stats, const std::string& path) {
  write_atomic(results_to_csv(stats), path);
}

void write_results(const SweepResult& sweep, const std::string& path) {
  write_atomic(results_to_csv(sweep), path);
}

void write_snapshot(const SystemState& state, const std::string& path) {
  std::string out;
  const Grid& g = state.s.grid();
  for (int j = 0; j < g.n; ++j) {
    out += format_g17(g.center(j));
    out += ' ';
    out += format_g17(state.s[j]);
    out += ' ';
    out += format_g17(state.i[j]);
    out += '\n';
  }
  write_atomic(out, path);
}

}  // namespace epispde
