#include "stomax/config.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace stomax {
namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

const std::set<std::string>& known_keys() {
  static const std::set<std::string> keys{
      "kind", "seed", "paths", "threads", "out",
      "grid.horizon", "grid.steps",
      "noise.kind", "noise.intensities",
      "noise.cox.initial", "noise.cox.mean_reversion", "noise.cox.long_run", "noise.cox.vol",
      "dissect.level", "dissect.levels",
      "basis.degree", "regression.ridge", "regression.two_ensemble",
      "target.kind", "integrand.kind",
      "problem.kind",
      "optimizer.max_iter", "optimizer.step0", "optimizer.decay_iters",
      "optimizer.refit_period", "optimizer.tolerance", "optimizer.theta0",
      "credit.rho", "credit.intensity", "credit.x0", "credit.utility",
      "credit.power_gamma", "credit.pi_grid_step",
      "control.margin",
  };
  return keys;
}

double parse_double(const std::string& v, int line) {
  std::size_t pos = 0;
  double out;
  try {
    out = std::stod(v, &pos);
  } catch (const std::exception&) {
    throw ConfigError("line " + std::to_string(line) + ": expected a number, got '" + v + "'");
  }
  if (pos != v.size())
    throw ConfigError("line " + std::to_string(line) + ": trailing characters in number '" + v +
                      "'");
  return out;
}

long long parse_int(const std::string& v, int line) {
  std::size_t pos = 0;
  long long out;
  try {
    out = std::stoll(v, &pos);
  } catch (const std::exception&) {
    throw ConfigError("line " + std::to_string(line) + ": expected an integer, got '" + v + "'");
  }
  if (pos != v.size())
    throw ConfigError("line " + std::to_string(line) + ": trailing characters in integer '" + v +
                      "'");
  return out;
}

bool parse_bool(const std::string& v, int line) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("line " + std::to_string(line) + ": expected true/false, got '" + v + "'");
}

template <class T, class F>
std::vector<T> parse_list(const std::string& v, int line, F item) {
  std::vector<T> out;
  std::stringstream ss(v);
  std::string part;
  while (std::getline(ss, part, ',')) {
    part = trim(part);
    if (part.empty())
      throw ConfigError("line " + std::to_string(line) + ": empty list element");
    out.push_back(item(part, line));
  }
  if (out.empty()) throw ConfigError("line " + std::to_string(line) + ": empty list");
  return out;
}

}  // namespace

const std::vector<std::string>& ExperimentConfig::known_kinds() {
  static const std::vector<std::string> kinds{
      "validate-noise", "dissect-check", "derivative-oracle", "duality", "representation",
      "adjoint-check",  "criticality",   "optimize",          "credit-benchmark"};
  return kinds;
}

ExperimentConfig parse_config(const std::string& text) {
  ExperimentConfig cfg;
  std::map<std::string, std::pair<std::string, int>> pairs;

  std::stringstream ss(text);
  std::string raw;
  int line_no = 0;
  while (std::getline(ss, raw)) {
    ++line_no;
    const auto hash = raw.find('#');
    std::string line = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(line_no) + ": expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty() || value.empty())
      throw ConfigError("line " + std::to_string(line_no) + ": empty key or value");
    if (!known_keys().count(key))
      throw ConfigError("line " + std::to_string(line_no) + ": unknown key '" + key + "'");
    if (pairs.count(key))
      throw ConfigError("line " + std::to_string(line_no) + ": duplicate key '" + key + "'");
    pairs[key] = {value, line_no};
  }

  auto take = [&](const char* key) -> const std::pair<std::string, int>* {
    auto it = pairs.find(key);
    return it == pairs.end() ? nullptr : &it->second;
  };

  if (const auto* v = take("kind")) {
    cfg.kind = v->first;
    const auto& kinds = ExperimentConfig::known_kinds();
    if (std::find(kinds.begin(), kinds.end(), cfg.kind) == kinds.end())
      throw ConfigError("line " + std::to_string(v->second) + ": unknown experiment kind '" +
                        cfg.kind + "'");
  } else {
    throw ConfigError("missing required key 'kind'");
  }
  if (const auto* v = take("seed"))
    cfg.seed = static_cast<std::uint64_t>(parse_int(v->first, v->second));
  else
    throw ConfigError("missing required key 'seed'");

  if (const auto* v = take("paths")) cfg.paths = static_cast<int>(parse_int(v->first, v->second));
  if (const auto* v = take("threads"))
    cfg.threads = static_cast<int>(parse_int(v->first, v->second));
  if (const auto* v = take("out")) cfg.out_dir = v->first;
  if (const auto* v = take("grid.horizon")) cfg.horizon = parse_double(v->first, v->second);
  if (const auto* v = take("grid.steps")) cfg.steps = static_cast<int>(parse_int(v->first, v->second));
  if (const auto* v = take("noise.kind")) {
    cfg.noise_kind = v->first;
    if (cfg.noise_kind != "brownian" && cfg.noise_kind != "compensated_poisson" &&
        cfg.noise_kind != "cox")
      throw ConfigError("line " + std::to_string(v->second) + ": unknown noise kind '" +
                        cfg.noise_kind + "'");
  }
  if (const auto* v = take("noise.intensities"))
    cfg.intensities = parse_list<double>(v->first, v->second, parse_double);
  if (const auto* v = take("noise.cox.initial")) cfg.cox_initial = parse_double(v->first, v->second);
  if (const auto* v = take("noise.cox.mean_reversion"))
    cfg.cox_mean_reversion = parse_double(v->first, v->second);
  if (const auto* v = take("noise.cox.long_run")) cfg.cox_long_run = parse_double(v->first, v->second);
  if (const auto* v = take("noise.cox.vol")) cfg.cox_vol = parse_double(v->first, v->second);
  if (const auto* v = take("dissect.level")) cfg.level = static_cast<int>(parse_int(v->first, v->second));
  if (const auto* v = take("dissect.levels"))
    cfg.levels = parse_list<int>(v->first, v->second, [](const std::string& s, int l) {
      return static_cast<int>(parse_int(s, l));
    });
  if (const auto* v = take("basis.degree"))
    cfg.basis_degree = static_cast<int>(parse_int(v->first, v->second));
  if (const auto* v = take("regression.ridge")) cfg.ridge = parse_double(v->first, v->second);
  if (const auto* v = take("regression.two_ensemble"))
    cfg.two_ensemble = parse_bool(v->first, v->second);
  if (const auto* v = take("target.kind")) cfg.target = v->first;
  if (const auto* v = take("integrand.kind")) cfg.integrand = v->first;
  if (const auto* v = take("problem.kind")) cfg.problem = v->first;
  if (const auto* v = take("optimizer.max_iter"))
    cfg.opt_max_iter = static_cast<int>(parse_int(v->first, v->second));
  if (const auto* v = take("optimizer.step0")) cfg.opt_step0 = parse_double(v->first, v->second);
  if (const auto* v = take("optimizer.decay_iters"))
    cfg.opt_decay_iters = parse_double(v->first, v->second);
  if (const auto* v = take("optimizer.refit_period"))
    cfg.opt_refit_period = static_cast<int>(parse_int(v->first, v->second));
  if (const auto* v = take("optimizer.tolerance"))
    cfg.opt_tolerance = parse_double(v->first, v->second);
  if (const auto* v = take("optimizer.theta0")) cfg.theta0 = parse_double(v->first, v->second);
  if (const auto* v = take("credit.rho")) cfg.credit_rho = parse_double(v->first, v->second);
  if (const auto* v = take("credit.intensity"))
    cfg.credit_intensity = parse_double(v->first, v->second);
  if (const auto* v = take("credit.x0")) cfg.credit_x0 = parse_double(v->first, v->second);
  if (const auto* v = take("credit.utility")) cfg.credit_utility = v->first;
  if (const auto* v = take("credit.power_gamma"))
    cfg.credit_power_gamma = parse_double(v->first, v->second);
  if (const auto* v = take("credit.pi_grid_step"))
    cfg.pi_grid_step = parse_double(v->first, v->second);
  if (const auto* v = take("control.margin")) cfg.margin = parse_double(v->first, v->second);

  if (cfg.paths < 1) throw ConfigError("paths must be positive");
  if (cfg.steps < 1) throw ConfigError("grid.steps must be positive");
  if (!(cfg.horizon > 0.0)) throw ConfigError("grid.horizon must be positive");
  return cfg;
}

std::string serialize_config(const ExperimentConfig& c) {
  std::ostringstream os;
  os.precision(17);
  os << "kind = " << c.kind << '\n';
  os << "seed = " << c.seed << '\n';
  os << "paths = " << c.paths << '\n';
  os << "threads = " << c.threads << '\n';
  os << "out = " << c.out_dir << '\n';
  os << "grid.horizon = " << c.horizon << '\n';
  os << "grid.steps = " << c.steps << '\n';
  os << "noise.kind = " << c.noise_kind << '\n';
  os << "noise.intensities = ";
  for (std::size_t i = 0; i < c.intensities.size(); ++i)
    os << (i ? "," : "") << c.intensities[i];
  os << '\n';
  os << "noise.cox.initial = " << c.cox_initial << '\n';
  os << "noise.cox.mean_reversion = " << c.cox_mean_reversion << '\n';
  os << "noise.cox.long_run = " << c.cox_long_run << '\n';
  os << "noise.cox.vol = " << c.cox_vol << '\n';
  os << "dissect.level = " << c.level << '\n';
  os << "dissect.levels = ";
  for (std::size_t i = 0; i < c.levels.size(); ++i) os << (i ? "," : "") << c.levels[i];
  os << '\n';
  os << "basis.degree = " << c.basis_degree << '\n';
  os << "regression.ridge = " << c.ridge << '\n';
  os << "regression.two_ensemble = " << (c.two_ensemble ? "true" : "false") << '\n';
  os << "target.kind = " << c.target << '\n';
  os << "integrand.kind = " << c.integrand << '\n';
  os << "problem.kind = " << c.problem << '\n';
  os << "optimizer.max_iter = " << c.opt_max_iter << '\n';
  os << "optimizer.step0 = " << c.opt_step0 << '\n';
  os << "optimizer.decay_iters = " << c.opt_decay_iters << '\n';
  os << "optimizer.refit_period = " << c.opt_refit_period << '\n';
  os << "optimizer.tolerance = " << c.opt_tolerance << '\n';
  os << "optimizer.theta0 = " << c.theta0 << '\n';
  os << "credit.rho = " << c.credit_rho << '\n';
  os << "credit.intensity = " << c.credit_intensity << '\n';
  os << "credit.x0 = " << c.credit_x0 << '\n';
  os << "credit.utility = " << c.credit_utility << '\n';
  os << "credit.power_gamma = " << c.credit_power_gamma << '\n';
  os << "credit.pi_grid_step = " << c.pi_grid_step << '\n';
  os << "control.margin = " << c.margin << '\n';
  return os.str();
}

ExperimentConfig load_config_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config file: " + path);
  std::ostringstream buf;
  buf << is.rdbuf();
  return parse_config(buf.str());
}

}  // namespace stomax
