#include "mfk/config.hpp"

#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#define TOML_EXCEPTIONS 1
#include <toml.hpp>

#include "mfk/error.hpp"

namespace mfk {

namespace {

using List = std::vector<double>;

const std::map<std::string, ConfigValue>& schema() {
  static const std::map<std::string, ConfigValue> s = {
      {"run.id", std::string("run")},
      {"run.seed", std::int64_t{1}},
      {"run.out", std::string("out")},
      {"run.threads", std::int64_t{0}},
      {"run.binary_frames", false},

      {"galerkin.box_length", 1.0},
      {"galerkin.modes", std::int64_t{1}},
      {"galerkin.free_transport", false},

      {"model.name", std::string("linear")},
      {"model.gamma", 1.0},
      {"model.epsilon", 1.0},
      {"model.kappa", 0.4},
      {"model.a", 0.2},
      {"model.sigma0", 1.0},
      {"model.sigma1", 0.0},
      {"model.kernel", std::string("linear")},
      {"model.potential", std::string("linear")},
      {"model.sigma", std::string("constant")},
      {"model.declared_L_K", -1.0},
      {"model.declared_L_psi", -1.0},
      {"model.declared_L_sigma", -1.0},
      {"model.probe_count", std::int64_t{1000}},

      {"initial.kind", std::string("gaussian")},
      {"initial.mean_u", List{0.0}},
      {"initial.mean_v", List{0.0}},
      {"initial.var_u", List{0.1}},
      {"initial.var_v", List{0.1}},
      {"initial.offset_u", List{0.5}},
      {"initial.offset_v", List{0.0}},
      {"initial.weight", 0.5},

      {"integrator.N", std::int64_t{1024}},
      {"integrator.dt", 1e-3},
      {"integrator.T", 1.0},
      {"integrator.scheme", std::string("splitting")},
      {"integrator.snapshot_every", std::int64_t{100}},
      {"integrator.fast_path", true},

      {"fpe.n_u", std::int64_t{256}},
      {"fpe.n_v", std::int64_t{256}},
      {"fpe.R_u", 1.2},
      {"fpe.R_v", 4.5},
      {"fpe.dt", 1e-3},
      {"fpe.T", 1.0},
      {"fpe.picard_tol", 1e-9},
      {"fpe.picard_max_iter", std::int64_t{50}},
      {"fpe.limiter", std::string("van-leer")},
      {"fpe.cfl", 0.25},
      {"fpe.snapshot_every", std::int64_t{250}},

      // convergence
      {"experiment.N_list", List{64, 256, 1024, 4096}},
      {"experiment.repetitions", std::int64_t{8}},
      {"experiment.t", 1.0},
      {"experiment.reference", std::string("analytic")},
      {"experiment.n_ref", std::int64_t{16384}},
      {"experiment.n_projections", std::int64_t{128}},
      {"experiment.exact_cap", std::int64_t{512}},
      {"experiment.method", std::string("auto")},
      // stability
      {"experiment.shift_u", List{0.1}},
      {"experiment.shift_v", List{0.0}},
      {"experiment.identical", false},
      // weak residual
      {"experiment.levels_N", List{256, 1024, 4096}},
      {"experiment.levels_dt", List{4e-3, 2e-3, 1e-3}},
      {"experiment.bump_center_u", List{0.0, 0.3, -0.25}},
      {"experiment.bump_center_v", List{0.0, -0.4, 0.5}},
      {"experiment.bump_radius", List{0.8, 1.0, 1.3}},
      {"experiment.equicontinuity_stride", std::int64_t{10}},
      // bridge
      {"experiment.checkpoints", List{0.25, 0.5, 1.0}},
      {"experiment.bootstrap", std::int64_t{32}},
      {"experiment.stationary_check", true},
      // adjoint
      {"experiment.psi_center_u", 0.0},
      {"experiment.psi_center_v", 0.0},
      {"experiment.psi_radius", 1.0},
      {"experiment.probes", std::int64_t{20}},
      {"experiment.n_samples", std::int64_t{2000}},
      {"experiment.duality_N", std::int64_t{2048}},
      {"experiment.duality_samples", std::int64_t{256}},
      {"experiment.duality_every", std::int64_t{10}},
  };
  return s;
}

const char* type_name(const ConfigValue& v) {
  switch (v.index()) {
    case 0: return "bool";
    case 1: return "integer";
    case 2: return "float";
    case 3: return "string";
    default: return "list";
  }
}

// Coerces `value` to the schema type of `key`.
ConfigValue coerce(const std::string& key, const ConfigValue& proto, ConfigValue value) {
  if (value.index() == proto.index()) return value;
  if (std::holds_alternative<double>(proto) && std::holds_alternative<std::int64_t>(value)) {
    return static_cast<double>(std::get<std::int64_t>(value));
  }
  if (std::holds_alternative<std::int64_t>(proto) && std::holds_alternative<double>(value)) {
    const double d = std::get<double>(value);
    if (std::floor(d) == d && std::abs(d) < 9.2e18) return static_cast<std::int64_t>(d);
  }
  if (std::holds_alternative<List>(proto)) {
    if (std::holds_alternative<double>(value)) return List{std::get<double>(value)};
    if (std::holds_alternative<std::int64_t>(value)) return List{static_cast<double>(std::get<std::int64_t>(value))};
  }
  throw ConfigError("config key '" + key + "' expects " + type_name(proto) + ", got " + type_name(value));
}

ConfigValue from_node(const std::string& key, const toml::node& node) {
  if (auto b = node.as_boolean()) return b->get();
  if (auto i = node.as_integer()) return static_cast<std::int64_t>(i->get());
  if (auto f = node.as_floating_point()) return f->get();
  if (auto s = node.as_string()) return s->get();
  if (auto arr = node.as_array()) {
    List out;
    for (const auto& el : *arr) {
      if (auto i = el.as_integer()) {
        out.push_back(static_cast<double>(i->get()));
      } else if (auto f = el.as_floating_point()) {
        out.push_back(f->get());
      } else {
        throw ConfigError("config key '" + key + "': lists must hold numbers only");
      }
    }
    return out;
  }
  throw ConfigError("config key '" + key + "': unsupported value type");
}

std::string format_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  std::string s(buf);
  if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
  return s;
}

std::string render(const ConfigValue& v) {
  switch (v.index()) {
    case 0: return std::get<bool>(v) ? "true" : "false";
    case 1: return std::to_string(std::get<std::int64_t>(v));
    case 2: return format_double(std::get<double>(v));
    case 3: {
      std::string out = "\"";
      for (char c : std::get<std::string>(v)) {
        if (c == '"' || c == '\\') out += '\\';
        out += c;
      }
      return out + "\"";
    }
    default: {
      std::string out = "[";
      const auto& l = std::get<List>(v);
      for (std::size_t i = 0; i < l.size(); ++i) out += (i ? ", " : "") + format_double(l[i]);
      return out + "]";
    }
  }
}

}  // namespace

RunConfig::RunConfig() : values_(schema()) {}

std::vector<std::string> RunConfig::known_keys() {
  std::vector<std::string> keys;
  for (const auto& [k, v] : schema()) keys.push_back(k);
  return keys;
}

RunConfig RunConfig::from_string(const std::string& text) {
  RunConfig cfg;
  toml::table tbl;
  try {
    tbl = toml::parse(text);
  } catch (const toml::parse_error& e) {
    std::ostringstream os;
    os << "config parse error: " << e.description() << " at line " << e.source().begin.line;
    throw ConfigError(os.str());
  }
  for (const auto& [section, node] : tbl) {
    const auto* sub = node.as_table();
    if (!sub) throw ConfigError("config: top-level key '" + std::string(section.str()) + "' must be a [section]");
    for (const auto& [name, value] : *sub) {
      const std::string key = std::string(section.str()) + "." + std::string(name.str());
      cfg.set(key, from_node(key, value));
    }
  }
  return cfg;
}

RunConfig RunConfig::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return from_string(ss.str());
}

void RunConfig::set(const std::string& key, ConfigValue value) {
  const auto it = schema().find(key);
  if (it == schema().end()) throw ConfigError("unknown config key '" + key + "'");
  values_[key] = coerce(key, it->second, std::move(value));
}

void RunConfig::apply_override(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + assignment + "' is not key=value");
  std::string key = assignment.substr(0, eq);
  std::string text = assignment.substr(eq + 1);
  while (!key.empty() && key.back() == ' ') key.pop_back();
  while (!text.empty() && text.front() == ' ') text.erase(text.begin());
  ConfigValue value;
  try {
    const auto tbl = toml::parse("v = " + text);
    value = from_node(key, *tbl.get("v"));
  } catch (const toml::parse_error&) {
    value = text;
  }
  set(key, std::move(value));
}

const ConfigValue& RunConfig::lookup(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
  return it->second;
}

bool RunConfig::get_bool(const std::string& key) const { return std::get<bool>(lookup(key)); }
std::int64_t RunConfig::get_int(const std::string& key) const { return std::get<std::int64_t>(lookup(key)); }
double RunConfig::get_double(const std::string& key) const { return std::get<double>(lookup(key)); }
const std::string& RunConfig::get_string(const std::string& key) const { return std::get<std::string>(lookup(key)); }
std::vector<double> RunConfig::get_list(const std::string& key) const { return std::get<List>(lookup(key)); }

std::size_t RunConfig::get_size(const std::string& key) const {
  const auto v = get_int(key);
  if (v < 0) throw ConfigError("config key '" + key + "' must be nonnegative");
  return static_cast<std::size_t>(v);
}

std::uint64_t RunConfig::seed() const {
  const auto v = get_int("run.seed");
  if (v < 0) throw ConfigError("run.seed must be nonnegative");
  return static_cast<std::uint64_t>(v);
}

std::string RunConfig::canonical() const {
  std::string out;
  std::string section;
  for (const auto& [key, value] : values_) {
    const auto dot = key.find('.');
    const std::string sec = key.substr(0, dot);
    if (sec != section) {
      if (!out.empty()) out += "\n";
      out += "[" + sec + "]\n";
      section = sec;
    }
    out += key.substr(dot + 1) + " = " + render(value) + "\n";
  }
  return out;
}

std::string RunConfig::digest() const {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : canonical()) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016" PRIx64, h);
  return buf;
}

std::vector<double> broadcast(const std::vector<double>& values, std::size_t m, const std::string& key) {
  if (values.size() == 1) return std::vector<double>(m, values[0]);
  if (values.size() != m) {
    throw ConfigError("config key '" + key + "' has " + std::to_string(values.size()) + " entries, expected 1 or " +
                      std::to_string(m));
  }
  return values;
}

ModelSpec model_from_config(const RunConfig& cfg) {
  const std::size_t m = cfg.get_size("galerkin.modes");
  if (m == 0) throw ConfigError("galerkin.modes must be positive");
  const GalerkinBasis basis(cfg.get_double("galerkin.box_length"), m, cfg.get_bool("galerkin.free_transport"));
  const std::string& name = cfg.get_string("model.name");
  const double gamma = cfg.get_double("model.gamma");
  const double eps = cfg.get_double("model.epsilon");
  const double kappa = cfg.get_double("model.kappa");
  const double a = cfg.get_double("model.a");
  const double s0 = cfg.get_double("model.sigma0");
  const double s1 = cfg.get_double("model.sigma1");
  try {
    if (name == "linear") return make_linear_model(basis, kappa, a, gamma, s0, eps);
    if (name == "saturated") return make_saturated_model(basis, kappa, a, gamma, s0, s1, eps);
    if (name != "custom") throw ConfigError("model.name must be linear, saturated or custom");
    ModelSpec model;
    model.name = "custom";
    model.basis = basis;
    model.gamma = gamma;
    model.epsilon = eps;
    const auto kind3 = [](const std::string& s, const char* key) {
      if (s == "zero") return 0;
      if (s == "linear") return 1;
      if (s == "tanh") return 2;
      throw ConfigError(std::string(key) + " must be zero, linear or tanh");
    };
    model.kernel = {static_cast<KernelKind>(kind3(cfg.get_string("model.kernel"), "model.kernel")), kappa};
    model.potential = {static_cast<PotentialKind>(kind3(cfg.get_string("model.potential"), "model.potential")), a};
    const std::string& sk = cfg.get_string("model.sigma");
    if (sk != "constant" && sk != "tanh") throw ConfigError("model.sigma must be constant or tanh");
    model.sigma = {sk == "constant" ? SigmaKind::constant : SigmaKind::tanh, s0, sk == "constant" ? 0.0 : s1};
    if (cfg.get_double("model.declared_L_K") >= 0.0) model.declared_L_K = cfg.get_double("model.declared_L_K");
    if (cfg.get_double("model.declared_L_psi") >= 0.0) model.declared_L_psi = cfg.get_double("model.declared_L_psi");
    if (cfg.get_double("model.declared_L_sigma") >= 0.0) {
      model.declared_L_sigma = cfg.get_double("model.declared_L_sigma");
    }
    model.validate();
    return model;
  } catch (const InvalidArgument& e) {
    throw ConfigError(e.what());
  }
}

InitialDistribution initial_from_config(const RunConfig& cfg) {
  const std::size_t m = cfg.get_size("galerkin.modes");
  PhasePoint mean{broadcast(cfg.get_list("initial.mean_u"), m, "initial.mean_u"),
                  broadcast(cfg.get_list("initial.mean_v"), m, "initial.mean_v")};
  const std::string& kind = cfg.get_string("initial.kind");
  InitialDistribution d;
  if (kind == "point-mass" || kind == "point_mass") {
    d = InitialDistribution::point_mass(std::move(mean));
  } else if (kind == "gaussian") {
    d = InitialDistribution::gaussian(std::move(mean), broadcast(cfg.get_list("initial.var_u"), m, "initial.var_u"),
                                      broadcast(cfg.get_list("initial.var_v"), m, "initial.var_v"));
  } else if (kind == "two-cluster" || kind == "two_cluster") {
    PhasePoint offset{broadcast(cfg.get_list("initial.offset_u"), m, "initial.offset_u"),
                      broadcast(cfg.get_list("initial.offset_v"), m, "initial.offset_v")};
    d = InitialDistribution::two_cluster(std::move(mean), std::move(offset),
                                         broadcast(cfg.get_list("initial.var_u"), m, "initial.var_u"),
                                         broadcast(cfg.get_list("initial.var_v"), m, "initial.var_v"),
                                         cfg.get_double("initial.weight"));
  } else {
    throw ConfigError("initial.kind must be point-mass, gaussian or two-cluster");
  }
  try {
    d.validate(m);
  } catch (const InvalidArgument& e) {
    throw ConfigError(e.what());
  }
  return d;
}

IntegratorConfig integrator_from_config(const RunConfig& cfg) {
  IntegratorConfig ic;
  ic.dt = cfg.get_double("integrator.dt");
  try {
    ic.scheme = scheme_from_string(cfg.get_string("integrator.scheme"));
  } catch (const InvalidArgument& e) {
    throw ConfigError(e.what());
  }
  ic.workers = cfg.get_size("run.threads");
  ic.fast_path = cfg.get_bool("integrator.fast_path");
  if (!(ic.dt > 0.0)) throw ConfigError("integrator.dt must be positive");
  return ic;
}

PhaseGrid grid_from_config(const RunConfig& cfg) {
  PhaseGrid g{cfg.get_double("fpe.R_u"), cfg.get_double("fpe.R_v"), cfg.get_size("fpe.n_u"), cfg.get_size("fpe.n_v")};
  try {
    g.validate();
  } catch (const InvalidArgument& e) {
    throw ConfigError(e.what());
  }
  return g;
}

FpeConfig fpe_from_config(const RunConfig& cfg) {
  FpeConfig f;
  f.dt = cfg.get_double("fpe.dt");
  f.picard_tol = cfg.get_double("fpe.picard_tol");
  f.picard_max_iter = cfg.get_size("fpe.picard_max_iter");
  f.cfl = cfg.get_double("fpe.cfl");
  const std::string& lim = cfg.get_string("fpe.limiter");
  if (lim == "van-leer" || lim == "van_leer") {
    f.limiter = Limiter::van_leer;
  } else if (lim == "none" || lim == "upwind") {
    f.limiter = Limiter::none;
  } else {
    throw ConfigError("fpe.limiter must be van-leer or none");
  }
  try {
    f.validate();
  } catch (const InvalidArgument& e) {
    throw ConfigError(e.what());
  }
  return f;
}

}  // namespace mfk
