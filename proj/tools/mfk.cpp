#include <CLI11.hpp>
#include <omp.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "mfk/error.hpp"
#include "mfk/experiments.hpp"
#include "mfk/io.hpp"
#include "mfk/test_functions.hpp"

namespace fs = std::filesystem;
using namespace mfk;

namespace {

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::size_t> threads;
  std::vector<std::string> overrides;
  bool check = false;
};

RunConfig load(const Options& o) {
  RunConfig cfg = o.config.empty() ? RunConfig() : RunConfig::from_file(o.config);
  for (const auto& kv : o.overrides) cfg.apply_override(kv);
  if (o.seed) cfg.set("run.seed", static_cast<std::int64_t>(*o.seed));
  if (o.out) cfg.set("run.out", *o.out);
  if (o.threads) cfg.set("run.threads", static_cast<std::int64_t>(*o.threads));
  if (cfg.get_size("run.threads") > 0) omp_set_num_threads(static_cast<int>(cfg.get_size("run.threads")));
  return cfg;
}

std::string out_path(const RunConfig& cfg, const std::string& name) {
  return (fs::path(cfg.get_string("run.out")) / name).string();
}

std::map<std::string, double> run_constants(const RunConfig& cfg, const std::optional<ModelAssumptions>& a) {
  if (!a) return {};
  auto c = constants_map(*a);
  if (a->theta > 0.0) {
    const auto cert = gradient_bound_cert(*a, adjoint_terminal_function(cfg));
    c["kappa"] = cert.kappa;
    c["C_tilde"] = cert.c_tilde;
  }
  return c;
}

nlohmann::json checks_json(const std::vector<Check>& checks) {
  auto arr = nlohmann::json::array();
  for (const auto& c : checks) arr.push_back({{"name", c.name}, {"passed", c.passed}, {"detail", c.detail}});
  return arr;
}

int finish(const RunConfig& cfg, const std::string& command, const std::optional<ModelAssumptions>& a,
           const std::vector<Check>& checks, bool check_mode, nlohmann::json extra = nlohmann::json::object()) {
  extra["command"] = command;
  extra["checks"] = checks_json(checks);
  write_meta(out_path(cfg, "meta.json"), cfg, run_constants(cfg, a), extra);
  for (const auto& c : checks) std::cout << (c.passed ? "PASS " : "FAIL ") << c.name << ": " << c.detail << "\n";
  return check_mode && !all_passed(checks) ? 4 : 0;
}

void write_lyapunov(const RunConfig& cfg, const LyapunovMonitor& mon) {
  Table t{{"t", "v_mean", "v_stderr"}, {}};
  for (std::size_t k = 0; k < mon.times().size(); ++k)
    t.rows.push_back({fmt(mon.times()[k]), fmt(mon.v_mean()[k]), fmt(mon.v_stderr()[k])});
  t.write(out_path(cfg, "lyapunov.csv"));
  write_svg_chart(out_path(cfg, "lyapunov.svg"), "V-moment", "t", "mean V",
                  {{"V", mon.times(), mon.v_mean()}});
}

int cmd_particles(const RunConfig& cfg, bool check) {
  const std::size_t m = model_from_config(cfg).modes();
  SnapshotCsvWriter csv(out_path(cfg, "trajectory.csv"), cfg.get_string("run.id"), m);
  std::unique_ptr<std::ofstream> frames;
  if (cfg.get_bool("run.binary_frames"))
    frames = std::make_unique<std::ofstream>(out_path(cfg, "frames.bin"), std::ios::binary);
  const auto res = exp_particles(cfg, [&](const Ensemble& e) {
    csv.write(e);
    if (frames) write_frame(*frames, e);
  });
  if (res.assumptions) write_lyapunov(cfg, res.monitor);
  return finish(cfg, "particles", res.assumptions, res.checks, check);
}

int cmd_fpe(const RunConfig& cfg, bool check) {
  const auto res = exp_fpe(cfg);
  write_fpe_diagnostics(out_path(cfg, "fpe_diagnostics.csv"), res.trace.diagnostics);
  write_density_csv(out_path(cfg, "density.csv"), res.trace.snapshots);
  write_density_matrix(out_path(cfg, "density_final.dat"), res.trace.snapshots.back());
  Series moment{"V-moment", {}, {}};
  for (const auto& d : res.trace.diagnostics) {
    moment.x.push_back(d.t);
    moment.y.push_back(d.v_moment);
  }
  write_svg_chart(out_path(cfg, "fpe_moment.svg"), "FPE V-moment", "t", "integral V drho", {moment});
  return finish(cfg, "fpe", res.assumptions, res.checks, check);
}

int cmd_convergence(const RunConfig& cfg, bool check) {
  const auto tab = exp_meanfield_convergence(cfg);
  Table t{{"N", "repetitions", "mean_w1", "stderr", "method"}, {}};
  std::vector<W1Row> rows;
  Series s{"mean W1", {}, {}};
  for (const auto& r : tab.rows) {
    t.rows.push_back({std::to_string(r.n), std::to_string(r.repetitions), fmt(r.mean), fmt(r.stderr),
                      to_string(r.method)});
    for (double v : r.values) rows.push_back({cfg.get_string("run.id"), tab.t, r.n, W1Report{v, r.method, 0, 0.0}});
    s.x.push_back(static_cast<double>(r.n));
    s.y.push_back(r.mean);
  }
  t.write(out_path(cfg, "convergence.csv"));
  write_w1_csv(out_path(cfg, "w1.csv"), rows);
  Series floor{"2x split-half", s.x, std::vector<double>(s.x.size(), 2.0 * tab.split_half)};
  write_svg_chart(out_path(cfg, "convergence.svg"), "W1 to the mean-field law", "N", "W1", {s, floor}, true);
  return finish(cfg, "convergence", tab.assumptions, tab.checks, check,
                {{"split_half", tab.split_half}, {"reference", tab.reference}, {"n_ref", tab.n_ref},
                 {"method", to_string(tab.method)}});
}

int cmd_stability(const RunConfig& cfg, bool check) {
  const auto res = exp_stability(cfg);
  Table t{{"t", "ratio", "ratio_sliced", "bound"}, {}};
  for (std::size_t k = 0; k < res.t.size(); ++k)
    t.rows.push_back({fmt(res.t[k]), fmt(res.ratio[k]), fmt(res.ratio_sliced[k]), fmt(res.bound[k])});
  t.write(out_path(cfg, "stability.csv"));
  write_svg_chart(out_path(cfg, "stability.svg"), "Stability ratio", "t", "ratio",
                  {{"coupling", res.t, res.ratio}, {"sliced", res.t, res.ratio_sliced}, {"exp(Ct)", res.t, res.bound}},
                  true);
  if (res.identical) std::cout << "notice: identical inputs, delta0 = 0, ratios undefined\n";
  return finish(cfg, "stability", res.assumptions, res.checks, check,
                {{"delta0", res.delta0}, {"rate", res.rate}, {"identical", res.identical}});
}

int cmd_weak_residual(const RunConfig& cfg, bool check) {
  const auto res = exp_weak_residual(cfg);
  Table t{{"level", "N", "dt", "phi", "mean_max_residual", "stderr"}, {}};
  std::vector<Series> series;
  for (std::size_t l = 0; l < res.levels.size(); ++l) {
    const auto& lv = res.levels[l];
    for (std::size_t p = 0; p < lv.mean_max_residual.size(); ++p) {
      t.rows.push_back({std::to_string(l), std::to_string(lv.n), fmt(lv.dt), std::to_string(p),
                        fmt(lv.mean_max_residual[p]), fmt(lv.stderr[p])});
      if (series.size() <= p) series.push_back({"phi " + std::to_string(p), {}, {}});
      series[p].x.push_back(static_cast<double>(l));
      series[p].y.push_back(lv.mean_max_residual[p]);
    }
  }
  t.write(out_path(cfg, "residual.csv"));
  Table e{{"phi", "constant", "moment_bound", "worst_slack", "pairs"}, {}};
  for (std::size_t p = 0; p < res.equicontinuity.size(); ++p) {
    const auto& q = res.equicontinuity[p];
    e.rows.push_back({std::to_string(p), fmt(q.constant), fmt(q.moment_bound), fmt(q.worst_slack),
                      std::to_string(q.pairs)});
  }
  e.write(out_path(cfg, "equicontinuity.csv"));
  write_svg_chart(out_path(cfg, "residual.svg"), "Max weak-form residual", "refinement level", "max |R|", series,
                  true);
  return finish(cfg, "weak-residual", res.assumptions, res.checks, check);
}

int cmd_bridge(const RunConfig& cfg, bool check) {
  const auto res = exp_galerkin_bridge(cfg);
  Table t{{"t", "w1_u", "w1_v", "fluct_u", "fluct_v", "h_u", "h_v"}, {}};
  Series su{"u", {}, {}}, sv{"v", {}, {}};
  for (const auto& c : res.checkpoints) {
    t.rows.push_back({fmt(c.t), fmt(c.w1_u), fmt(c.w1_v), fmt(c.fluct_u), fmt(c.fluct_v), fmt(res.h_u), fmt(res.h_v)});
    su.x.push_back(c.t);
    su.y.push_back(c.w1_u);
    sv.x.push_back(c.t);
    sv.y.push_back(c.w1_v);
  }
  t.write(out_path(cfg, "bridge.csv"));
  write_fpe_diagnostics(out_path(cfg, "fpe_diagnostics.csv"), res.diagnostics);
  write_density_matrix(out_path(cfg, "density_final.dat"), res.snapshots.back());
  write_svg_chart(out_path(cfg, "bridge.svg"), "Particle vs grid marginals", "t", "W1", {su, sv});
  return finish(cfg, "bridge", res.assumptions, res.checks, check,
                {{"stationary_l1", res.stationary_l1}, {"max_mass_defect", res.max_mass_defect},
                 {"max_boundary_mass", res.max_boundary_mass}});
}

int cmd_adjoint(const RunConfig& cfg, bool check) {
  const auto res = exp_adjoint(cfg);
  Table t{{"probe", "s", "u1", "v1", "f", "f_stderr", "grad_norm", "grad_norm_stderr"}, {}};
  for (std::size_t p = 0; p < res.probes.size(); ++p) {
    const auto& q = res.probes[p];
    t.rows.push_back({std::to_string(p), fmt(q.s), fmt(q.z.u[0]), fmt(q.z.v[0]), fmt(q.f.mean), fmt(q.f.stderr),
                      fmt(q.grad.norm), fmt(q.grad.norm_stderr)});
  }
  t.write(out_path(cfg, "probes.csv"));
  write_duality_csv(out_path(cfg, "duality.csv"), res.duality);
  Series trace{"I(s)", {}, {}};
  for (const auto& d : res.duality.trace) {
    trace.x.push_back(d.s);
    trace.y.push_back(d.I);
  }
  write_svg_chart(out_path(cfg, "duality.svg"), "Duality trace", "s", "I(s)", {trace});
  return finish(cfg, "adjoint", res.assumptions, res.checks, check,
                {{"psi_max", res.psi_max},
                 {"psi_grad_max", res.psi_grad_max},
                 {"kappa", res.cert.kappa},
                 {"C_tilde", res.cert.c_tilde}});
}

int cmd_validate(const RunConfig& cfg, bool check) {
  const auto res = exp_validate(cfg);
  const auto c = run_constants(cfg, res.assumptions);
  for (const auto& [k, v] : c) std::cout << k << " = " << fmt(v) << "\n";
  return finish(cfg, "validate", res.assumptions, res.checks, check);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Mean-field kinetic particle systems: experiments and checks"};
  app.require_subcommand(1);
  app.set_version_flag("--version", build_id());
  Options opt;
  struct Command {
    std::string name;
    std::string help;
    int (*fn)(const RunConfig&, bool);
  };
  const std::vector<Command> commands = {
      {"particles", "simulate the particle ensemble with the Lyapunov monitor", cmd_particles},
      {"fpe", "solve the kinetic Fokker-Planck equation on a grid (m = 1)", cmd_fpe},
      {"convergence", "mean W1 to the limit law over an N sweep", cmd_convergence},
      {"stability", "synchronously coupled ensembles against exp(Ct)", cmd_stability},
      {"weak-residual", "weak-form residual of bump test functions under refinement", cmd_weak_residual},
      {"bridge", "particle vs grid marginals, mass and stationary checks", cmd_bridge},
      {"adjoint", "Feynman-Kac probes, gradient bound and duality trace", cmd_adjoint},
      {"validate", "declared vs estimated model constants", cmd_validate},
  };
  for (const auto& cmd : commands) {
    auto* sub = app.add_subcommand(cmd.name, cmd.help);
    sub->add_option("--config", opt.config, "TOML run configuration")->check(CLI::ExistingFile);
    sub->add_option("--seed", opt.seed, "master seed");
    sub->add_option("--out", opt.out, "output directory");
    sub->add_option("--threads", opt.threads, "worker threads");
    sub->add_option("--override", opt.overrides, "section.key=value")->allow_extra_args(false);
    sub->add_flag("--check", opt.check, "exit 4 when a check fails");
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  try {
    for (const auto& cmd : commands) {
      if (app.got_subcommand(cmd.name)) return cmd.fn(load(opt), opt.check);
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const NumericalFailure& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 3;
  } catch (const AssumptionViolation& e) {
    std::cerr << "assumption violated: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
