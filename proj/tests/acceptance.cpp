// Acceptance gate: one PASS/FAIL line per criterion. Exit status is the
// number of failed criteria (capped at 1 for ctest).

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "mfk/config.hpp"
#include "mfk/experiments.hpp"
#include "mfk/io.hpp"
#include "mfk/measure.hpp"
#include "mfk/noise.hpp"
#include "oracles.hpp"

using namespace mfk;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool passed = false;
  std::string detail;
  double seconds = 0.0;
};

RunConfig load(const std::string& name) { return RunConfig::from_file(std::string(MFK_CONFIG_DIR) + "/" + name); }

// Lyapunov and equicontinuity verdicts gathered from the runs of the other
// criteria.
std::vector<Check> lyapunov_checks;

void collect(const std::string& run, const std::vector<Check>& checks) {
  for (const auto& c : checks) {
    if (c.name == "lyapunov" || c.name.rfind("equicontinuity", 0) == 0)
      lyapunov_checks.push_back({run + " " + c.name, c.passed, c.detail});
  }
}

std::string failed_names(const std::vector<Check>& checks) {
  std::string out;
  for (const auto& c : checks)
    if (!c.passed) out += (out.empty() ? "" : "; ") + c.name + " (" + c.detail + ")";
  return out;
}

Outcome outcome_from(const std::vector<Check>& checks, std::string summary) {
  const bool ok = all_passed(checks);
  return {ok, ok ? summary : summary + "; failed: " + failed_names(checks)};
}

Outcome w1_oracle() {
  const NoiseDriver noise(424242, NoiseDomain::reference);
  const std::size_t dim = 4;
  double worst = 0.0;
  for (std::size_t p = 0; p < 200; ++p) {
    const std::size_t n = 1 + p % 6;
    std::vector<double> x(n * dim), y(n * dim);
    for (std::size_t j = 0; j < n * dim; ++j) {
      x[j] = noise.normal(p, 0, j);
      y[j] = noise.normal(p, 1, j) + 0.5;
    }
    const double exact = w1_exact(EmpiricalMeasure(dim, x), EmpiricalMeasure(dim, y)).value;
    const double brute = oracle::brute_force_w1(x, y, dim);
    worst = std::max(worst, std::abs(exact - brute) / std::max(brute, 1e-300));
  }
  return {worst <= 1e-9, "200 pairs, max relative gap " + fmt(worst) + " (tol 1e-9)"};
}

Outcome integrator_oracle() {
  const RunConfig cfg = load("integrator_oracle.toml");
  const auto res = exp_particles(cfg);
  collect("integrator", res.checks);
  const ModelSpec model = model_from_config(cfg);
  const InitialDistribution dist = initial_from_config(cfg);
  const Ensemble& e = res.final_state;
  const std::size_t m = model.modes();
  const double T = cfg.get_double("integrator.T");
  double worst_z = 0.0;
  std::size_t compared = 0;
  for (std::size_t k = 0; k < m; ++k) {
    std::vector<double> u(e.size()), v(e.size());
    for (std::size_t i = 0; i < e.size(); ++i) {
      u[i] = e.u(i)[k];
      v[i] = e.v(i)[k];
    }
    const auto st = oracle::pair_stats(u, v);
    const auto ref = oracle::linear_moments(model.basis.eigenvalue(k), model.potential.strength,
                                            model.kernel.strength, model.gamma, model.sigma.s0, model.epsilon,
                                            {dist.mean.u[k], dist.mean.v[k], dist.var_u[k], 0.0, dist.var_v[k]}, T);
    const double z[5] = {std::abs(st.mean_x - ref.mu) / st.se_mean_x, std::abs(st.mean_y - ref.mv) / st.se_mean_y,
                         std::abs(st.xx - ref.uu) / st.se_xx, std::abs(st.xy - ref.uv) / st.se_xy,
                         std::abs(st.yy - ref.vv) / st.se_yy};
    for (double q : z) {
      worst_z = std::max(worst_z, q);
      ++compared;
    }
  }
  return {worst_z <= 3.0, std::to_string(compared) + " moments, max |deviation| / SE = " + fmt(worst_z) + " (tol 3)"};
}

Outcome convergence() {
  const auto tab = exp_meanfield_convergence(load("convergence.toml"));
  collect("convergence", tab.checks);
  std::ostringstream s;
  s << "mean W1";
  for (const auto& r : tab.rows) s << " N=" << r.n << ":" << fmt(r.mean);
  s << ", 2x split-half " << fmt(2.0 * tab.split_half);
  std::vector<Check> core;
  for (const auto& c : tab.checks)
    if (c.name != "lyapunov") core.push_back(c);
  return outcome_from(core, s.str());
}

Outcome stability() {
  const auto res = exp_stability(load("stability.toml"));
  collect("stability", res.checks);
  double worst = 0.0;
  for (std::size_t k = 0; k < res.t.size(); ++k) worst = std::max(worst, res.ratio[k] / res.bound[k]);
  std::vector<Check> core;
  for (const auto& c : res.checks)
    if (c.name != "lyapunov") core.push_back(c);
  if (!res.assumptions) core.push_back({"assumptions", false, "model failed validation"});
  return outcome_from(core, "C = " + fmt(res.rate) + ", max r(t)/e^{Ct} = " + fmt(worst) +
                                ", control pair " + (res.identical_bitwise ? "bit-identical" : "diverged"));
}

Outcome weak_residual() {
  const auto res = exp_weak_residual(load("weak_residual.toml"));
  collect("weak-residual", res.checks);
  std::ostringstream s;
  s << "ratios";
  for (const auto& row : res.ratios)
    for (double r : row) s << ' ' << fmt(r);
  std::vector<Check> core;
  for (const auto& c : res.checks)
    if (c.name.rfind("residual", 0) == 0) core.push_back(c);
  return outcome_from(core, s.str());
}

Outcome bridge() {
  const auto res = exp_galerkin_bridge(load("bridge.toml"));
  collect("bridge", res.checks);
  const auto& c = res.checkpoints.back();
  std::vector<Check> core;
  for (const auto& ch : res.checks)
    if (ch.name != "lyapunov") core.push_back(ch);
  return outcome_from(core, "t=" + fmt(c.t) + " W1_u " + fmt(c.w1_u) + ", W1_v " + fmt(c.w1_v) + ", mass defect " +
                                fmt(res.max_mass_defect) + ", stationary L1 " + fmt(res.stationary_l1));
}

Outcome adjoint() {
  const auto res = exp_adjoint(load("adjoint.toml"));
  collect("adjoint", res.checks);
  std::vector<Check> core;
  for (const auto& c : res.checks)
    if (c.name != "lyapunov") core.push_back(c);
  return outcome_from(core, std::to_string(res.probes.size()) + " probes, C~ = " + fmt(res.cert.c_tilde) +
                                ", duality max deviation " + fmt(res.duality.max_deviation));
}

Outcome lyapunov() {
  const bool ok = !lyapunov_checks.empty() && all_passed(lyapunov_checks);
  return {ok, std::to_string(lyapunov_checks.size()) + " verdicts from the runs above" +
                  (ok ? std::string() : "; failed: " + failed_names(lyapunov_checks))};
}

Outcome determinism() {
  const fs::path dir = fs::temp_directory_path() / "mfk_acceptance_determinism";
  fs::create_directories(dir);
  std::vector<std::string> contents;
  for (int workers : {1, 2, 8}) {
    RunConfig cfg = load("determinism.toml");
    cfg.set("run.threads", std::int64_t{workers});
    const std::string path = (dir / ("trajectory_" + std::to_string(workers) + ".csv")).string();
    {
      SnapshotCsvWriter csv(path, cfg.get_string("run.id"), model_from_config(cfg).modes());
      const auto res = exp_particles(cfg, [&](const Ensemble& e) { csv.write(e); });
      collect("determinism", res.checks);
    }
    std::ifstream in(path, std::ios::binary);
    contents.emplace_back(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
  }
  const bool ok = !contents[0].empty() && contents[0] == contents[1] && contents[0] == contents[2];
  return {ok, "workers 1/2/8, " + std::to_string(contents[0].size()) + " bytes each, " +
                  (ok ? "byte-identical" : "different")};
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    std::string name;
    std::function<Outcome()> run;
  };
  std::vector<Criterion> criteria = {
      {1, "W1 oracle equivalence", w1_oracle},
      {2, "integrator moment oracle", integrator_oracle},
      {3, "mean-field convergence", convergence},
      {4, "stability under coupling", stability},
      {5, "weak-form residual refinement", weak_residual},
      {6, "particle/grid bridge", bridge},
      {7, "adjoint suite", adjoint},
      {9, "worker-count determinism", determinism},
      {8, "Lyapunov moment and equicontinuity", lyapunov},
  };
  std::vector<std::pair<int, std::string>> lines;
  int failed = 0;
  for (auto& c : criteria) {
    std::cerr << "running criterion " << c.id << " (" << c.name << ")\n";
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    o.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (!o.passed) ++failed;
    std::ostringstream line;
    char secs[32];
    std::snprintf(secs, sizeof secs, "%.1fs", o.seconds);
    line << (o.passed ? "PASS" : "FAIL") << " criterion " << c.id << " " << c.name << " [" << secs << "]: " << o.detail;
    lines.emplace_back(c.id, line.str());
  }
  std::sort(lines.begin(), lines.end());
  for (const auto& [id, l] : lines) std::cout << l << "\n";
  std::cout << (failed == 0 ? "all criteria passed" : std::to_string(failed) + " criteria failed") << "\n";
  return failed == 0 ? 0 : 1;
}
