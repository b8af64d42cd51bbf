#include <pybind11/functional.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "mfk/adjoint.hpp"
#include "mfk/config.hpp"
#include "mfk/error.hpp"
#include "mfk/experiments.hpp"
#include "mfk/fpe.hpp"
#include "mfk/galerkin.hpp"
#include "mfk/measure.hpp"
#include "mfk/model.hpp"
#include "mfk/particles.hpp"
#include "mfk/test_functions.hpp"

namespace py = pybind11;
using namespace mfk;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Array to_array(std::span<const double> data, std::size_t rows, std::size_t cols) {
  Array out({rows, cols});
  std::copy(data.begin(), data.end(), out.mutable_data());
  return out;
}

EmpiricalMeasure measure_from(const Array& points) {
  if (points.ndim() != 2) throw InvalidArgument("points must be a 2D array (atoms x dim)");
  const auto dim = static_cast<std::size_t>(points.shape(1));
  return EmpiricalMeasure(dim, std::vector<double>(points.data(), points.data() + points.size()));
}

Array ensemble_block(const Ensemble& e, bool velocity) {
  return to_array(velocity ? e.v_data() : e.u_data(), e.size(), e.modes());
}

void set_block(Ensemble& e, const Array& a, bool velocity) {
  if (a.ndim() != 2 || static_cast<std::size_t>(a.shape(0)) != e.size() ||
      static_cast<std::size_t>(a.shape(1)) != e.modes())
    throw InvalidArgument("array shape must be (N, m)");
  for (std::size_t i = 0; i < e.size(); ++i) {
    auto row = velocity ? e.v(i) : e.u(i);
    std::copy(a.data() + i * e.modes(), a.data() + (i + 1) * e.modes(), row.begin());
  }
}

Array density_array(const DensityField& d) { return to_array(d.mass, d.grid.n_u, d.grid.n_v); }

py::dict checks_dict(const std::vector<Check>& checks) {
  py::dict out;
  for (const auto& c : checks) out[py::str(c.name)] = py::make_tuple(c.passed, c.detail);
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Particle, grid and adjoint solvers for a mean-field Langevin system in a sine basis";
  m.attr("__version__") = MFK_VERSION;

  auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<InvalidArgument>(m, "InvalidArgument", base.ptr());
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<NumericalFailure>(m, "NumericalFailure", base.ptr());
  py::register_exception<AssumptionViolation>(m, "AssumptionViolation", base.ptr());

  py::class_<GalerkinBasis>(m, "GalerkinBasis")
      .def(py::init<double, std::size_t, bool>(), py::arg("box_length"), py::arg("modes"),
           py::arg("free_transport") = false)
      .def_property_readonly("box_length", &GalerkinBasis::box_length)
      .def_property_readonly("modes", &GalerkinBasis::modes)
      .def_property_readonly("eigenvalues", [](const GalerkinBasis& b) {
        auto ev = b.eigenvalues();
        return std::vector<double>(ev.begin(), ev.end());
      });

  m.def("eval_physical", [](std::vector<double> u, double x, double L) { return eval_physical(u, x, L); },
        py::arg("u"), py::arg("x"), py::arg("box_length"));

  py::class_<PhasePoint>(m, "PhasePoint")
      .def(py::init([](std::vector<double> u, std::vector<double> v) { return PhasePoint{std::move(u), std::move(v)}; }),
           py::arg("u"), py::arg("v"))
      .def_readwrite("u", &PhasePoint::u)
      .def_readwrite("v", &PhasePoint::v);

  py::class_<ModelSpec>(m, "ModelSpec")
      .def_readonly("name", &ModelSpec::name)
      .def_readonly("gamma", &ModelSpec::gamma)
      .def_readonly("epsilon", &ModelSpec::epsilon)
      .def_readonly("basis", &ModelSpec::basis)
      .def_property_readonly("modes", &ModelSpec::modes)
      .def("validate", &ModelSpec::validate);

  m.def("make_linear_model", &make_linear_model, py::arg("basis"), py::arg("kappa"), py::arg("a"), py::arg("gamma"),
        py::arg("sigma"), py::arg("epsilon") = 1.0);
  m.def("make_saturated_model", &make_saturated_model, py::arg("basis"), py::arg("kappa_b"), py::arg("b"),
        py::arg("gamma"), py::arg("s0"), py::arg("s1"), py::arg("epsilon") = 1.0);

  py::class_<ModelAssumptions>(m, "ModelAssumptions")
      .def_readonly("theta", &ModelAssumptions::theta)
      .def_readonly("alpha", &ModelAssumptions::alpha)
      .def_readonly("alpha_tilde", &ModelAssumptions::alpha_tilde)
      .def_readonly("varpi", &ModelAssumptions::varpi)
      .def_readonly("lambda1", &ModelAssumptions::lambda1)
      .def_readonly("lambda2", &ModelAssumptions::lambda2)
      .def_readonly("coupling_rate", &ModelAssumptions::coupling_rate)
      .def("as_dict", [](const ModelAssumptions& a) { return constants_map(a); });

  m.def("validate_assumptions", &validate_assumptions, py::arg("model"), py::arg("probe_count") = 256,
        py::arg("seed") = 0);

  py::class_<InitialDistribution>(m, "InitialDistribution")
      .def_static("point_mass", &InitialDistribution::point_mass, py::arg("z0"))
      .def_static("gaussian", &InitialDistribution::gaussian, py::arg("mean"), py::arg("var_u"), py::arg("var_v"));

  py::enum_<Scheme>(m, "Scheme").value("splitting", Scheme::splitting).value("euler_maruyama", Scheme::euler_maruyama);

  py::class_<IntegratorConfig>(m, "IntegratorConfig")
      .def(py::init([](double dt, Scheme scheme, std::size_t workers) {
             IntegratorConfig c;
             c.dt = dt;
             c.scheme = scheme;
             c.workers = workers;
             return c;
           }),
           py::arg("dt") = 1e-3, py::arg("scheme") = Scheme::splitting, py::arg("workers") = 0)
      .def_readwrite("dt", &IntegratorConfig::dt)
      .def_readwrite("scheme", &IntegratorConfig::scheme)
      .def_readwrite("workers", &IntegratorConfig::workers);

  py::class_<Ensemble>(m, "Ensemble")
      .def_property_readonly("size", &Ensemble::size)
      .def_property_readonly("modes", &Ensemble::modes)
      .def_readonly("time", &Ensemble::time)
      .def_readonly("step_index", &Ensemble::step_index)
      .def_property(
          "u", [](const Ensemble& e) { return ensemble_block(e, false); },
          [](Ensemble& e, const Array& a) { set_block(e, a, false); })
      .def_property(
          "v", [](const Ensemble& e) { return ensemble_block(e, true); },
          [](Ensemble& e, const Array& a) { set_block(e, a, true); })
      .def("__eq__", [](const Ensemble& a, const Ensemble& b) { return a == b; })
      .def("__len__", &Ensemble::size);

  m.def("init_ensemble", &init_ensemble, py::arg("dist"), py::arg("n"), py::arg("m"), py::arg("seed"));
  m.def(
      "step", [](Ensemble& e, const ModelSpec& model, const IntegratorConfig& cfg) { step(e, model, cfg); },
      py::arg("ensemble"), py::arg("model"), py::arg("config"));
  m.def(
      "run",
      [](Ensemble e, const ModelSpec& model, const IntegratorConfig& cfg, double T, std::size_t every) {
        py::gil_scoped_release release;
        return run(std::move(e), model, cfg, T, every);
      },
      py::arg("ensemble"), py::arg("model"), py::arg("config"), py::arg("T"), py::arg("snapshot_every"),
      "Returns the snapshots, initial state included.");

  m.def(
      "w1_exact", [](const Array& x, const Array& y) { return w1_exact(measure_from(x), measure_from(y), 4096).value; },
      py::arg("x"), py::arg("y"));
  m.def(
      "w1_sliced",
      [](const Array& x, const Array& y, std::size_t n_projections, std::uint64_t seed) {
        const auto r = w1_sliced(measure_from(x), measure_from(y), n_projections, seed);
        return py::make_tuple(r.value, r.stat_error);
      },
      py::arg("x"), py::arg("y"), py::arg("n_projections") = kDefaultProjections, py::arg("seed") = 0,
      "Returns (value, bootstrap standard error).");

  py::class_<PhaseGrid>(m, "PhaseGrid")
      .def(py::init([](double R_u, double R_v, std::size_t n_u, std::size_t n_v) {
             return PhaseGrid{R_u, R_v, n_u, n_v};
           }),
           py::arg("R_u"), py::arg("R_v"), py::arg("n_u"), py::arg("n_v"))
      .def_readonly("R_u", &PhaseGrid::R_u)
      .def_readonly("R_v", &PhaseGrid::R_v)
      .def_readonly("n_u", &PhaseGrid::n_u)
      .def_readonly("n_v", &PhaseGrid::n_v);

  py::class_<DensityField>(m, "DensityField")
      .def_readonly("grid", &DensityField::grid)
      .def_readonly("time", &DensityField::time)
      .def_property_readonly("mass", &density_array)
      .def("total_mass", &DensityField::total_mass)
      .def("boundary_mass", &DensityField::boundary_mass)
      .def("mean_u", &DensityField::mean_u);

  m.def("gaussian_density", &gaussian_density, py::arg("grid"), py::arg("mean"), py::arg("cov"));

  py::class_<FpeConfig>(m, "FpeConfig")
      .def(py::init([](double dt) {
             FpeConfig c;
             c.dt = dt;
             return c;
           }),
           py::arg("dt") = 1e-3)
      .def_readwrite("dt", &FpeConfig::dt)
      .def_readwrite("picard_tol", &FpeConfig::picard_tol)
      .def_readwrite("picard_max_iter", &FpeConfig::picard_max_iter);

  m.def(
      "fpe_run",
      [](const DensityField& rho0, const ModelSpec& model, const FpeConfig& cfg, double T, std::size_t every) {
        py::gil_scoped_release release;
        return fpe_run(rho0, model, cfg, T, every).snapshots;
      },
      py::arg("rho0"), py::arg("model"), py::arg("config"), py::arg("T"), py::arg("snapshot_every") = 0);

  py::class_<TestFunction>(m, "TestFunction")
      .def_readonly("based_modes", &TestFunction::based_modes)
      .def("__call__", [](const TestFunction& f, std::vector<double> r) { return f.value(r); });
  m.def("make_bump", &make_bump, py::arg("center"), py::arg("radius"), py::arg("amplitude") = 1.0,
        py::arg("poly") = std::vector<double>{}, py::arg("poly0") = 1.0);
  m.def("make_unit_lipschitz_bump", &make_unit_lipschitz_bump, py::arg("center"), py::arg("radius"));

  py::class_<FrozenFlow>(m, "FrozenFlow")
      .def_static(
          "record",
          [](const Ensemble& e, const ModelSpec& model, const IntegratorConfig& cfg, double T) {
            return FrozenFlow::record(e, model, cfg, T);
          },
          py::arg("ensemble"), py::arg("model"), py::arg("config"), py::arg("T"))
      .def_property_readonly("dt", &FrozenFlow::dt)
      .def_property_readonly("steps", &FrozenFlow::steps);

  py::class_<AdjointProblem>(m, "AdjointProblem")
      .def(py::init([](TestFunction psi, double t, FrozenFlow flow) {
             AdjointProblem p{std::move(psi), t, std::move(flow)};
             p.validate();
             return p;
           }),
           py::arg("psi"), py::arg("t"), py::arg("flow"));

  m.def(
      "solve_fk",
      [](const AdjointProblem& p, double s, const PhasePoint& z, std::size_t n, std::uint64_t seed,
         const ModelSpec& model) {
        const auto r = solve_fk(p, s, z, n, seed, model);
        return py::make_tuple(r.mean, r.stderr);
      },
      py::arg("problem"), py::arg("s"), py::arg("z"), py::arg("n_samples"), py::arg("seed"), py::arg("model"),
      "Returns (mean, standard error).");
  m.def(
      "grad_fk",
      [](const AdjointProblem& p, double s, const PhasePoint& z, std::size_t n, std::uint64_t seed,
         const ModelSpec& model, double h) {
        const auto r = grad_fk(p, s, z, n, seed, model, h);
        return py::make_tuple(r.grad, r.stderr, r.norm, r.norm_stderr);
      },
      py::arg("problem"), py::arg("s"), py::arg("z"), py::arg("n_samples"), py::arg("seed"), py::arg("model"),
      py::arg("h") = 1e-3, "Returns (grad, stderr, norm, norm_stderr).");

  py::class_<RunConfig>(m, "RunConfig")
      .def(py::init<>())
      .def_static("from_file", &RunConfig::from_file, py::arg("path"))
      .def_static("from_string", &RunConfig::from_string, py::arg("text"))
      .def("apply_override", &RunConfig::apply_override, py::arg("assignment"))
      .def("get", &RunConfig::value, py::arg("key"))
      .def("canonical", &RunConfig::canonical)
      .def("digest", &RunConfig::digest)
      .def_property_readonly("seed", &RunConfig::seed);

  m.def("model_from_config", &model_from_config, py::arg("config"));
  m.def("initial_from_config", &initial_from_config, py::arg("config"));
  m.def("integrator_from_config", &integrator_from_config, py::arg("config"));

  m.def(
      "exp_meanfield_convergence",
      [](const RunConfig& cfg) {
        ConvergenceTable t;
        {
          py::gil_scoped_release release;
          t = exp_meanfield_convergence(cfg);
        }
        py::list rows;
        for (const auto& r : t.rows) rows.append(py::make_tuple(r.n, r.mean, r.stderr));
        py::dict out;
        out["rows"] = rows;
        out["split_half"] = t.split_half;
        out["checks"] = checks_dict(t.checks);
        return out;
      },
      py::arg("config"), "rows are (N, mean W1, standard error)");
  m.def(
      "exp_stability",
      [](const RunConfig& cfg) {
        StabilityResult r;
        {
          py::gil_scoped_release release;
          r = exp_stability(cfg);
        }
        py::dict out;
        out["t"] = r.t;
        out["ratio"] = r.ratio;
        out["ratio_sliced"] = r.ratio_sliced;
        out["bound"] = r.bound;
        out["rate"] = r.rate;
        out["checks"] = checks_dict(r.checks);
        return out;
      },
      py::arg("config"));
  m.def(
      "exp_validate", [](const RunConfig& cfg) { return checks_dict(exp_validate(cfg).checks); }, py::arg("config"));
}
