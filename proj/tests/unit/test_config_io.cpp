#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "mfk/config.hpp"
#include "mfk/error.hpp"
#include "mfk/io.hpp"

using namespace mfk;

TEST_CASE("defaults, parsing and overrides") {
  const RunConfig def;
  CHECK(def.get_string("model.name") == "linear");
  CHECK(def.get_size("galerkin.modes") == 1);

  RunConfig cfg = RunConfig::from_string(R"(
[run]
seed = 12
[galerkin]
modes = 3
[model]
name = "saturated"
sigma1 = 0.25
[initial]
mean_u = [0.1, 0.2, 0.3]
)");
  CHECK(cfg.seed() == 12);
  CHECK(cfg.get_size("galerkin.modes") == 3);
  CHECK(cfg.get_list("initial.mean_u").size() == 3);
  cfg.apply_override("model.gamma=2");
  CHECK(cfg.get_double("model.gamma") == 2.0);
  cfg.apply_override("integrator.scheme=euler-maruyama");
  CHECK(cfg.get_string("integrator.scheme") == "euler-maruyama");
  cfg.apply_override("experiment.N_list=[8, 16]");
  CHECK(cfg.get_list("experiment.N_list") == std::vector<double>{8, 16});

  const ModelSpec model = model_from_config(cfg);
  CHECK(model.modes() == 3);
  CHECK(model.kernel.kind == KernelKind::tanh);
  CHECK(model.gamma == 2.0);
  const auto init = initial_from_config(cfg);
  CHECK(init.mean.u[2] == 0.3);
  CHECK(init.var_u.size() == 3);
  CHECK(integrator_from_config(cfg).scheme == Scheme::euler_maruyama);
}

TEST_CASE("config errors") {
  CHECK_THROWS_AS(RunConfig::from_string("[model]\nbogus = 1\n"), ConfigError);
  CHECK_THROWS_AS(RunConfig::from_string("[model]\ngamma = \"fast\"\n"), ConfigError);
  CHECK_THROWS_AS(RunConfig::from_string("[model\n"), ConfigError);
  RunConfig cfg;
  CHECK_THROWS_AS(cfg.apply_override("nosuch.key=1"), ConfigError);
  CHECK_THROWS_AS(cfg.apply_override("model.gamma"), ConfigError);
  cfg.set("model.name", std::string("quadratic"));
  CHECK_THROWS_AS(model_from_config(cfg), ConfigError);
  CHECK_THROWS_AS(broadcast({1.0, 2.0}, 3, "k"), ConfigError);
  CHECK(broadcast({1.5}, 3, "k") == std::vector<double>{1.5, 1.5, 1.5});
}

TEST_CASE("canonical form and digest") {
  RunConfig a;
  RunConfig b = RunConfig::from_string(a.canonical());
  CHECK(a.digest() == b.digest());
  CHECK(a.digest().size() == 16);
  b.apply_override("run.seed=2");
  CHECK(a.digest() != b.digest());
  const RunConfig c = RunConfig::from_string(b.canonical());
  CHECK(c.canonical() == b.canonical());
}

TEST_CASE("number formatting round-trips") {
  for (double x : {0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23}) CHECK(std::stod(fmt(x)) == x);
}

TEST_CASE("binary frames round-trip") {
  Ensemble e(3, 2, NoiseDriver(1, NoiseDomain::dynamics));
  for (std::size_t i = 0; i < 3; ++i) e.set_point(i, {{double(i), 0.5}, {-1.0, 1e-300}});
  e.time = 0.25;
  std::stringstream buf;
  write_frame(buf, e);
  write_frame(buf, e);
  Frame f;
  REQUIRE(read_frame(buf, f));
  CHECK(f.n == 3);
  CHECK(f.m == 2);
  CHECK(f.t == 0.25);
  CHECK(f.data[4] == 1.0);
  CHECK(f.data[7] == 1e-300);
  REQUIRE(read_frame(buf, f));
  CHECK_FALSE(read_frame(buf, f));
  std::stringstream cut(buf.str().substr(0, 20));
  CHECK_THROWS_AS(read_frame(cut, f), Error);
}

TEST_CASE("snapshot csv") {
  const auto dir = std::filesystem::temp_directory_path() / "mfk_unit_csv";
  const std::string path = (dir / "snap.csv").string();
  {
    SnapshotCsvWriter w(path, "r1", 1);
    Ensemble e(2, 1, NoiseDriver(1, NoiseDomain::dynamics));
    e.set_point(1, {{0.5}, {-0.5}});
    w.write(e);
  }
  std::ifstream in(path);
  std::string header, row0, row1;
  std::getline(in, header);
  std::getline(in, row0);
  std::getline(in, row1);
  CHECK(header == "run_id,t,i,u1,v1");
  CHECK(row1 == "r1,0,1,0.5,-0.5");
  std::filesystem::remove_all(dir);
}
