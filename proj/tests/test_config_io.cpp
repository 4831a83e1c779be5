#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "mfattn/config.hpp"
#include "mfattn/experiments.hpp"
#include "mfattn/io.hpp"

using namespace mfattn;

namespace {

std::string repo_config(const char* name) {
  // Tests run from the build tree; the bundled configs sit next to the sources.
  for (const char* prefix : {"../configs/", "../../configs/", "configs/"}) {
    const std::string path = std::string(prefix) + name;
    if (std::filesystem::exists(path)) return path;
  }
  return std::string("configs/") + name;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("bundled OU config parses and round-trips") {
  const ScenarioConfig cfg = parse_config(repo_config("ou_s2.cfg"));
  CHECK(cfg.n == 300);
  CHECK(cfg.d == 3);
  REQUIRE(cfg.h_list.size() == 3);
  CHECK(cfg.h_list[0] == 1);
  CHECK(cfg.h_list[2] == 100);
  CHECK(cfg.dt == Catch::Approx(0.01));
  CHECK(cfg.t_final == Catch::Approx(20.0));
  CHECK(cfg.n_mc == 20);
  CHECK(cfg.sigma2 == Catch::Approx(1.0));
  CHECK(cfg.weights_kind == "ou");
  CHECK(cfg.weights_f == "identity");

  const ScenarioConfig again = parse_config_text(cfg.echo());
  CHECK(again.echo() == cfg.echo());
}

TEST_CASE("config validation names the offending field") {
  SECTION("dt = 0") {
    try {
      parse_config_text("n = 4\nd = 3\ndt = 0\nT = 1\n");
      FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
      CHECK(std::string(e.what()).find("dt") != std::string::npos);
    }
  }
  SECTION("unknown key is rejected by name") {
    try {
      parse_config_text("foo = 12\n");
      FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
      CHECK(std::string(e.what()).find("foo") != std::string::npos);
      CHECK(e.line() == 1);
    }
  }
  SECTION("malformed number carries its line") {
    try {
      parse_config_text("n = 16\ndt = abc\n");
      FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
      CHECK(e.line() == 2);
    }
  }
  SECTION("oscillating in d != 3 is rejected") {
    CHECK_THROWS_AS(
        parse_config_text("n = 4\nd = 4\ndt = 0.01\nT = 1\n[weights]\nkind = oscillating\n"),
        ConfigError);
  }
}

TEST_CASE("overrides reach nested sections") {
  ScenarioConfig cfg = parse_config_text("n = 8\nd = 3\ndt = 0.01\nT = 1\n");
  apply_override(cfg, "weights.sigma2=0.25");
  apply_override(cfg, "n=12");
  CHECK(cfg.sigma2 == Catch::Approx(0.25));
  CHECK(cfg.n == 12);
  CHECK_THROWS_AS(apply_override(cfg, "bogus.key=1"), ConfigError);
}

TEST_CASE("trajectory archives round-trip bit-exactly") {
  ScenarioConfig cfg = parse_config_text(
      "n = 6\nd = 3\nH_list = 2\ndt = 0.02\nT = 0.2\nseed = 9\n"
      "[weights]\nkind = ou\nF = identity\nsigma2 = 0.5\n");
  const Trajectory traj = run_scenario_trajectory(cfg, 2, 0, 1);

  const std::string dir = "test_io_out";
  ensure_dir(dir);
  const std::string path = dir + "/t.traj";
  write_trajectory_archive(path, traj, cfg.echo(), cfg.seed);
  const TrajectoryArchive arc = read_trajectory_archive(path);

  CHECK(arc.n == 6);
  CHECK(arc.d == 3);
  CHECK(arc.h == 2);
  CHECK(arc.seed == 9);
  CHECK(arc.config_echo == cfg.echo());
  CHECK(arc.version == std::string(kVersion));
  REQUIRE(arc.clouds.size() == traj.clouds.size());
  for (std::size_t s = 0; s < arc.clouds.size(); ++s) {
    CHECK(arc.clouds[s] == traj.clouds[s]);
    CHECK(arc.ensembles[s] == traj.ensembles[s]);
  }

  // Rerunning the identical scenario and rewriting produces identical bytes.
  const Trajectory traj2 = run_scenario_trajectory(cfg, 2, 0, 1);
  const std::string path2 = dir + "/t2.traj";
  write_trajectory_archive(path2, traj2, cfg.echo(), cfg.seed);
  CHECK(read_file(path) == read_file(path2));
}

TEST_CASE("CSV files embed provenance and are deterministic") {
  const std::string dir = "test_io_out";
  ensure_dir(dir);
  const std::string path = dir + "/x.csv";
  {
    CsvWriter csv(path, "n = 4\n", 77, {"time", "value"});
    csv.row({0.0, 1.5});
    csv.row({0.1, 2.5});
  }
  const std::string text = read_file(path);
  CHECK(text.find("# mfattn version") != std::string::npos);
  CHECK(text.find("# seed 77") != std::string::npos);
  CHECK(text.find("# cfg n = 4") != std::string::npos);
  CHECK(text.find("time,value") != std::string::npos);
  {
    CsvWriter csv(dir + "/y.csv", "n = 4\n", 77, {"time", "value"});
    csv.row({0.0, 1.5});
    csv.row({0.1, 2.5});
  }
  CHECK(read_file(path) == read_file(dir + "/y.csv"));
}

TEST_CASE("archive reader rejects foreign files") {
  const std::string dir = "test_io_out";
  ensure_dir(dir);
  const std::string path = dir + "/bad.traj";
  write_text_file(path, "definitely not an archive");
  CHECK_THROWS_AS(read_trajectory_archive(path), Error);
}
