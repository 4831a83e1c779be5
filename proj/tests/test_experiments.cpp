#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "mfattn/experiments.hpp"
#include "mfattn/report_json.hpp"
#include "mfattn/validate.hpp"

using namespace mfattn;

namespace {

TokenCloud cloud_of(std::initializer_list<std::initializer_list<double>> pts) {
  std::vector<UnitVector> v;
  for (const auto& p : pts) {
    Vec z(p);
    v.push_back(radial_normalize({z.data(), z.size()}));
  }
  return TokenCloud::from_points(v);
}

}  // namespace

TEST_CASE("clustering metric on reference configurations") {
  SECTION("coincident points score zero") {
    const TokenCloud c = cloud_of({{1, 0, 0}, {1, 0, 0}, {1, 0, 0}});
    CHECK(clustering_metric(c) == Catch::Approx(0.0).margin(1e-12));
  }
  SECTION("two antipodal points score pi") {
    const TokenCloud c = cloud_of({{0, 0, 1}, {0, 0, -1}});
    CHECK(clustering_metric(c) == Catch::Approx(M_PI));
  }
  SECTION("uniform clouds match a direct sampling baseline") {
    // Two independent estimates of the uniform-sphere mean nearest-neighbor
    // angle at n = 150 must agree closely (used as the t = 0 baseline).
    RngStream rng(91, 0);
    auto estimate = [&](int reps) {
      double acc = 0.0;
      for (int r = 0; r < reps; ++r)
        acc += clustering_metric(TokenCloud::random_uniform(150, 3, rng));
      return acc / reps;
    };
    const double a = estimate(100);
    const double b = estimate(100);
    CHECK(a == Catch::Approx(b).epsilon(0.02));
    CHECK(a > 0.05);
    CHECK(a < 0.5);
  }
  SECTION("single token is rejected") {
    const TokenCloud c = cloud_of({{1, 0, 0}});
    CHECK_THROWS_AS(clustering_metric(c), Error);
  }
}

TEST_CASE("mc_sweep smoke run aggregates finite statistics") {
  const ScenarioConfig cfg = parse_config_text(
      "n = 8\nd = 3\nH_list = 1\ndt = 0.02\nT = 0.04\nN_MC = 2\nseed = 5\nthreads = 1\n"
      "[weights]\nkind = ou\nF = identity\nsigma2 = 0.5\n");
  const ScenarioReport report = mc_sweep(cfg);
  REQUIRE(report.per_h.size() == 1);
  const PerHeadReport& ph = report.per_h.front();
  CHECK(ph.h_count == 1);
  CHECK(ph.g2_timeavg_samples.size() == 2);
  CHECK(std::isfinite(ph.g2_timeavg_se));
  CHECK(ph.g2.mean.size() == 3);  // two steps plus the terminal row
  for (double se : ph.g2.se) CHECK(std::isfinite(se));
  CHECK_FALSE(report.fit_valid);  // fewer than 3 head counts
}

TEST_CASE("mc_sweep reports are bit-reproducible across reruns and thread counts") {
  const char* text =
      "n = 10\nd = 3\nH_list = 1,2,4\ndt = 0.02\nT = 0.1\nN_MC = 3\nseed = 6\nthreads = %d\n"
      "[weights]\nkind = ou\nF = identity\nsigma2 = 1.0\n";
  char buf[512];
  std::snprintf(buf, sizeof(buf), text, 1);
  const ScenarioConfig cfg1 = parse_config_text(buf);
  std::snprintf(buf, sizeof(buf), text, 2);
  const ScenarioConfig cfg2 = parse_config_text(buf);

  const ScenarioReport r1 = mc_sweep(cfg1);
  const ScenarioReport r2 = mc_sweep(cfg1);
  const ScenarioReport r3 = mc_sweep(cfg2);

  const auto j1 = report_to_json(r1, cfg1.seed).dump();
  const auto j2 = report_to_json(r2, cfg1.seed).dump();
  CHECK(j1 == j2);

  // Same numbers regardless of worker count (config echo differs by design).
  REQUIRE(r1.per_h.size() == r3.per_h.size());
  for (std::size_t h = 0; h < r1.per_h.size(); ++h) {
    CHECK(r1.per_h[h].g2_timeavg_mean == r3.per_h[h].g2_timeavg_mean);
    CHECK(r1.per_h[h].g2.mean == r3.per_h[h].g2.mean);
    CHECK(r1.per_h[h].residual.mean == r3.per_h[h].residual.mean);
  }
  CHECK(r1.fit_valid == r3.fit_valid);
  if (r1.fit_valid) CHECK(r1.fit.b == r3.fit.b);
}

TEST_CASE("gronwall: zero perturbation stays at zero distance") {
  const ScenarioConfig cfg = parse_config_text(
      "n = 12\nd = 3\nH_list = 2\ndt = 0.02\nT = 0.2\nN_MC = 2\nseed = 8\nthreads = 1\n"
      "[weights]\nkind = ou\nF = identity\nsigma2 = 1.0\n"
      "[gronwall]\neta_list = 0\nw2_stride = 5\n");
  const GronwallReport report = gronwall_experiment(cfg);
  REQUIRE(report.per_eta.size() == 1);
  for (double w : report.per_eta.front().w2_mean) CHECK(w < 1e-12);
}

TEST_CASE("gronwall smoke: envelope holds and perturbations stay linear") {
  const ScenarioConfig cfg = parse_config_text(
      "n = 16\nd = 3\nH_list = 4\ndt = 0.02\nT = 1\nN_MC = 2\nseed = 9\nthreads = 2\n"
      "[weights]\nkind = ou\nF = identity\nsigma2 = 1.0\n"
      "[gronwall]\neta_list = 0.001,0.01\nw2_stride = 10\n");
  const GronwallReport report = gronwall_experiment(cfg);
  for (const auto& er : report.per_eta) {
    CHECK(er.envelope_holds);
    CHECK(std::isfinite(er.c2));
    CHECK(er.w2_mean.front() == Catch::Approx(er.eta).epsilon(0.05));
    CHECK(er.early_ratio_vs_half == Catch::Approx(2.0).epsilon(0.25));
    for (std::size_t k = 0; k < er.m_theta_mean.size(); ++k) {
      if (k > 0) CHECK(er.m_theta_mean[k] >= er.m_theta_mean[k - 1]);
    }
  }
}

TEST_CASE("stability smoke: identical head counts give zero distance") {
  const ScenarioConfig cfg = parse_config_text(
      "n = 10\nd = 3\nH_list = 1\ndt = 0.02\nT = 0.2\nN_MC = 2\nseed = 10\nthreads = 1\n"
      "[weights]\nkind = ou\nF = identity\nsigma2 = 1.0\n"
      "[stability]\nH_list = 8\nreference_H = 8\n");
  const StabilityReport report = stability_experiment(cfg);
  REQUIRE(report.w2_mean.size() == 1);
  CHECK(report.w2_mean.front() < 1e-12);
}

TEST_CASE("validation suite is green") {
  for (const auto& [name, ok] : run_validation()) {
    INFO(name);
    CHECK(ok);
  }
}
