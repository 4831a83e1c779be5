#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "mfattn/diagnostics.hpp"
#include "mfattn/jko.hpp"
#include "mfattn/rng.hpp"

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

double max_point_distance(const TokenCloud& a, const TokenCloud& b) {
  double m = 0.0;
  for (int i = 0; i < a.size(); ++i) {
    double s = 0.0;
    for (int k = 0; k < a.dim(); ++k) {
      const double diff = a.point(i)[k] - b.point(i)[k];
      s += diff * diff;
    }
    m = std::max(m, std::sqrt(s));
  }
  return m;
}

HeadEnsemble random_heads(int h_count, int d, std::uint64_t seed, double scale = 0.8) {
  RngStream rng(seed, 0);
  std::vector<SymMatrix> heads;
  for (int h = 0; h < h_count; ++h) {
    SymMatrix m = symmetric_gaussian(d, rng);
    m *= scale;
    heads.push_back(std::move(m));
  }
  return HeadEnsemble(heads);
}

}  // namespace

TEST_CASE("jko_step on a constant-energy landscape stays put") {
  // For one particle, E(x) = e^{<x, I x>}/2 = e/2 on the whole sphere.
  const TokenCloud c = cloud_of({{0.6, 0.8, 0.0}});
  const HeadEnsemble ens(std::vector<SymMatrix>{SymMatrix::identity(3)});
  JkoConfig cfg;
  cfg.tau = 0.1;
  const JkoStepReport rep = jko_step(c, ens, cfg);
  CHECK(max_point_distance(c, rep.cloud) < 1e-9);
}

TEST_CASE("vanishing outer step pins the iterate to the previous cloud") {
  RngStream rng(71, 0);
  const TokenCloud c = TokenCloud::random_uniform(8, 3, rng);
  const HeadEnsemble ens = random_heads(2, 3, 71);
  JkoConfig cfg;
  cfg.tau = 1e-4;
  const JkoStepReport rep = jko_step(c, ens, cfg);
  CHECK(max_point_distance(c, rep.cloud) < 1e-3);
}

TEST_CASE("jko_step decreases the objective") {
  RngStream rng(72, 0);
  for (int rep_i = 0; rep_i < 5; ++rep_i) {
    const TokenCloud c = TokenCloud::random_uniform(10, 3, rng);
    const HeadEnsemble ens = random_heads(3, 3, 72 + rep_i);
    JkoConfig cfg;
    cfg.tau = 0.05;
    const JkoStepReport rep = jko_step(c, ens, cfg);
    CHECK(rep.objective_end <= rep.objective_start + 1e-12);
    // J(returned) <= J(prev) = E(prev): the minimality inequality with the
    // true transport distance follows a fortiori.
    const double lhs = interaction_energy(rep.cloud, ens) +
                       w2_squared(rep.cloud, c) / (2.0 * cfg.tau);
    CHECK(lhs <= interaction_energy(c, ens) + 1e-10);
  }
}

TEST_CASE("identity coupling verified optimal a posteriori") {
  RngStream rng(73, 0);
  const TokenCloud c = TokenCloud::random_uniform(12, 3, rng);
  const HeadEnsemble ens = random_heads(2, 3, 73);
  JkoConfig cfg;
  cfg.tau = 0.02;
  cfg.coupling = JkoCoupling::Assignment;
  const JkoStepReport rep = jko_step(c, ens, cfg);
  CHECK(rep.identity_coupling_optimal);
}

TEST_CASE("sphere constraint maintained by every outer iterate") {
  RngStream rng(74, 0);
  const TokenCloud c0 = TokenCloud::random_uniform(10, 3, rng);
  const HeadEnsemble ens = random_heads(2, 3, 74);
  JkoConfig cfg;
  cfg.tau = 0.05;
  const JkoTrajectory jt = jko_trajectory(c0, ens, WeightProcessSpec::frozen(), cfg, 0.5);
  for (const auto& cl : jt.clouds) CHECK(cl.max_norm_deviation() < 1e-12);
}

TEST_CASE("frozen zero weights give a stationary JKO trajectory") {
  RngStream rng(75, 0);
  const TokenCloud c0 = TokenCloud::random_uniform(6, 3, rng);
  const HeadEnsemble ens(std::vector<SymMatrix>{SymMatrix::zero(3)});
  JkoConfig cfg;
  cfg.tau = 0.1;
  const JkoTrajectory jt = jko_trajectory(c0, ens, WeightProcessSpec::frozen(), cfg, 1.0);
  for (const auto& cl : jt.clouds) CHECK(max_point_distance(c0, cl) < 1e-12);
}

TEST_CASE("discrete minimality inequality holds at every accepted step") {
  RngStream rng(76, 0);
  const TokenCloud c0 = TokenCloud::random_uniform(15, 3, rng);
  const HeadEnsemble ens = random_heads(3, 3, 76);
  JkoConfig cfg;
  cfg.tau = 0.05;
  const JkoTrajectory jt = jko_trajectory(c0, ens, WeightProcessSpec::frozen(), cfg, 1.0);
  for (std::size_t k = 1; k < jt.clouds.size(); ++k) {
    const double e_k = interaction_energy(jt.clouds[k], jt.ensembles[k]);
    const double e_prev = interaction_energy(jt.clouds[k - 1], jt.ensembles[k]);
    const double w2sq = w2_squared(jt.clouds[k], jt.clouds[k - 1]);
    CHECK(e_k + w2sq / (2.0 * cfg.tau) <= e_prev + 1e-10);
  }
}

TEST_CASE("JKO iterates self-converge to the matched forward flow") {
  RngStream rng(77, 0);
  const TokenCloud c0 = TokenCloud::random_uniform(20, 3, rng);
  const HeadEnsemble ens = random_heads(4, 3, 77);
  const WeightProcessSpec spec = WeightProcessSpec::frozen();
  const double t_end = 1.0;

  auto sup_distance = [&](double tau) {
    JkoConfig cfg;
    cfg.tau = tau;
    const JkoTrajectory jt = jko_trajectory(c0, ens, spec, cfg, t_end);
    double sup = 0.0;
    for (std::size_t k = 0; k < jt.times.size(); ++k) {
      const TokenCloud ref =
          jko_matched_forward(c0, ens, MobilityMode::Constant, jt.times[k], 1e-4);
      sup = std::max(sup, w2(jt.clouds[k], ref));
    }
    return sup;
  };

  const double s1 = sup_distance(0.1);
  const double s2 = sup_distance(0.05);
  const double s3 = sup_distance(0.025);
  CHECK(s2 < s1);
  CHECK(s3 < s2);
}

TEST_CASE("doubling inner iterations never worsens the endpoint") {
  RngStream rng(78, 0);
  const TokenCloud c0 = TokenCloud::random_uniform(12, 3, rng);
  const HeadEnsemble ens = random_heads(3, 3, 78);
  const WeightProcessSpec spec = WeightProcessSpec::frozen();
  const double t_end = 0.5;

  auto sup_distance = [&](int inner) {
    JkoConfig cfg;
    cfg.tau = 0.05;
    cfg.inner_iters = inner;
    const JkoTrajectory jt = jko_trajectory(c0, ens, spec, cfg, t_end);
    double sup = 0.0;
    for (std::size_t k = 0; k < jt.times.size(); ++k) {
      const TokenCloud ref =
          jko_matched_forward(c0, ens, MobilityMode::Constant, jt.times[k], 1e-4);
      sup = std::max(sup, w2(jt.clouds[k], ref));
    }
    return sup;
  };
  CHECK(sup_distance(100) <= sup_distance(50) + 1e-9);
}

TEST_CASE("one small constant-mobility step follows the unnormalized field") {
  RngStream rng(79, 0);
  const TokenCloud c = TokenCloud::random_uniform(10, 3, rng);
  const HeadEnsemble ens = random_heads(2, 3, 79);
  JkoConfig cfg;
  cfg.tau = 1e-3;
  cfg.inner_iters = 200;
  const JkoStepReport rep = jko_step(c, ens, cfg);
  const CloudField f = evaluate_field(c, ens);
  int moved = 0;
  for (int i = 0; i < c.size(); ++i) {
    Vec disp(3);
    double dn = 0.0, gn = 0.0, ip = 0.0;
    const double* gp = f.grad_pair.data() + static_cast<std::size_t>(i) * 3;
    for (int k = 0; k < 3; ++k) {
      disp[k] = rep.cloud.point(i)[k] - c.point(i)[k];
      dn += disp[k] * disp[k];
      gn += gp[k] * gp[k];
      ip += disp[k] * (-gp[k]);
    }
    if (std::sqrt(dn) < 1e-9 || std::sqrt(gn) < 1e-9) continue;  // stationary particle
    ++moved;
    const double cosang = ip / std::sqrt(dn * gn);
    CHECK(cosang > std::cos(15.0 * M_PI / 180.0));
  }
  CHECK(moved > 0);
}

TEST_CASE("invalid configurations are rejected") {
  JkoConfig bad;
  bad.tau = 0.0;
  RngStream rng(80, 0);
  const TokenCloud c = TokenCloud::random_uniform(4, 3, rng);
  const HeadEnsemble ens = random_heads(1, 3, 80);
  CHECK_THROWS_AS(jko_step(c, ens, bad), Error);
  JkoConfig bad2;
  bad2.inner_iters = 0;
  CHECK_THROWS_AS(jko_step(c, ens, bad2), Error);
}
