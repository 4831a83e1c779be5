#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "mfattn/attention.hpp"
#include "mfattn/diagnostics.hpp"
#include "mfattn/dynamics.hpp"
#include "mfattn/fastexp.hpp"
#include "mfattn/fit.hpp"
#include "mfattn/sphere.hpp"
#include "mfattn/weights.hpp"

namespace mfattn {

/// Fast invariant suite behind the `validate` subcommand.  Each entry is
/// (name, passed); the whole run takes a few seconds.
inline std::vector<std::pair<std::string, bool>> run_validation() {
  std::vector<std::pair<std::string, bool>> results;
  auto check = [&](const std::string& name, bool ok) { results.emplace_back(name, ok); };

  RngStream rng(2024, make_stream_id(StreamTag::Sampling, 0));

  // Tangent projection: idempotent, orthogonal, contractive.
  {
    bool ok = true;
    for (int rep = 0; rep < 200; ++rep) {
      Vec z(4), v(4);
      for (auto& x : z) x = rng.gaussian();
      for (auto& x : v) x = rng.gaussian();
      const UnitVector u = radial_normalize({z.data(), z.size()});
      const TangentVector t = project_tangent(u, {v.data(), v.size()});
      const TangentVector t2 = project_tangent(u, {t.v.data(), t.v.size()});
      ok = ok && std::abs(dot({t.v.data(), t.v.size()}, u.span())) < 1e-12;
      ok = ok && t.norm() <= norm({v.data(), v.size()}) + 1e-12;
      for (int k = 0; k < 4; ++k) ok = ok && std::abs(t.v[k] - t2.v[k]) < 1e-12;
    }
    check("tangent_projection", ok);
  }

  // Softmax rows: nonnegative, sum to 1 within 1e-12 including ||D|| = 50.
  {
    bool ok = true;
    for (int rep = 0; rep < 50; ++rep) {
      TokenCloud cloud = TokenCloud::random_uniform(12, 3, rng);
      SymMatrix d_mat = symmetric_gaussian(3, rng);
      d_mat *= (rep % 2 == 0) ? 1.0 : 25.0;
      for (int i = 0; i < cloud.size(); ++i) {
        const Vec row = attention_row(cloud, d_mat, i);
        double s = 0.0;
        for (double w : row) {
          ok = ok && w >= 0.0;
          s += w;
        }
        ok = ok && std::abs(s - 1.0) < 1e-12;
      }
    }
    check("softmax_normalization", ok);
  }

  // Unit norm and tangency over a short coupled run.
  {
    StreamFamily fam{7, 0};
    RngStream cr = fam.cloud_stream();
    TokenCloud cloud0 = TokenCloud::random_uniform(24, 3, cr);
    WeightProcessSpec spec = WeightProcessSpec::ou(SymMatrix::identity(3), 1.0);
    auto init_rngs = fam.weight_init_streams(4);
    HeadEnsemble ens0 = init_weights(spec, 4, 3, init_rngs);
    auto noise = fam.weight_noise_streams(4);
    Trajectory traj = simulate(cloud0, ens0, spec, 0.01, 1.0, {noise.data(), noise.size()});
    bool ok = true;
    for (const auto& c : traj.clouds) ok = ok && c.max_norm_deviation() < 1e-9;
    const TokenCloud& fc = traj.final_cloud();
    for (int i = 0; i < fc.size(); ++i) {
      const TangentVector v = multihead_velocity(fc, traj.final_ensemble(), i);
      ok = ok && std::abs(dot({v.v.data(), v.v.size()}, fc.point(i))) < 1e-10;
    }
    check("norm_and_tangency", ok);
  }

  // Exact assignment equals brute force at n = 6.
  {
    bool ok = true;
    for (int rep = 0; rep < 5; ++rep) {
      TokenCloud a = TokenCloud::random_uniform(6, 3, rng);
      TokenCloud b = TokenCloud::random_uniform(6, 3, rng);
      std::vector<int> perm{0, 1, 2, 3, 4, 5};
      double best = 1e300;
      do {
        double c = 0.0;
        for (int i = 0; i < 6; ++i) {
          auto ai = a.point(i);
          auto bj = b.point(perm[static_cast<std::size_t>(i)]);
          for (int k = 0; k < 3; ++k) c += (ai[k] - bj[k]) * (ai[k] - bj[k]);
        }
        best = std::min(best, c / 6.0);
      } while (std::next_permutation(perm.begin(), perm.end()));
      ok = ok && std::abs(w2_squared(a, b) - best) < 1e-10;
    }
    check("w2_assignment_oracle", ok);
  }

  // Symmetrized increments are exactly symmetric and streams reproducible.
  {
    RngStream s1(99, 5), s2(99, 5);
    bool ok = true;
    for (int rep = 0; rep < 100; ++rep) {
      const SymMatrix w1 = symmetrized_increment(s1, 3, 0.01);
      const SymMatrix w2m = symmetrized_increment(s2, 3, 0.01);
      ok = ok && w1.max_asymmetry() == 0.0 && w1 == w2m;
    }
    check("symmetrized_increments", ok);
  }

  // Determinism: identical seeds give bit-identical trajectories.
  {
    auto run = [] {
      StreamFamily fam{41, 3};
      RngStream cr = fam.cloud_stream();
      TokenCloud cloud0 = TokenCloud::random_uniform(16, 3, cr);
      WeightProcessSpec spec = WeightProcessSpec::ou(SymMatrix::identity(3), 0.5);
      auto init_rngs = fam.weight_init_streams(3);
      HeadEnsemble ens0 = init_weights(spec, 3, 3, init_rngs);
      auto noise = fam.weight_noise_streams(3);
      return simulate(cloud0, ens0, spec, 0.02, 0.5, {noise.data(), noise.size()});
    };
    const Trajectory t1 = run();
    const Trajectory t2 = run();
    bool ok = t1.final_cloud() == t2.final_cloud() &&
              t1.final_ensemble() == t2.final_ensemble() &&
              t1.ledger.residual == t2.ledger.residual;
    check("determinism", ok);
  }

  // fast_exp accuracy against std::exp.
  {
    bool ok = true;
    double worst = 0.0;
    for (int rep = 0; rep < 200000; ++rep) {
      const double x = (rng.uniform01() * 2.0 - 1.0) * 60.0;
      const double rel = std::abs(fast_exp(x) - std::exp(x)) / std::exp(x);
      worst = std::max(worst, rel);
    }
    ok = worst < 1e-13;
    check("fast_exp_accuracy", ok);
  }

  // Power-law fit recovers exact parameters.
  {
    const FitResult fit = fit_power_law({1.0, 10.0, 100.0}, {2.0, 0.2, 0.02});
    const bool ok = std::abs(fit.a - 2.0) < 1e-12 && std::abs(fit.b + 1.0) < 1e-12 &&
                    std::abs(std::abs(fit.pearson_r) - 1.0) < 1e-12;
    check("power_law_fit", ok);
  }

  return results;
}

}  // namespace mfattn
