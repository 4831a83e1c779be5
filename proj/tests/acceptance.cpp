/// Acceptance suite: one pass/fail line per criterion, nonzero exit when any
/// criterion fails.  Scenario configurations are loaded from --configs DIR
/// (default ../configs).

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <string>
#include <vector>

#include "mfattn/config.hpp"
#include "mfattn/diagnostics.hpp"
#include "mfattn/dynamics.hpp"
#include "mfattn/experiments.hpp"
#include "mfattn/fit.hpp"
#include "mfattn/jko.hpp"
#include "mfattn/rng.hpp"
#include "mfattn/threading.hpp"

using namespace mfattn;

namespace {

struct Harness {
  int total = 0;
  int passed = 0;

  void report(const std::string& name, bool ok, const std::string& detail, double seconds) {
    ++total;
    if (ok) ++passed;
    std::printf("[%2d] %s  %-28s %s  [%.1f s]\n", total, ok ? "PASS" : "FAIL", name.c_str(),
                detail.c_str(), seconds);
    std::fflush(stdout);
  }

  template <typename Fn>
  void run(const std::string& name, Fn&& fn) {
    const auto start = std::chrono::steady_clock::now();
    bool ok = false;
    std::string detail;
    try {
      std::tie(ok, detail) = fn();
    } catch (const std::exception& e) {
      ok = false;
      detail = std::string("exception: ") + e.what();
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    report(name, ok, detail, secs);
  }
};

template <typename... Args>
std::string fmt(const char* pattern, Args... args) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), pattern, args...);
  return buf;
}

using Result = std::pair<bool, std::string>;

// --- Property criteria -----------------------------------------------------

Result softmax_normalization() {
  RngStream rng(101, 0);
  double worst = 0.0;
  for (int rep = 0; rep < 1000; ++rep) {
    const int n = 2 + static_cast<int>(rng.uniform01() * 14);
    const TokenCloud c = TokenCloud::random_uniform(n, 3, rng);
    SymMatrix d_mat = symmetric_gaussian(3, rng);
    if (rep % 4 == 0) d_mat *= 50.0 / std::max(1e-12, spectral_norm_sym(d_mat));
    const int i = static_cast<int>(rng.uniform01() * n);
    const Vec row = attention_row(c, d_mat, i);
    double s = 0.0;
    for (double w : row) {
      if (w < 0.0) return {false, "negative attention weight"};
      s += w;
    }
    worst = std::max(worst, std::abs(s - 1.0));
  }
  return {worst < 1e-12, fmt("max |row sum - 1| = %.2e over 1000 draws incl. ||D||=50", worst)};
}

Result tangency_and_norms() {
  StreamFamily fam{102, 0};
  RngStream cr = fam.cloud_stream();
  const TokenCloud c0 = TokenCloud::random_uniform(50, 3, cr);
  WeightProcessSpec spec = WeightProcessSpec::ou(SymMatrix::identity(3), 1.0);
  auto init = fam.weight_init_streams(4);
  const HeadEnsemble ens0 = init_weights(spec, 4, 3, init);
  auto noise = fam.weight_noise_streams(4);
  SimOptions opt;
  opt.threads = hardware_threads();
  const Trajectory traj =
      simulate(c0, ens0, spec, 0.01, 20.0, {noise.data(), noise.size()}, opt);

  double worst_norm = 0.0, worst_tang = 0.0;
  for (std::size_t s = 0; s < traj.clouds.size(); ++s) {
    worst_norm = std::max(worst_norm, traj.clouds[s].max_norm_deviation());
    FieldRequest req;
    req.want_scalars = false;
    const CloudField f = evaluate_field(traj.clouds[s], traj.ensembles[s], req);
    for (int i = 0; i < traj.clouds[s].size(); ++i)
      worst_tang =
          std::max(worst_tang, std::abs(dot(f.velocity(i), traj.clouds[s].point(i))));
  }
  const bool ok = worst_norm < 1e-9 && worst_tang < 1e-10;
  return {ok, fmt("max norm dev = %.2e, max <v,x> = %.2e over T=20", worst_norm, worst_tang)};
}

Result kernel_gradient_fd() {
  RngStream rng(103, 0);
  const double step = 1e-4;
  double worst = 0.0;
  for (int rep = 0; rep < 100; ++rep) {
    Vec zx(3), zy(3);
    for (auto& v : zx) v = rng.gaussian();
    for (auto& v : zy) v = rng.gaussian();
    const UnitVector x = radial_normalize({zx.data(), zx.size()});
    const UnitVector y = radial_normalize({zy.data(), zy.size()});
    const SymMatrix d_mat = symmetric_gaussian(3, rng);
    const TangentVector g = kernel_gradient(x, y, d_mat);

    Vec seed{1, 0, 0};
    if (std::abs(x.c[0]) > 0.9) seed = {0, 1, 0};
    TangentVector b1 = project_tangent(x, {seed.data(), seed.size()});
    for (auto& v : b1.v) v /= b1.norm();
    const Vec b2{x.c[1] * b1.v[2] - x.c[2] * b1.v[1], x.c[2] * b1.v[0] - x.c[0] * b1.v[2],
                 x.c[0] * b1.v[1] - x.c[1] * b1.v[0]};
    auto kernel_at = [&](const Vec& p) {
      const UnitVector u = radial_normalize({p.data(), p.size()});
      const Vec dy = d_mat.apply(y.span());
      return std::exp(dot(u.span(), {dy.data(), dy.size()}));
    };
    const double scale = std::max(1.0, g.norm());
    for (const Vec& dir : {b1.v, b2}) {
      Vec plus(3), minus(3);
      for (int k = 0; k < 3; ++k) {
        plus[k] = x.c[k] + step * dir[k];
        minus[k] = x.c[k] - step * dir[k];
      }
      const double fd = (kernel_at(plus) - kernel_at(minus)) / (2.0 * step);
      const double an = dot({g.v.data(), g.v.size()}, {dir.data(), dir.size()});
      worst = std::max(worst, std::abs(fd - an) / scale);
    }
  }
  return {worst < 1e-4, fmt("max relative FD error = %.2e over 100 triples", worst)};
}

Result w2_oracle() {
  RngStream rng(104, 0);
  double worst = 0.0;
  for (int rep = 0; rep < 50; ++rep) {
    const int n = 4 + rep % 4;  // 4..7
    const TokenCloud a = TokenCloud::random_uniform(n, 3, rng);
    const TokenCloud b = TokenCloud::random_uniform(n, 3, rng);
    std::vector<int> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    double best = 1e300;
    do {
      double cost = 0.0;
      for (int i = 0; i < n; ++i)
        for (int k = 0; k < 3; ++k) {
          const double diff = a.point(i)[k] - b.point(perm[static_cast<std::size_t>(i)])[k];
          cost += diff * diff;
        }
      best = std::min(best, cost / n);
    } while (std::next_permutation(perm.begin(), perm.end()));
    worst = std::max(worst, std::abs(w2_squared(a, b) - best));
  }
  return {worst < 1e-10, fmt("max |assignment - brute force| = %.2e over 50 pairs", worst)};
}

Result edi_residual_convergence() {
  StreamFamily fam{105, 0};
  RngStream cr = fam.cloud_stream();
  const TokenCloud c0 = TokenCloud::random_uniform(50, 3, cr);
  RngStream wr(105, 7);
  std::vector<SymMatrix> heads;
  for (int h = 0; h < 4; ++h) heads.push_back(symmetric_gaussian(3, wr));
  const HeadEnsemble ens0(heads);

  auto residual_at = [&](double dt) {
    SimOptions opt;
    opt.record_stride = 1 << 30;
    opt.threads = hardware_threads();
    const Trajectory traj = simulate(c0, ens0, WeightProcessSpec::frozen(), dt, 2.0, {}, opt);
    return std::abs(traj.ledger.residual.back());
  };
  const double r1 = residual_at(4e-2);
  const double r2 = residual_at(2e-2);
  const double r3 = residual_at(1e-2);
  const double o1 = std::log2(r1 / r2);
  const double o2 = std::log2(r2 / r3);
  const bool ok = o1 > 0.7 && o1 < 1.3 && o2 > 0.7 && o2 < 1.3;
  return {ok, fmt("orders %.2f, %.2f (|res| %.1e -> %.1e)", o1, o2, r1, r3)};
}

Result variance_decomposition_mc() {
  RngStream rng(106, 0);
  const TokenCloud cloud = TokenCloud::random_uniform(32, 3, rng);
  WeightProcessSpec spec = WeightProcessSpec::ou(SymMatrix::identity(3), 1.0);
  const SymMatrix d0 = SymMatrix::zero(3);
  const double t = 2.0;
  RngStream sampler(106, 1);
  const auto [var_term, mean_term] = variance_decomposition(cloud, spec, d0, t, 10000, sampler);

  std::string detail = fmt("Var = %.3f, ||mean||^2 = %.4f;", var_term, mean_term);
  bool ok = true;
  FieldRequest req;
  for (int h_count : {1, 10, 100}) {
    const int k_ens = 10000 / h_count;
    Vec g2s;
    for (int rep = 0; rep < k_ens; ++rep) {
      std::vector<SymMatrix> hs;
      hs.reserve(h_count);
      for (int h = 0; h < h_count; ++h) hs.push_back(sample_head_law(spec, d0, t, sampler));
      g2s.push_back(evaluate_field(cloud, HeadEnsemble(hs), req).g2_unweighted);
    }
    const double mean = mean_of(g2s);
    const double se = se_of(g2s);
    const double predicted = var_term / h_count + mean_term;
    const double dev = std::abs(mean - predicted) / std::max(1e-300, se);
    detail += fmt(" H=%.0f: %.1f SE;", static_cast<double>(h_count), dev);
    ok = ok && dev <= 3.0;
  }
  return {ok, detail};
}

// --- Desk-scale reproductions ----------------------------------------------

struct SweepOutcome {
  ScenarioReport report;
  double t_final = 0.0;
  double dt = 0.0;
};

SweepOutcome run_sweep(const std::string& path) {
  ScenarioConfig cfg = parse_config(path);
  SweepOutcome out;
  out.report = mc_sweep(cfg);
  out.t_final = cfg.t_final;
  out.dt = cfg.dt;
  return out;
}

Result ou_fit(const SweepOutcome& ou) {
  if (!ou.report.fit_valid) return {false, "fit unavailable"};
  const FitResult& fit = ou.report.fit;
  const bool ok = fit.b >= -1.2 && fit.b <= -0.7 && std::abs(fit.pearson_r) >= 0.98;
  return {ok, fmt("b = %.3f (target [-1.2,-0.7]), a = %.3f, |r| = %.3f", fit.b, fit.a,
                  std::abs(fit.pearson_r))};
}

Result oscillating_fit(const SweepOutcome& osc) {
  if (!osc.report.fit_valid) return {false, "fit unavailable"};
  const FitResult& fit = osc.report.fit;
  bool ok = fit.b >= -0.15 && fit.b <= 0.15;
  std::string detail = fmt("b = %.3f (target [-0.15,0.15]);", fit.b);
  // Non-decaying G^2: final-quarter mean >= 0.5 x first-quarter mean.
  for (const auto& ph : osc.report.per_h) {
    const std::size_t len = ph.g2.mean.size();
    const std::size_t q = len / 4;
    double first = 0.0, last = 0.0;
    for (std::size_t k = 0; k < q; ++k) first += ph.g2.mean[k];
    for (std::size_t k = len - q; k < len; ++k) last += ph.g2.mean[k];
    first /= q;
    last /= q;
    const double ratio = last / first;
    detail += fmt(" H=%.0f ratio %.2f;", static_cast<double>(ph.h_count), ratio);
    ok = ok && ratio >= 0.5;
  }
  return {ok, detail};
}

Result long_time_clustering(const SweepOutcome& ou, const SweepOutcome& osc) {
  const PerHeadReport* ou_big = nullptr;
  for (const auto& ph : ou.report.per_h)
    if (ph.h_count == 100) ou_big = &ph;
  const PerHeadReport* osc_big = nullptr;
  for (const auto& ph : osc.report.per_h)
    if (ph.h_count == 100) osc_big = &ph;
  if (ou_big == nullptr || osc_big == nullptr) return {false, "H=100 runs missing"};
  const double ou_ratio = ou_big->clustering_final_mean / ou_big->clustering_t0_mean;
  const double osc_ratio = osc_big->clustering_final_mean / osc_big->clustering_t0_mean;
  const bool ok = ou_ratio < 0.2 && osc_ratio > 0.5;
  return {ok, fmt("OU T/t0 ratio = %.3f (< 0.2), oscillating = %.2f (> 0.5)", ou_ratio,
                  osc_ratio)};
}

Result energy_balance_paper_scale(const SweepOutcome& ou) {
  const PerHeadReport* big = nullptr;
  for (const auto& ph : ou.report.per_h)
    if (ph.h_count == 100) big = &ph;
  if (big == nullptr) return {false, "H=100 run missing"};
  const int stride = std::max(1, static_cast<int>(0.1 / ou.dt));
  double worst = 0.0;
  bool ok = true;
  for (std::size_t k = 0; k < big->residual.mean.size(); k += stride) {
    const double mean = std::abs(big->residual.mean[k]);
    const double se = big->residual.se[k];
    if (mean > 2.0 * se + 1e-12) ok = false;
    if (se > 0.0) worst = std::max(worst, mean / se);
  }
  return {ok, fmt("max |residual mean| / SE = %.2f over recorded times (limit 2)", worst)};
}

Result gronwall_robustness(const std::string& path) {
  const ScenarioConfig cfg = parse_config(path);
  const GronwallReport report = gronwall_experiment(cfg);
  bool ok = true;
  std::string detail;
  for (const auto& er : report.per_eta) {
    ok = ok && er.envelope_holds;
    ok = ok && er.early_ratio_vs_half >= 1.6 && er.early_ratio_vs_half <= 2.4;
    detail += fmt("eta=%.0e: C2=%.2f ratio=%.2f; ", er.eta, er.c2, er.early_ratio_vs_half);
  }
  return {ok, detail + "(envelopes hold, halving-eta ratios in [1.6,2.4])"};
}

Result stability_decay(const std::string& path) {
  const ScenarioConfig cfg = parse_config(path);
  const StabilityReport report = stability_experiment(cfg);
  std::string detail;
  for (std::size_t i = 0; i < report.h_values.size(); ++i)
    detail += fmt("H=%.0f: %.4f; ", static_cast<double>(report.h_values[i]),
                  report.w2_mean[i]);
  return {report.strictly_decreasing, detail + fmt("vs reference H=%.0f, strictly decreasing",
                                                   static_cast<double>(report.reference_h))};
}

Result jko_self_convergence(const std::string& path) {
  const ScenarioConfig cfg = parse_config(path);
  StreamFamily fam{cfg.seed, 0};
  RngStream cr = fam.cloud_stream();
  const TokenCloud c0 = TokenCloud::random_uniform(cfg.n, cfg.d, cr);
  const WeightProcessSpec spec = cfg.weight_spec();
  const int h_count = cfg.h_list.front();
  auto init = fam.weight_init_streams(h_count);
  const HeadEnsemble ens0 = init_weights(spec, h_count, cfg.d, init);

  bool minimality = true;
  Vec sups;
  for (double tau : cfg.jko_tau_list) {
    const JkoConfig jcfg = cfg.jko_config(tau);
    const JkoTrajectory jt = jko_trajectory(c0, ens0, spec, jcfg, cfg.t_final);
    double sup = 0.0;
    for (std::size_t k = 0; k < jt.times.size(); ++k) {
      const TokenCloud ref =
          jko_matched_forward(c0, ens0, jcfg.mobility_mode, jt.times[k], cfg.jko_ref_dt);
      sup = std::max(sup, w2(jt.clouds[k], ref));
      if (k > 0) {
        const double e_k = interaction_energy(jt.clouds[k], jt.ensembles[k]);
        const double e_prev = interaction_energy(jt.clouds[k - 1], jt.ensembles[k]);
        if (e_k + w2_squared(jt.clouds[k], jt.clouds[k - 1]) / (2.0 * tau) > e_prev + 1e-10)
          minimality = false;
      }
    }
    sups.push_back(sup);
  }
  bool monotone = true;
  for (std::size_t i = 1; i < sups.size(); ++i) monotone = monotone && sups[i] < sups[i - 1];
  std::string detail = "sup W2:";
  for (double s : sups) detail += fmt(" %.4f", s);
  detail += minimality ? "; minimality holds" : "; minimality VIOLATED";
  return {monotone && minimality, detail};
}

}  // namespace

int main(int argc, char** argv) {
  std::string configs = "../configs";
  for (int i = 1; i < argc - 1; ++i)
    if (std::string(argv[i]) == "--configs") configs = argv[i + 1];

  std::printf("mfattn acceptance suite (threads: %d)\n", hardware_threads());
  Harness h;

  h.run("softmax_normalization", softmax_normalization);
  h.run("tangency_and_norms", tangency_and_norms);
  h.run("kernel_gradient_fd", kernel_gradient_fd);
  h.run("w2_oracle", w2_oracle);
  h.run("edi_residual_convergence", edi_residual_convergence);
  h.run("variance_decomposition", variance_decomposition_mc);

  SweepOutcome ou, osc;
  h.run("ou_sweep_fit", [&]() -> Result {
    ou = run_sweep(configs + "/ou_s2.cfg");
    return ou_fit(ou);
  });
  h.run("oscillating_sweep_fit", [&]() -> Result {
    osc = run_sweep(configs + "/oscillating_s2.cfg");
    return oscillating_fit(osc);
  });
  h.run("long_time_clustering", [&]() -> Result { return long_time_clustering(ou, osc); });
  h.run("energy_balance_paper_scale", [&]() -> Result { return energy_balance_paper_scale(ou); });
  h.run("gronwall_robustness",
        [&]() -> Result { return gronwall_robustness(configs + "/gronwall.cfg"); });
  h.run("stability_decay", [&]() -> Result { return stability_decay(configs + "/stability.cfg"); });
  h.run("jko_self_convergence",
        [&]() -> Result { return jko_self_convergence(configs + "/jko_frozen.cfg"); });

  std::printf("ACCEPTANCE: %d/%d criteria passed\n", h.passed, h.total);
  return h.passed == h.total ? 0 : 1;
}
