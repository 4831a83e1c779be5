#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "mfattn/config.hpp"
#include "mfattn/diagnostics.hpp"
#include "mfattn/dynamics.hpp"
#include "mfattn/error.hpp"
#include "mfattn/fit.hpp"
#include "mfattn/threading.hpp"
#include "mfattn/weights.hpp"

namespace mfattn {

/// Mean angular nearest-neighbor distance in radians; lower = more clustered.
inline double clustering_metric(const TokenCloud& cloud) {
  const int n = cloud.size();
  if (n < 2) throw Error("experiments", "clustering_metric", "need at least two tokens");
  double acc = 0.0;
  for (int i = 0; i < n; ++i) {
    double best = -1.0;  // max inner product = min angle
    auto xi = cloud.point(i);
    for (int j = 0; j < n; ++j) {
      if (j == i) continue;
      const double c = dot(xi, cloud.point(j));
      best = std::max(best, c);
    }
    acc += std::acos(std::clamp(best, -1.0, 1.0));
  }
  return acc / n;
}

/// Mean and standard error over MC samples at each grid point.
struct SeriesStats {
  Vec mean;
  Vec se;
};

inline SeriesStats aggregate_series(const std::vector<Vec>& samples) {
  SeriesStats out;
  if (samples.empty()) return out;
  const std::size_t len = samples.front().size();
  const double n = static_cast<double>(samples.size());
  out.mean.assign(len, 0.0);
  out.se.assign(len, 0.0);
  for (const Vec& s : samples)
    for (std::size_t k = 0; k < len; ++k) out.mean[k] += s[k];
  for (double& m : out.mean) m /= n;
  if (samples.size() > 1) {
    for (const Vec& s : samples)
      for (std::size_t k = 0; k < len; ++k) {
        const double d = s[k] - out.mean[k];
        out.se[k] += d * d;
      }
    for (double& v : out.se) v = std::sqrt(v / (n - 1.0) / n);
  }
  return out;
}

/// Builds the seeded initial state and runs one trajectory of the configured
/// scenario with H heads.  Trajectory index selects the independent streams.
inline Trajectory run_scenario_trajectory(const ScenarioConfig& cfg, int h_count,
                                          std::uint64_t traj_index, int threads,
                                          bool with_ledger = true) {
  StreamFamily fam{cfg.seed, traj_index};
  RngStream cloud_rng = fam.cloud_stream();
  TokenCloud cloud0 = TokenCloud::random_uniform(cfg.n, cfg.d, cloud_rng);
  const WeightProcessSpec spec = cfg.weight_spec();
  auto init_rngs = fam.weight_init_streams(h_count);
  HeadEnsemble ens0 = init_weights(spec, h_count, cfg.d, init_rngs);
  auto noise_rngs = fam.weight_noise_streams(h_count);
  SimOptions opt;
  opt.record_stride = cfg.resolved_record_stride();
  opt.order = cfg.parsed_update_order();
  opt.with_ledger = with_ledger;
  opt.dissipation_mode = cfg.parsed_dissipation_mode();
  opt.dissipation_sign = cfg.parsed_dissipation_sign();
  opt.threads = threads;
  return simulate(cloud0, ens0, spec, cfg.dt, cfg.t_final,
                  {noise_rngs.data(), noise_rngs.size()}, opt);
}

struct PerHeadReport {
  int h_count = 0;
  Vec time;  // full step grid
  SeriesStats g2, g2_other, energy, residual, martingale_cum;
  Vec g2_timeavg_samples;
  double g2_timeavg_mean = 0.0, g2_timeavg_se = 0.0;
  Vec clustering_t0_samples, clustering_final_samples;
  double clustering_t0_mean = 0.0, clustering_final_mean = 0.0;
};

struct ScenarioReport {
  std::string config_echo;
  int n_mc = 0;
  int dissipation_sign = 0;
  std::string dissipation_mode;
  bool g2_weighted = false;
  std::vector<PerHeadReport> per_h;
  FitResult fit;
  bool fit_valid = false;
};

/// Runs N_MC seeded trajectories per head count and aggregates the
/// diagnostics.  Trajectories execute on a worker pool keyed by (H, mc);
/// results land in indexed slots, so the report is invariant to execution
/// order and thread count.
inline ScenarioReport mc_sweep(const ScenarioConfig& cfg) {
  if (cfg.n_mc < 2) throw Error("experiments", "mc_sweep", "N_MC must be at least 2");
  const int threads = cfg.threads > 0 ? cfg.threads : hardware_threads();
  const int n_h = static_cast<int>(cfg.h_list.size());
  const int jobs = n_h * cfg.n_mc;
  const int inner = std::max(1, threads / std::min(jobs, threads));

  struct Slot {
    Vec g2, g2w, energy, residual, mart_cum;
    double g2_timeavg = 0.0;
    double clus_t0 = 0.0, clus_final = 0.0;
  };
  std::vector<Slot> slots(static_cast<std::size_t>(jobs));

  const double avg_t0 = cfg.g2_avg_t0 < 0.0 ? 0.0 : cfg.g2_avg_t0;
  const double avg_t1 = cfg.g2_avg_t1 < 0.0 ? cfg.t_final : cfg.g2_avg_t1;

  parallel_jobs(jobs, threads, [&](int job) {
    const int h_idx = job / cfg.n_mc;
    const int mc = job % cfg.n_mc;
    const int h_count = cfg.h_list[static_cast<std::size_t>(h_idx)];
    Trajectory traj = run_scenario_trajectory(cfg, h_count, static_cast<std::uint64_t>(mc),
                                              inner);
    Slot& s = slots[static_cast<std::size_t>(job)];
    s.g2 = cfg.g2_weighted ? traj.ledger.g2_weighted : traj.ledger.g2_unweighted;
    s.g2w = cfg.g2_weighted ? traj.ledger.g2_unweighted : traj.ledger.g2_weighted;
    s.energy = traj.ledger.energy;
    s.residual = traj.ledger.residual;
    s.mart_cum.assign(traj.ledger.size(), 0.0);
    double macc = 0.0;
    for (std::size_t k = 0; k < traj.ledger.size(); ++k) {
      s.mart_cum[k] = macc;
      macc += traj.ledger.martingale_inc[k];
    }
    double num = 0.0, den = 0.0;
    for (std::size_t k = 0; k + 1 < traj.ledger.size(); ++k) {
      const double t = traj.ledger.time[k];
      if (t >= avg_t0 && t < avg_t1) {
        num += s.g2[k] * cfg.dt;
        den += cfg.dt;
      }
    }
    s.g2_timeavg = den > 0.0 ? num / den : 0.0;
    s.clus_t0 = clustering_metric(traj.clouds.front());
    s.clus_final = clustering_metric(traj.final_cloud());
  });

  ScenarioReport report;
  report.config_echo = cfg.echo();
  report.n_mc = cfg.n_mc;
  report.dissipation_mode = cfg.ledger_dissipation;
  report.dissipation_sign =
      cfg.parsed_dissipation_sign() != 0 ? cfg.parsed_dissipation_sign()
                                         : calibrate_dissipation_sign();
  report.g2_weighted = cfg.g2_weighted;

  Vec h_values, g2_means;
  for (int h_idx = 0; h_idx < n_h; ++h_idx) {
    PerHeadReport ph;
    ph.h_count = cfg.h_list[static_cast<std::size_t>(h_idx)];
    std::vector<Vec> g2s, g2o, es, rs, ms;
    for (int mc = 0; mc < cfg.n_mc; ++mc) {
      const Slot& s = slots[static_cast<std::size_t>(h_idx * cfg.n_mc + mc)];
      g2s.push_back(s.g2);
      g2o.push_back(s.g2w);
      es.push_back(s.energy);
      rs.push_back(s.residual);
      ms.push_back(s.mart_cum);
      ph.g2_timeavg_samples.push_back(s.g2_timeavg);
      ph.clustering_t0_samples.push_back(s.clus_t0);
      ph.clustering_final_samples.push_back(s.clus_final);
    }
    ph.g2 = aggregate_series(g2s);
    ph.g2_other = aggregate_series(g2o);
    ph.energy = aggregate_series(es);
    ph.residual = aggregate_series(rs);
    ph.martingale_cum = aggregate_series(ms);
    const int steps = static_cast<int>(ph.g2.mean.size()) - 1;
    ph.time.resize(ph.g2.mean.size());
    for (std::size_t k = 0; k < ph.time.size(); ++k)
      ph.time[k] = (k == ph.time.size() - 1) ? steps * cfg.dt : static_cast<double>(k) * cfg.dt;
    ph.g2_timeavg_mean = mean_of(ph.g2_timeavg_samples);
    ph.g2_timeavg_se = se_of(ph.g2_timeavg_samples);
    ph.clustering_t0_mean = mean_of(ph.clustering_t0_samples);
    ph.clustering_final_mean = mean_of(ph.clustering_final_samples);
    h_values.push_back(static_cast<double>(ph.h_count));
    g2_means.push_back(ph.g2_timeavg_mean);
    report.per_h.push_back(std::move(ph));
  }

  if (h_values.size() >= 3) {
    bool positive = true;
    for (double m : g2_means) positive = positive && m > 0.0;
    if (positive) {
      report.fit = fit_power_law(h_values, g2_means);
      report.fit_valid = true;
    }
  }
  return report;
}

/// Tangentially perturbs every token by exactly eta (then reprojects), so the
/// pointwise displacement and hence W2 is ~eta for small eta.
inline TokenCloud perturb_cloud(const TokenCloud& cloud, double eta, RngStream& rng) {
  TokenCloud out = cloud;
  if (eta == 0.0) return out;
  const int d = cloud.dim();
  Vec g(d), z(d);
  for (int i = 0; i < cloud.size(); ++i) {
    const UnitVector xi = cloud.point_unit(i);
    double tn = 0.0;
    while (tn < 1e-12) {
      for (int k = 0; k < d; ++k) g[k] = rng.gaussian();
      const TangentVector tg = project_tangent(xi, {g.data(), g.size()});
      tn = tg.norm();
      if (tn >= 1e-12)
        for (int k = 0; k < d; ++k) z[k] = xi.c[k] + eta * tg.v[k] / tn;
    }
    out.set_point(i, radial_normalize({z.data(), z.size()}).span());
  }
  return out;
}

struct GronwallEtaReport {
  double eta = 0.0;
  Vec time;          // W2 evaluation grid
  Vec w2_mean;       // MC mean of W2(u^eta_t, u_t)
  Vec m_theta_mean;  // MC mean of M_theta(t) on the same grid
  double c1 = 1.0;
  double c2 = 0.0;            // max over seeds of the per-trajectory smallest C2
  bool envelope_holds = true; // fitted envelope dominates every grid point
  double early_ratio_vs_half = 0.0;  // mean of W2_eta / W2_{eta/2} for t <= 5
};

struct GronwallReport {
  std::string config_echo;
  std::vector<GronwallEtaReport> per_eta;
};

/// Robustness experiment: pairs of trajectories share the weight path (same
/// streams) and differ only in a W2-perturbation of the initial cloud.
inline GronwallReport gronwall_experiment(const ScenarioConfig& cfg) {
  const int threads = cfg.threads > 0 ? cfg.threads : hardware_threads();
  const WeightProcessSpec spec = cfg.weight_spec();
  const int h_count = cfg.h_list.front();
  const int stride = cfg.gronwall_w2_stride;
  const int n_seeds = cfg.n_mc;
  const double early_cut = std::min(5.0, cfg.t_final);

  struct Job {
    double eta;
    Vec w2, w2_half, m_theta, time;
    double c2 = 0.0;
    bool holds = true;
  };
  const int n_eta = static_cast<int>(cfg.gronwall_eta_list.size());
  std::vector<Job> jobs(static_cast<std::size_t>(n_eta * n_seeds));

  parallel_jobs(n_eta * n_seeds, threads, [&](int jid) {
    const int eta_idx = jid / n_seeds;
    const int seed_idx = jid % n_seeds;
    const double eta = cfg.gronwall_eta_list[static_cast<std::size_t>(eta_idx)];
    const int inner = std::max(1, threads / std::min(n_eta * n_seeds, threads));

    StreamFamily fam{cfg.seed, static_cast<std::uint64_t>(seed_idx)};
    RngStream cloud_rng = fam.cloud_stream();
    TokenCloud cloud0 = TokenCloud::random_uniform(cfg.n, cfg.d, cloud_rng);
    auto init_rngs = fam.weight_init_streams(h_count);
    HeadEnsemble ens0 = init_weights(spec, h_count, cfg.d, init_rngs);

    SimOptions opt;
    opt.record_stride = stride;
    opt.order = cfg.parsed_update_order();
    opt.with_ledger = false;
    opt.threads = inner;

    auto run = [&](const TokenCloud& c0) {
      auto noise = fam.weight_noise_streams(h_count);  // fresh copy: shared path
      return simulate(c0, ens0, spec, cfg.dt, cfg.t_final, {noise.data(), noise.size()}, opt);
    };

    RngStream p_rng = fam.perturbation_stream(static_cast<std::uint64_t>(eta_idx));
    RngStream p_rng_half = fam.perturbation_stream(1000 + static_cast<std::uint64_t>(eta_idx));
    const Trajectory base = run(cloud0);
    const Trajectory pert = run(perturb_cloud(cloud0, eta, p_rng));
    const Trajectory half = run(perturb_cloud(cloud0, 0.5 * eta, p_rng_half));

    Job& job = jobs[static_cast<std::size_t>(jid)];
    job.eta = eta;
    const std::size_t snaps = base.snap_times.size();
    job.time.resize(snaps);
    job.w2.resize(snaps);
    job.w2_half.resize(snaps);
    job.m_theta.resize(snaps);
    for (std::size_t s = 0; s < snaps; ++s) {
      job.time[s] = base.snap_times[s];
      job.w2[s] = w2(base.clouds[s], pert.clouds[s]);
      job.w2_half[s] = w2(base.clouds[s], half.clouds[s]);
      const std::size_t k = std::min(
          base.m_theta.size() - 1,
          static_cast<std::size_t>(std::llround(base.snap_times[s] / cfg.dt)));
      job.m_theta[s] = base.m_theta[k];
    }
    // Smallest C2 with W2(t) <= W2(0) * exp(C2 * M_theta(t)) on the grid.
    const double w0 = job.w2.front();
    for (std::size_t s = 1; s < snaps; ++s) {
      if (job.m_theta[s] <= 0.0 || w0 <= 0.0 || job.w2[s] <= 0.0) continue;
      job.c2 = std::max(job.c2, std::log(job.w2[s] / w0) / job.m_theta[s]);
    }
    for (std::size_t s = 0; s < snaps; ++s) {
      const double envelope = w0 * std::exp(job.c2 * job.m_theta[s]);
      if (job.w2[s] > envelope * (1.0 + 1e-12) + 1e-15) job.holds = false;
    }
  });

  GronwallReport report;
  report.config_echo = cfg.echo();
  for (int e = 0; e < n_eta; ++e) {
    GronwallEtaReport er;
    er.eta = cfg.gronwall_eta_list[static_cast<std::size_t>(e)];
    std::vector<Vec> w2s, mts;
    double ratio_acc = 0.0;
    int ratio_cnt = 0;
    for (int s = 0; s < n_seeds; ++s) {
      const Job& job = jobs[static_cast<std::size_t>(e * n_seeds + s)];
      w2s.push_back(job.w2);
      mts.push_back(job.m_theta);
      er.time = job.time;
      er.c2 = std::max(er.c2, job.c2);
      er.envelope_holds = er.envelope_holds && job.holds;
      for (std::size_t k = 1; k < job.time.size(); ++k) {
        if (job.time[k] <= early_cut && job.w2_half[k] > 0.0) {
          ratio_acc += job.w2[k] / job.w2_half[k];
          ++ratio_cnt;
        }
      }
    }
    er.w2_mean = aggregate_series(w2s).mean;
    er.m_theta_mean = aggregate_series(mts).mean;
    er.early_ratio_vs_half = ratio_cnt > 0 ? ratio_acc / ratio_cnt : 0.0;
    report.per_eta.push_back(std::move(er));
  }
  return report;
}

struct StabilityReport {
  std::string config_echo;
  int reference_h = 0;
  std::vector<int> h_values;
  Vec w2_mean, w2_se;
  bool strictly_decreasing = true;
};

/// Weight-perturbation stability: token flows driven by the first H heads of
/// a common per-seed pool versus the reference_H-head flow, with shared token
/// initialization and shared per-head noise paths.
inline StabilityReport stability_experiment(const ScenarioConfig& cfg) {
  const int threads = cfg.threads > 0 ? cfg.threads : hardware_threads();
  const WeightProcessSpec spec = cfg.weight_spec();
  const int ref_h = cfg.stability_reference_h;
  const int n_seeds = cfg.n_mc;
  const int n_h = static_cast<int>(cfg.stability_h_list.size());

  // One job per (seed, H) plus one reference run per seed.
  std::vector<TokenCloud> ref_final(static_cast<std::size_t>(n_seeds));
  std::vector<Vec> dist(static_cast<std::size_t>(n_seeds), Vec(n_h, 0.0));

  SimOptions opt;
  opt.order = cfg.parsed_update_order();
  opt.with_ledger = false;
  opt.record_stride = 1 << 30;  // endpoints only

  auto run_with_heads = [&](int seed_idx, int h_count, int inner) {
    StreamFamily fam{cfg.seed, static_cast<std::uint64_t>(seed_idx)};
    RngStream cloud_rng = fam.cloud_stream();
    TokenCloud cloud0 = TokenCloud::random_uniform(cfg.n, cfg.d, cloud_rng);
    auto init_rngs = fam.weight_init_streams(h_count);
    HeadEnsemble ens0 = init_weights(spec, h_count, cfg.d, init_rngs);
    auto noise = fam.weight_noise_streams(h_count);
    SimOptions o = opt;
    o.threads = inner;
    return simulate(cloud0, ens0, spec, cfg.dt, cfg.t_final, {noise.data(), noise.size()}, o);
  };

  parallel_jobs(n_seeds, threads, [&](int seed_idx) {
    const int inner = std::max(1, threads / std::min(n_seeds, threads));
    ref_final[static_cast<std::size_t>(seed_idx)] =
        run_with_heads(seed_idx, ref_h, inner).final_cloud();
    for (int hi = 0; hi < n_h; ++hi) {
      const int h_count = cfg.stability_h_list[static_cast<std::size_t>(hi)];
      const Trajectory traj = run_with_heads(seed_idx, h_count, inner);
      dist[static_cast<std::size_t>(seed_idx)][static_cast<std::size_t>(hi)] =
          w2(traj.final_cloud(), ref_final[static_cast<std::size_t>(seed_idx)]);
    }
  });

  StabilityReport report;
  report.config_echo = cfg.echo();
  report.reference_h = ref_h;
  report.h_values = cfg.stability_h_list;
  for (int hi = 0; hi < n_h; ++hi) {
    Vec samples(static_cast<std::size_t>(n_seeds));
    for (int s = 0; s < n_seeds; ++s)
      samples[static_cast<std::size_t>(s)] = dist[static_cast<std::size_t>(s)][hi];
    report.w2_mean.push_back(mean_of(samples));
    report.w2_se.push_back(se_of(samples));
  }
  for (int hi = 1; hi < n_h; ++hi)
    if (report.w2_mean[static_cast<std::size_t>(hi)] >=
        report.w2_mean[static_cast<std::size_t>(hi - 1)])
      report.strictly_decreasing = false;
  return report;
}

}  // namespace mfattn
