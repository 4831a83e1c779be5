#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "mfattn/attention.hpp"
#include "mfattn/diagnostics.hpp"
#include "mfattn/error.hpp"
#include "mfattn/rng.hpp"
#include "mfattn/sphere.hpp"
#include "mfattn/weights.hpp"

namespace mfattn {

enum class UpdateOrder { WeightsFirst, TokensFirst };

struct SimOptions {
  int record_stride = 0;  // 0 -> max(1, floor(0.1/dt))
  UpdateOrder order = UpdateOrder::WeightsFirst;
  bool with_ledger = true;
  DissipationMode dissipation_mode = DissipationMode::Pairing;
  int dissipation_sign = 0;  // 0 -> calibrated
  int threads = 1;
};

/// One trajectory of the coupled token/weight system on a uniform grid,
/// with per-step diagnostics and strided state snapshots.
struct Trajectory {
  Vec snap_times;
  std::vector<TokenCloud> clouds;
  std::vector<HeadEnsemble> ensembles;

  Vec step_times;      // full grid t_0..t_K
  Vec m_theta;         // running weight-mass integral on the full grid
  EnergyLedger ledger; // populated when the ledger is enabled
  GradientStats gstats;

  const TokenCloud& final_cloud() const { return clouds.back(); }
  const HeadEnsemble& final_ensemble() const { return ensembles.back(); }
};

/// Synchronous projected-Euler token update:
///   x_i <- Pi( x_i + dt * v_i ),  v_i the head-averaged attention velocity
/// evaluated on the pre-step cloud.
inline TokenCloud step_tokens(const TokenCloud& cloud, const HeadEnsemble& ens, double dt,
                              int threads = 1) {
  if (dt <= 0.0) throw Error("token_dynamics", "step_tokens", "dt must be positive");
  FieldRequest req;
  req.want_scalars = false;
  req.threads = threads;
  const CloudField f = evaluate_field(cloud, ens, req);
  TokenCloud next = cloud;
  Vec z(cloud.dim());
  for (int i = 0; i < cloud.size(); ++i) {
    auto xi = cloud.point(i);
    auto vi = f.velocity(i);
    for (int k = 0; k < cloud.dim(); ++k) z[k] = xi[k] + dt * vi[k];
    next.set_point(i, radial_normalize({z.data(), z.size()}).span());
  }
  return next;
}

namespace detail {

inline void apply_token_step(TokenCloud& cloud, const CloudField& f, double dt) {
  Vec z(cloud.dim());
  for (int i = 0; i < cloud.size(); ++i) {
    auto xi = cloud.point(i);
    auto vi = f.velocity(i);
    for (int k = 0; k < cloud.dim(); ++k) z[k] = xi[k] + dt * vi[k];
    cloud.set_point(i, radial_normalize({z.data(), z.size()}).span());
  }
}

}  // namespace detail

/// Integrates the coupled system to time T.  Each grid step advances the
/// weights by Euler-Maruyama and the tokens by projected Euler; the default
/// order is weights first, tokens with the updated weights.  Records every
/// record_stride-th state plus the final one.  Deterministic given the
/// stream family.
inline Trajectory simulate(const TokenCloud& cloud0, const HeadEnsemble& ens0,
                           const WeightProcessSpec& spec, double dt, double T,
                           std::span<RngStream> head_rngs, const SimOptions& opt = {}) {
  if (T <= 0.0 || dt <= 0.0 || dt > T + 1e-15)
    throw Error("token_dynamics", "simulate", "need 0 < dt <= T");
  const int steps = static_cast<int>(std::llround(T / dt));
  const int stride =
      opt.record_stride > 0 ? opt.record_stride : std::max(1, static_cast<int>(0.1 / dt));

  Trajectory traj;
  traj.ledger.mode = opt.dissipation_mode;
  traj.ledger.sign =
      opt.dissipation_sign != 0 ? opt.dissipation_sign : calibrate_dissipation_sign();

  TokenCloud cloud = cloud0;
  HeadEnsemble ens = ens0;
  const int h_count = ens.head_count();

  std::vector<SymMatrix> drifts(static_cast<std::size_t>(h_count));
  traj.step_times.reserve(steps + 1);
  traj.m_theta.reserve(steps + 1);
  traj.m_theta.push_back(0.0);

  auto record = [&](double t) {
    traj.snap_times.push_back(t);
    traj.clouds.push_back(cloud);
    traj.ensembles.push_back(ens);
  };
  record(0.0);

  for (int k = 0; k < steps; ++k) {
    const double t = k * dt;
    traj.step_times.push_back(t);
    traj.m_theta.push_back(traj.m_theta.back() + ens.mean_frobenius_sq() * dt);

    if (opt.order == UpdateOrder::WeightsFirst) {
      // Pre-draw the increments so the ledger sees exactly what the weight
      // step consumes.
      std::vector<SymMatrix> incs;
      const bool noisy = spec.sigma2 > 0.0 && spec.kind != WeightKind::Frozen;
      if (noisy) {
        incs.reserve(h_count);
        for (int h = 0; h < h_count; ++h)
          incs.push_back(symmetrized_increment(head_rngs[h], ens.dim(), dt));
      }
      if (opt.with_ledger) {
        for (int h = 0; h < h_count; ++h)
          drifts[static_cast<std::size_t>(h)] = drift(spec, ens.head(h), t, h, h_count);
        FieldRequest req;
        req.drifts = &drifts;
        req.increments = incs.empty() ? nullptr : &incs;
        req.sigma2 = spec.sigma2;
        req.dt = dt;
        req.threads = opt.threads;
        const CloudField f = evaluate_field(cloud, ens, req);
        traj.ledger.append(t, f, dt, f.mart_pair);
      }
      // Weight update with the pre-drawn increments.
      const double g = std::sqrt(2.0 * spec.sigma2);
      for (int h = 0; h < h_count; ++h) {
        SymMatrix f_dt = drift(spec, ens.head(h), t, h, h_count);
        f_dt *= dt;
        ens.head(h) += f_dt;
        if (noisy) ens.head(h) += g * incs[static_cast<std::size_t>(h)];
      }
      // Token update with the updated weights.
      FieldRequest vreq;
      vreq.want_scalars = false;
      vreq.threads = opt.threads;
      const CloudField vf = evaluate_field(cloud, ens, vreq);
      detail::apply_token_step(cloud, vf, dt);
    } else {
      // Tokens first.  The ledger follows the substep structure exactly:
      // the dissipation column is the trapezoid of the transport pairing
      // over the realized token move (both ends under the moving weights
      // D_k), and the weight-step terms are evaluated at the pre-weight-
      // substep state (x_{k+1}, D_k).  This keeps the stochastic balance
      // centered at zero even when many heads make the MC error tiny.
      std::vector<SymMatrix> incs;
      const bool noisy = spec.sigma2 > 0.0 && spec.kind != WeightKind::Frozen;
      if (noisy) {
        incs.reserve(h_count);
        for (int h = 0; h < h_count; ++h)
          incs.push_back(symmetrized_increment(head_rngs[h], ens.dim(), dt));
      }
      FieldRequest pre;
      pre.threads = opt.threads;
      pre.want_scalars = opt.with_ledger;
      const CloudField f_pre = evaluate_field(cloud, ens, pre);
      detail::apply_token_step(cloud, f_pre, dt);
      if (opt.with_ledger) {
        for (int h = 0; h < h_count; ++h)
          drifts[static_cast<std::size_t>(h)] = drift(spec, ens.head(h), t, h, h_count);
        FieldRequest post;
        post.threads = opt.threads;
        post.drifts = &drifts;
        post.increments = incs.empty() ? nullptr : &incs;
        post.sigma2 = spec.sigma2;
        post.dt = dt;
        const CloudField f_post = evaluate_field(cloud, ens, post);
        const double diss_inc =
            0.5 * dt *
            (traj.ledger.dissipation_value(f_pre) + traj.ledger.dissipation_value(f_post));
        traj.ledger.append_values(t, f_pre.energy, f_pre.g2_unweighted, f_pre.g2_weighted,
                                  dt * f_post.drift_pair, f_post.ito_increment, diss_inc,
                                  f_post.mart_pair);
      }
      const double g = std::sqrt(2.0 * spec.sigma2);
      for (int h = 0; h < h_count; ++h) {
        SymMatrix f_dt = drift(spec, ens.head(h), t, h, h_count);
        f_dt *= dt;
        ens.head(h) += f_dt;
        if (noisy) ens.head(h) += g * incs[static_cast<std::size_t>(h)];
      }
    }

    if ((k + 1) % stride == 0 && k + 1 < steps) record((k + 1) * dt);
  }

  traj.step_times.push_back(steps * dt);
  record(steps * dt);

  if (opt.with_ledger) {
    // Terminal ledger row: state at T, no further increments.
    FieldRequest req;
    req.threads = opt.threads;
    const CloudField f = evaluate_field(cloud, ens, req);
    traj.ledger.append(steps * dt, f, 0.0, 0.0);
    traj.gstats.g2_series = traj.ledger.g2_unweighted;
    double acc = 0.0;
    for (std::size_t k = 0; k + 1 < traj.ledger.size(); ++k)
      acc += traj.ledger.g2_unweighted[k] * dt;
    traj.gstats.time_mean = acc / (steps * dt);
    traj.gstats.velocity_norms.assign(cloud.size(), 0.0);
    for (int i = 0; i < cloud.size(); ++i) {
      auto vi = f.velocity(i);
      traj.gstats.velocity_norms[static_cast<std::size_t>(i)] = norm(vi);
    }
  }
  return traj;
}

/// Convenience wrapper building the streams and the initial state from a
/// root seed and trajectory index, per the documented stream derivation.
struct StreamFamily {
  std::uint64_t seed;
  std::uint64_t trajectory;

  RngStream cloud_stream() const {
    return {seed, make_stream_id(StreamTag::CloudInit, trajectory)};
  }
  RngStream perturbation_stream(std::uint64_t k) const {
    return {seed, make_stream_id(StreamTag::Perturbation, trajectory, k)};
  }
  std::vector<RngStream> weight_init_streams(int h_count) const {
    std::vector<RngStream> v;
    v.reserve(h_count);
    for (int h = 0; h < h_count; ++h)
      v.emplace_back(seed, make_stream_id(StreamTag::WeightInit, trajectory, h));
    return v;
  }
  std::vector<RngStream> weight_noise_streams(int h_count) const {
    std::vector<RngStream> v;
    v.reserve(h_count);
    for (int h = 0; h < h_count; ++h)
      v.emplace_back(seed, make_stream_id(StreamTag::WeightNoise, trajectory, h));
    return v;
  }
};

}  // namespace mfattn
