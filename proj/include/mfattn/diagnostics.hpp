#pragma once

#include <cmath>
#include <mutex>
#include <string>
#include <utility>
#include <vector>

#include "mfattn/assignment.hpp"
#include "mfattn/attention.hpp"
#include "mfattn/error.hpp"
#include "mfattn/linalg.hpp"
#include "mfattn/sphere.hpp"
#include "mfattn/weights.hpp"

namespace mfattn {

/// Interaction energy E = (1/(2 H n^2)) sum_{i,j,h} e^{<x_i, D^{(h)} x_j>}.
inline double interaction_energy(const TokenCloud& cloud, const HeadEnsemble& ens) {
  const int n = cloud.size();
  double s = 0.0;
  for (int h = 0; h < ens.head_count(); ++h) {
    for (int j = 0; j < n; ++j) {
      const Vec dx = ens.head(h).apply(cloud.point(j));
      for (int i = 0; i < n; ++i) s += std::exp(dot({dx.data(), dx.size()}, cloud.point(i)));
    }
  }
  return s / (2.0 * ens.head_count() * static_cast<double>(n) * n);
}

/// Squared strong upper gradient.
///   weighted = false: (1/n) sum_i ||v_i||^2 with v_i the head-averaged velocity.
///   weighted = true:  (1/n) sum_i b(x_i) ||v_i||^2 with b the effective mobility.
inline double strong_upper_gradient_sq(const TokenCloud& cloud, const HeadEnsemble& ens,
                                       bool weighted) {
  const int n = cloud.size();
  double s = 0.0;
  for (int i = 0; i < n; ++i) {
    const TangentVector v = multihead_velocity(cloud, ens, i);
    double w = 1.0;
    if (weighted) w = effective_mobility(cloud, ens, cloud.point_unit(i));
    s += w * dot({v.v.data(), v.v.size()}, {v.v.data(), v.v.size()});
  }
  return s / n;
}

/// Which quantity multiplies dt in the ledger's dissipation column.
///  - Pairing: the exact discrete transport rate (1/n) sum_i <(1/H) sum_h m_i^h V_i^h, v_i>;
///    this is the only choice whose residual vanishes at first order for
///    heterogeneous heads, and it reduces to the weighted G^2 when all heads
///    coincide.
///  - G2Unweighted / G2Weighted: the two gradient variants, kept for
///    comparison runs.
enum class DissipationMode { Pairing, G2Unweighted, G2Weighted };

inline const char* to_string(DissipationMode m) {
  switch (m) {
    case DissipationMode::Pairing: return "pairing";
    case DissipationMode::G2Unweighted: return "g2_unweighted";
    case DissipationMode::G2Weighted: return "g2_weighted";
  }
  return "?";
}

/// Per-step record of the discrete energy balance
///   E_k - E_0 = cum_drift + cum_ito - sign * cum_dissipation + cum_martingale,
/// tracked as residual_k = (E_k - E_0) - cum_drift_k - cum_ito_k
///                         + sign * cum_dissipation_k - cum_martingale_k.
/// sign = +1 is the descent convention; the calibrated default for the
/// simulated attention flow is -1 (the flow increases alignment energy).
struct EnergyLedger {
  DissipationMode mode = DissipationMode::Pairing;
  int sign = -1;

  Vec time;
  Vec energy;
  Vec drift_inc, ito_inc, dissipation_inc, martingale_inc;
  Vec residual;
  Vec g2_unweighted, g2_weighted;  // recorded alongside regardless of mode

  double cum_drift = 0.0, cum_ito = 0.0, cum_diss = 0.0, cum_mart = 0.0;

  std::size_t size() const noexcept { return time.size(); }

  double dissipation_value(const CloudField& f) const {
    switch (mode) {
      case DissipationMode::Pairing: return f.dissipation_pairing;
      case DissipationMode::G2Unweighted: return f.g2_unweighted;
      case DissipationMode::G2Weighted: return f.g2_weighted;
    }
    return 0.0;
  }

  /// Low-level append: the state row at t plus the increments accrued over
  /// [t, t + dt).
  void append_values(double t, double e, double g2u, double g2w, double d_inc, double i_inc,
                     double g_inc, double m_inc) {
    const double e0 = energy.empty() ? e : energy.front();
    time.push_back(t);
    energy.push_back(e);
    g2_unweighted.push_back(g2u);
    g2_weighted.push_back(g2w);
    residual.push_back((e - e0) - cum_drift - cum_ito + sign * cum_diss - cum_mart);
    drift_inc.push_back(d_inc);
    ito_inc.push_back(i_inc);
    dissipation_inc.push_back(g_inc);
    martingale_inc.push_back(m_inc);
    cum_drift += d_inc;
    cum_ito += i_inc;
    cum_diss += g_inc;
    cum_mart += m_inc;
  }

  /// Appends the pre-step state at t_k plus the increments accrued over
  /// [t_k, t_k + dt).  Pass dt = 0 for the terminal snapshot.
  void append(double t, const CloudField& f, double dt, double mart_increment) {
    append_values(t, f.energy, f.g2_unweighted, f.g2_weighted, dt * f.drift_pair,
                  f.ito_increment, dt * dissipation_value(f), mart_increment);
  }
};

/// Standalone ledger step: evaluates the four terms at the pre-step state
/// (x at t_k, D at t_k) and appends them.  increments_used must be the exact
/// symmetrized increments consumed by step_weights at this step (empty when
/// the diffusion is off).
inline EnergyLedger& energy_ledger_step(EnergyLedger& ledger, const TokenCloud& cloud,
                                        const HeadEnsemble& ens, const WeightProcessSpec& spec,
                                        double t, double dt,
                                        const std::vector<SymMatrix>& increments_used,
                                        int threads = 1) {
  const int h_count = ens.head_count();
  if (!increments_used.empty() && static_cast<int>(increments_used.size()) != h_count)
    throw Error("diagnostics", "energy_ledger_step",
                "increment count does not match head count");
  std::vector<SymMatrix> drifts;
  drifts.reserve(h_count);
  for (int h = 0; h < h_count; ++h) drifts.push_back(drift(spec, ens.head(h), t, h, h_count));
  FieldRequest req;
  req.drifts = &drifts;
  req.increments = increments_used.empty() ? nullptr : &increments_used;
  req.sigma2 = spec.sigma2;
  req.dt = dt;
  req.threads = threads;
  const CloudField f = evaluate_field(cloud, ens, req);
  ledger.append(t, f, dt, f.mart_pair);
  return ledger;
}

/// Resolves the dissipation sign convention by a short frozen-weight run:
/// the sign whose residual is smaller in magnitude is pinned.  Memoized.
inline int calibrate_dissipation_sign() {
  static std::once_flag flag;
  static int sign = -1;
  std::call_once(flag, [] {
    RngStream cloud_rng(12345, make_stream_id(StreamTag::CloudInit, 0));
    RngStream w_rng(12345, make_stream_id(StreamTag::WeightInit, 0, 0));
    TokenCloud cloud = TokenCloud::random_uniform(16, 3, cloud_rng);
    HeadEnsemble ens(std::vector<SymMatrix>{symmetric_gaussian(3, w_rng)});
    const double dt = 5e-3;
    const double e0 = interaction_energy(cloud, ens);
    double cum = 0.0;
    for (int k = 0; k < 200; ++k) {
      const CloudField f = evaluate_field(cloud, ens);
      cum += dt * f.dissipation_pairing;
      TokenCloud next = cloud;
      Vec z(cloud.dim());
      for (int i = 0; i < cloud.size(); ++i) {
        auto xi = cloud.point(i);
        auto vi = f.velocity(i);
        for (int k2 = 0; k2 < cloud.dim(); ++k2) z[k2] = xi[k2] + dt * vi[k2];
        next.set_point(i, radial_normalize({z.data(), z.size()}).span());
      }
      cloud = next;
    }
    const double de = interaction_energy(cloud, ens) - e0;
    sign = std::abs(de - cum) <= std::abs(de + cum) ? -1 : +1;
  });
  return sign;
}

/// Exact squared 2-Wasserstein distance between equal-size empirical measures
/// with ambient (chordal) ground cost:
///   min over permutations of (1/n) sum_i ||a_i - b_{pi(i)}||^2.
inline double w2_squared(const TokenCloud& a, const TokenCloud& b) {
  if (a.size() != b.size() || a.dim() != b.dim())
    throw DimensionMismatch("diagnostics", "w2_squared", "clouds must share n and d");
  const int n = a.size();
  const int d = a.dim();
  Vec cost(static_cast<std::size_t>(n) * n);
  for (int i = 0; i < n; ++i) {
    auto ai = a.point(i);
    for (int j = 0; j < n; ++j) {
      auto bj = b.point(j);
      double s = 0.0;
      for (int k = 0; k < d; ++k) {
        const double diff = ai[k] - bj[k];
        s += diff * diff;
      }
      cost[static_cast<std::size_t>(i) * n + j] = s;
    }
  }
  std::vector<int> perm;
  const double total = solve_assignment(cost, n, perm);
  return total / n;
}

inline double w2(const TokenCloud& a, const TokenCloud& b) {
  return std::sqrt(std::max(0.0, w2_squared(a, b)));
}

/// Sample variance and squared mean of the single-head tangential velocity
/// over n_samples i.i.d. head draws from the process law at time t, averaged
/// over tokens.  Returns (var_term, mean_term); the head-averaged squared
/// gradient satisfies E[G^2] = var_term / H + mean_term.
inline std::pair<double, double> variance_decomposition(const TokenCloud& cloud,
                                                        const WeightProcessSpec& spec,
                                                        const SymMatrix& d0_mean, double t,
                                                        int n_samples, RngStream& rng) {
  if (n_samples < 2)
    throw Error("diagnostics", "variance_decomposition", "n_samples must be at least 2");
  const int n = cloud.size();
  const int d = cloud.dim();
  Vec mean_v(static_cast<std::size_t>(n) * d, 0.0);
  Vec mean_sq(n, 0.0);
  for (int s = 0; s < n_samples; ++s) {
    HeadEnsemble one(std::vector<SymMatrix>{sample_head_law(spec, d0_mean, t, rng)});
    FieldRequest req;
    req.want_scalars = false;
    const CloudField f = evaluate_field(cloud, one, req);
    for (int i = 0; i < n; ++i) {
      auto vi = f.velocity(i);
      double* mi = mean_v.data() + static_cast<std::size_t>(i) * d;
      double sq = 0.0;
      for (int k = 0; k < d; ++k) {
        mi[k] += vi[k];
        sq += vi[k] * vi[k];
      }
      mean_sq[i] += sq;
    }
  }
  double var_term = 0.0, mean_term = 0.0;
  for (int i = 0; i < n; ++i) {
    double m2 = 0.0;
    const double* mi = mean_v.data() + static_cast<std::size_t>(i) * d;
    for (int k = 0; k < d; ++k) {
      const double m = mi[k] / n_samples;
      m2 += m * m;
    }
    const double esq = mean_sq[i] / n_samples;
    var_term += esq - m2;
    mean_term += m2;
  }
  return {var_term / n, mean_term / n};
}

/// Per-step gradient statistics of a trajectory.
struct GradientStats {
  Vec g2_series;  // on the step grid, same indexing as the ledger
  double time_mean = 0.0;
  Vec velocity_norms;  // per-token ||v_i|| at the final state
};

}  // namespace mfattn
