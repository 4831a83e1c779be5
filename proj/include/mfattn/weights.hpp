#pragma once

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "mfattn/attention.hpp"
#include "mfattn/error.hpp"
#include "mfattn/linalg.hpp"
#include "mfattn/rng.hpp"

namespace mfattn {

enum class WeightKind { Frozen, OU, Oscillating, CustomSchedule };

enum class WeightInit { Zero, Gaussian, Target };

/// Time-sampled symmetric target with linear interpolation between samples,
/// clamped at the ends.
struct TargetSchedule {
  Vec times;
  std::vector<SymMatrix> values;

  bool empty() const noexcept { return times.empty(); }

  SymMatrix at(double t) const {
    if (times.empty())
      throw Error("weight_process", "TargetSchedule", "empty schedule");
    if (t <= times.front()) return values.front();
    if (t >= times.back()) return values.back();
    std::size_t k = 1;
    while (times[k] < t) ++k;
    const double w = (t - times[k - 1]) / (times[k] - times[k - 1]);
    SymMatrix out = values[k - 1];
    out *= (1.0 - w);
    SymMatrix hi = values[k];
    hi *= w;
    out += hi;
    return out;
  }
};

/// Drift/diffusion specification for the weight SDE
///   dD = f(D,t) dt + sqrt(2 sigma^2) dW   (symmetrized increments).
struct WeightProcessSpec {
  WeightKind kind = WeightKind::Frozen;
  SymMatrix target;             // F for OU; ignored for Oscillating/Frozen
  double sigma2 = 0.0;          // diffusion strength sigma^2
  bool phase_spread = true;     // per-head phase 2*pi*(h-1)/H for Oscillating
  TargetSchedule schedule;      // for CustomSchedule
  WeightInit init = WeightInit::Gaussian;
  double init_scale = 1.0;

  static WeightProcessSpec frozen() { return {}; }

  static WeightProcessSpec ou(SymMatrix f, double sigma2) {
    WeightProcessSpec s;
    s.kind = WeightKind::OU;
    s.target = std::move(f);
    s.sigma2 = sigma2;
    return s;
  }

  static WeightProcessSpec oscillating(bool phase_spread = true) {
    WeightProcessSpec s;
    s.kind = WeightKind::Oscillating;
    s.phase_spread = phase_spread;
    s.sigma2 = 0.0;
    return s;
  }
};

/// Oscillating symmetric 3x3 target with per-head phase 2*pi*(h-1)/H.
inline SymMatrix oscillating_target(double t, int h, int h_count, bool phase_spread) {
  const double phi = phase_spread ? 2.0 * M_PI * static_cast<double>(h) / h_count : 0.0;
  SymMatrix f(3);
  f(0, 0) = 2.0 + 1.5 * std::cos(t + phi);
  f(1, 1) = 2.0 + 1.5 * std::sin(t + phi);
  f(2, 2) = 2.0 + 1.5 * std::cos(t + M_PI / 4.0 + phi);
  f.set_sym(0, 1, std::sin(2.0 * t + phi));
  f.set_sym(0, 2, std::sin(t + phi));
  f.set_sym(1, 2, std::cos(2.0 * t + phi));
  return f;
}

/// Drift f(D, t) for head h of H.  Head indices are 0-based.
inline SymMatrix drift(const WeightProcessSpec& spec, const SymMatrix& d_mat, double t, int h,
                       int h_count) {
  switch (spec.kind) {
    case WeightKind::Frozen:
      return SymMatrix::zero(d_mat.dim());
    case WeightKind::OU:
      return spec.target - d_mat;
    case WeightKind::Oscillating:
      if (d_mat.dim() != 3)
        throw Error("weight_process", "drift",
                    "oscillating targets are defined for d = 3 only");
      return oscillating_target(t, h, h_count, spec.phase_spread) - d_mat;
    case WeightKind::CustomSchedule:
      return spec.schedule.at(t) - d_mat;
  }
  throw Error("weight_process", "drift", "unknown weight process kind");
}

/// Symmetrized Gaussian increment W = (Z + Z^T)/2 with Z ~ N(0, dt * Id).
/// Diagonal entries have variance dt, off-diagonal dt/2.
inline SymMatrix symmetrized_increment(RngStream& rng, int d, double dt) {
  if (dt <= 0.0) throw Error("weight_process", "symmetrized_increment", "dt must be positive");
  SymMatrix w = symmetric_gaussian(d, rng);
  w *= std::sqrt(dt);
  return w;
}

/// Euler-Maruyama update of every head:
///   D <- D + f(D,t) dt + sqrt(2 sigma^2) W.
/// Uses one independent stream per head; returns the increments consumed
/// (empty when the diffusion is off) so the energy ledger can replay them.
inline std::vector<SymMatrix> step_weights(HeadEnsemble& ens, const WeightProcessSpec& spec,
                                           double t, double dt,
                                           std::span<RngStream> head_rngs) {
  if (dt <= 0.0) throw Error("weight_process", "step_weights", "dt must be positive");
  const int h_count = ens.head_count();
  const int d = ens.dim();
  std::vector<SymMatrix> increments;
  const bool noisy = spec.sigma2 > 0.0 && spec.kind != WeightKind::Frozen;
  if (noisy) {
    if (static_cast<int>(head_rngs.size()) < h_count)
      throw Error("weight_process", "step_weights", "one RNG stream per head is required");
    increments.reserve(h_count);
  }
  const double g = std::sqrt(2.0 * spec.sigma2);
  for (int h = 0; h < h_count; ++h) {
    SymMatrix f = drift(spec, ens.head(h), t, h, h_count);
    f *= dt;
    ens.head(h) += f;
    if (noisy) {
      SymMatrix w = symmetrized_increment(head_rngs[h], d, dt);
      ens.head(h) += g * w;
      increments.push_back(std::move(w));
    }
  }
  return increments;
}

/// Initial head ensemble for a weight process.
inline HeadEnsemble init_weights(const WeightProcessSpec& spec, int h_count, int d,
                                 std::span<RngStream> head_rngs) {
  std::vector<SymMatrix> heads;
  heads.reserve(h_count);
  for (int h = 0; h < h_count; ++h) {
    switch (spec.init) {
      case WeightInit::Zero:
        heads.push_back(SymMatrix::zero(d));
        break;
      case WeightInit::Gaussian: {
        SymMatrix z = symmetric_gaussian(d, head_rngs[h]);
        z *= spec.init_scale;
        heads.push_back(std::move(z));
        break;
      }
      case WeightInit::Target:
        heads.push_back(spec.kind == WeightKind::Oscillating
                            ? oscillating_target(0.0, h, h_count, spec.phase_spread)
                            : spec.target);
        break;
    }
  }
  return HeadEnsemble(std::move(heads));
}

/// Running Riemann sum of the squared-weight mass:
///   M_theta(t_k) = sum_{j<k} (1/H) sum_h ||D^{(h)}_{t_j}||_F^2 dt,  M(0) = 0.
inline Vec m_theta_integral(const std::vector<HeadEnsemble>& trajectory, double dt) {
  Vec out(trajectory.size(), 0.0);
  for (std::size_t k = 1; k < trajectory.size(); ++k)
    out[k] = out[k - 1] + trajectory[k - 1].mean_frobenius_sq() * dt;
  return out;
}

/// Single-head law of the process at time t, used by the variance
/// decomposition.  For OU started at mean D0: Gaussian with mean
/// F + e^{-t}(D0 - F) and entrywise stationary-style variance
/// sigma^2 (1 - e^{-2t}) on the diagonal (half off-diagonal).  Frozen and
/// deterministic kinds return their atom.
inline SymMatrix sample_head_law(const WeightProcessSpec& spec, const SymMatrix& d0_mean,
                                 double t, RngStream& rng) {
  switch (spec.kind) {
    case WeightKind::Frozen:
      return d0_mean;
    case WeightKind::OU: {
      SymMatrix mean = spec.target + std::exp(-t) * (d0_mean - spec.target);
      const double var = spec.sigma2 * (1.0 - std::exp(-2.0 * t));
      if (var > 0.0) {
        SymMatrix z = symmetric_gaussian(d0_mean.dim(), rng);
        z *= std::sqrt(var);
        mean += z;
      }
      return mean;
    }
    case WeightKind::Oscillating:
    case WeightKind::CustomSchedule: {
      // Deterministic flow D_t = e^{-t} D0 + int_0^t e^{-(t-s)} F(s) ds,
      // evaluated by Simpson quadrature.
      const int panels = 2000;
      const double hstep = t / panels;
      SymMatrix acc = SymMatrix::zero(d0_mean.dim());
      auto f_at = [&](double s) {
        return spec.kind == WeightKind::Oscillating
                   ? oscillating_target(s, 0, 1, spec.phase_spread)
                   : spec.schedule.at(s);
      };
      if (t > 0.0) {
        for (int p = 0; p < panels; ++p) {
          const double s0 = p * hstep, s1 = s0 + 0.5 * hstep, s2 = s0 + hstep;
          SymMatrix term = std::exp(-(t - s0)) * f_at(s0) +
                           4.0 * std::exp(-(t - s1)) * f_at(s1) +
                           std::exp(-(t - s2)) * f_at(s2);
          term *= hstep / 6.0;
          acc += term;
        }
      }
      return std::exp(-t) * d0_mean + acc;
    }
  }
  throw Error("weight_process", "sample_head_law", "unknown weight process kind");
}

}  // namespace mfattn
