#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "mfattn/attention.hpp"
#include "mfattn/diagnostics.hpp"
#include "mfattn/error.hpp"
#include "mfattn/sphere.hpp"
#include "mfattn/weights.hpp"

namespace mfattn {

enum class JkoCoupling { Identity, Assignment };
enum class MobilityMode { Constant, Softmax };

struct JkoConfig {
  double tau = 0.05;       // outer minimizing-movement step
  int inner_iters = 50;    // projected gradient iterations per outer step
  double inner_lr = 0.0;   // 0 -> tau/2
  JkoCoupling coupling = JkoCoupling::Identity;
  MobilityMode mobility_mode = MobilityMode::Constant;

  void validate() const {
    if (tau <= 0.0) throw Error("jko_solver", "JkoConfig", "tau must be positive");
    if (inner_iters < 1) throw Error("jko_solver", "JkoConfig", "inner_iters must be >= 1");
  }
  double lr() const { return inner_lr > 0.0 ? inner_lr : 0.5 * tau; }
};

struct JkoStepReport {
  TokenCloud cloud;
  double objective_start = 0.0;  // J(prev) = E(prev, t_k)
  double objective_end = 0.0;
  int iterations = 0;
  bool identity_coupling_optimal = true;  // checked when coupling = Assignment
};

namespace detail {

/// Transport half of the objective: (1/(2 tau n)) sum_i b_i ||u_i - prev_i||^2
/// with b frozen at the previous cloud (b = 1 in constant-mobility mode).
inline double transport_term(const TokenCloud& u, const TokenCloud& prev, const Vec& b,
                             double tau) {
  const int n = u.size();
  double s = 0.0;
  for (int i = 0; i < n; ++i) {
    auto ui = u.point(i);
    auto pi = prev.point(i);
    double d2 = 0.0;
    for (int k = 0; k < u.dim(); ++k) {
      const double diff = ui[k] - pi[k];
      d2 += diff * diff;
    }
    s += b[static_cast<std::size_t>(i)] * d2;
  }
  return s / (2.0 * tau * n);
}

}  // namespace detail

/// One minimizing-movement step: approximately minimizes
///   J(u) = transport(u, prev) / (2 tau) + E(u, t_k)
/// over particle positions on the sphere by projected gradient descent
/// started from prev.  Aborts if J increases for 5 consecutive iterations.
inline JkoStepReport jko_step(const TokenCloud& prev, const HeadEnsemble& ens,
                              const JkoConfig& cfg) {
  cfg.validate();
  const int n = prev.size();
  const int d = prev.dim();
  const double tau = cfg.tau;
  const double lr = cfg.lr();

  Vec b(n, 1.0);
  if (cfg.mobility_mode == MobilityMode::Softmax) {
    for (int i = 0; i < n; ++i)
      b[static_cast<std::size_t>(i)] = effective_mobility(prev, ens, prev.point_unit(i));
  }

  FieldRequest req;
  req.want_scalars = true;

  TokenCloud u = prev;
  CloudField f = evaluate_field(u, ens, req);
  double j_cur = f.energy;  // transport term vanishes at u = prev
  const double j_start = j_cur;

  int consecutive_up = 0;
  int iter = 0;
  Vec step(d);
  for (; iter < cfg.inner_iters; ++iter) {
    TokenCloud next = u;
    for (int i = 0; i < n; ++i) {
      auto ui = u.point(i);
      auto pi = prev.point(i);
      const double* gp = f.grad_pair.data() + static_cast<std::size_t>(i) * d;
      const double bi = b[static_cast<std::size_t>(i)];
      // n-scaled gradient of J at particle i; the radial part is discarded
      // by the tangent projection below.
      double radial = 0.0;
      for (int k = 0; k < d; ++k) {
        step[k] = (bi / tau) * (ui[k] - pi[k]) + gp[k];
        radial += step[k] * ui[k];
      }
      for (int k = 0; k < d; ++k) step[k] = ui[k] - lr * (step[k] - radial * ui[k]);
      next.set_point(i, radial_normalize({step.data(), step.size()}).span());
    }
    u = next;
    f = evaluate_field(u, ens, req);
    const double j_next = detail::transport_term(u, prev, b, tau) + f.energy;
    if (j_next > j_cur) {
      if (++consecutive_up >= 5)
        throw Error("jko_solver", "jko_step",
                    "inner objective increased for 5 consecutive iterations (iter " +
                        std::to_string(iter) + ", J = " + std::to_string(j_next) + ")");
    } else {
      consecutive_up = 0;
    }
    j_cur = j_next;
  }

  JkoStepReport rep;
  rep.cloud = std::move(u);
  rep.objective_start = j_start;
  rep.objective_end = j_cur;
  rep.iterations = iter;
  if (cfg.coupling == JkoCoupling::Assignment) {
    // A posteriori check that the identity plan is optimal for the iterate.
    Vec cost(static_cast<std::size_t>(n) * n);
    for (int i = 0; i < n; ++i) {
      auto ui = rep.cloud.point(i);
      for (int j = 0; j < n; ++j) {
        auto pj = prev.point(j);
        double s = 0.0;
        for (int k = 0; k < d; ++k) {
          const double diff = ui[k] - pj[k];
          s += diff * diff;
        }
        cost[static_cast<std::size_t>(i) * n + j] = s;
      }
    }
    std::vector<int> perm;
    solve_assignment(cost, n, perm);
    for (int i = 0; i < n; ++i)
      if (perm[static_cast<std::size_t>(i)] != i) rep.identity_coupling_optimal = false;
  }
  return rep;
}

struct JkoTrajectory {
  Vec times;
  std::vector<TokenCloud> clouds;
  std::vector<HeadEnsemble> ensembles;
  std::vector<double> objective_start, objective_end;
  bool all_identity_optimal = true;
};

/// Minimizing movements on the uniform grid t_k = k tau, with the head
/// ensemble advanced by the weight process between steps (sigma^2 = 0
/// recommended for comparability with the forward flow).
inline JkoTrajectory jko_trajectory(const TokenCloud& cloud0, const HeadEnsemble& ens0,
                                    const WeightProcessSpec& spec, const JkoConfig& cfg,
                                    double t_final, std::span<RngStream> head_rngs = {}) {
  cfg.validate();
  if (t_final <= 0.0) throw Error("jko_solver", "jko_trajectory", "T must be positive");
  const int steps = static_cast<int>(std::llround(t_final / cfg.tau));

  JkoTrajectory out;
  TokenCloud u = cloud0;
  HeadEnsemble ens = ens0;
  out.times.push_back(0.0);
  out.clouds.push_back(u);
  out.ensembles.push_back(ens);

  for (int k = 0; k < steps; ++k) {
    const double t = k * cfg.tau;
    if (spec.kind != WeightKind::Frozen) step_weights(ens, spec, t, cfg.tau, head_rngs);
    JkoStepReport rep = jko_step(u, ens, cfg);
    u = rep.cloud;
    out.times.push_back((k + 1) * cfg.tau);
    out.clouds.push_back(u);
    out.ensembles.push_back(ens);
    out.objective_start.push_back(rep.objective_start);
    out.objective_end.push_back(rep.objective_end);
    if (!rep.identity_coupling_optimal) out.all_identity_optimal = false;
  }
  return out;
}

/// Forward-Euler integration of the field the JKO scheme descends, used as
/// the reference for self-convergence studies.
///   Constant mobility: v_i = -(1/H) sum_h m_i^h V_i^h  (unnormalized kernel
///   gradient field);
///   Softmax mobility:  v_i = -(1/H) sum_h V_i^h        (normalized attention
///   field).
inline TokenCloud jko_matched_forward(const TokenCloud& cloud0, const HeadEnsemble& ens,
                                      MobilityMode mode, double t_final, double dt) {
  TokenCloud cloud = cloud0;
  const int steps = static_cast<int>(std::llround(t_final / dt));
  FieldRequest req;
  req.want_scalars = false;
  Vec z(cloud.dim());
  for (int k = 0; k < steps; ++k) {
    const CloudField f = evaluate_field(cloud, ens, req);
    const Vec& field = mode == MobilityMode::Constant ? f.grad_pair : f.vbar;
    for (int i = 0; i < cloud.size(); ++i) {
      auto xi = cloud.point(i);
      const double* vi = field.data() + static_cast<std::size_t>(i) * cloud.dim();
      for (int kk = 0; kk < cloud.dim(); ++kk) z[kk] = xi[kk] - dt * vi[kk];
      cloud.set_point(i, radial_normalize({z.data(), z.size()}).span());
    }
  }
  return cloud;
}

}  // namespace mfattn
