#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "mfattn/error.hpp"
#include "mfattn/fastexp.hpp"
#include "mfattn/linalg.hpp"
#include "mfattn/rng.hpp"
#include "mfattn/sphere.hpp"
#include "mfattn/threading.hpp"

namespace mfattn {

/// n tokens on S^{d-1}, stored row-major; the empirical token measure.
class TokenCloud {
 public:
  TokenCloud() = default;
  TokenCloud(int n, int d) : n_(n), d_(d), x_(static_cast<std::size_t>(n) * d, 0.0) {}

  static TokenCloud from_points(const std::vector<UnitVector>& pts) {
    if (pts.empty())
      throw Error("attention_core", "TokenCloud", "cloud needs at least one token");
    TokenCloud c(static_cast<int>(pts.size()), pts.front().dim());
    for (int i = 0; i < c.n_; ++i) c.set_point(i, pts[i].span());
    return c;
  }

  /// Uniform sample on the sphere via normalized Gaussian vectors.
  static TokenCloud random_uniform(int n, int d, RngStream& rng) {
    TokenCloud c(n, d);
    Vec z(d);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < d; ++j) z[j] = rng.gaussian();
      c.set_point(i, radial_normalize({z.data(), z.size()}).span());
    }
    return c;
  }

  int size() const noexcept { return n_; }
  int dim() const noexcept { return d_; }

  std::span<const double> point(int i) const {
    return {x_.data() + static_cast<std::size_t>(i) * d_, static_cast<std::size_t>(d_)};
  }
  UnitVector point_unit(int i) const {
    auto p = point(i);
    return UnitVector(Vec(p.begin(), p.end()));
  }
  void set_point(int i, std::span<const double> p) {
    std::copy(p.begin(), p.end(), x_.data() + static_cast<std::size_t>(i) * d_);
  }

  const double* data() const noexcept { return x_.data(); }
  double* data() noexcept { return x_.data(); }

  double max_norm_deviation() const {
    double dev = 0.0;
    for (int i = 0; i < n_; ++i) dev = std::max(dev, std::abs(norm(point(i)) - 1.0));
    return dev;
  }

  void validate(double tol = kUnitTol) const {
    if (n_ < 1) throw Error("attention_core", "TokenCloud", "cloud needs at least one token");
    if (max_norm_deviation() > tol)
      throw Error("attention_core", "TokenCloud", "token drifted off the unit sphere");
  }

  friend bool operator==(const TokenCloud& a, const TokenCloud& b) {
    return a.n_ == b.n_ && a.d_ == b.d_ && a.x_ == b.x_;
  }

 private:
  int n_ = 0;
  int d_ = 0;
  Vec x_;
};

/// H symmetric weight matrices; the empirical head measure.
class HeadEnsemble {
 public:
  HeadEnsemble() = default;
  explicit HeadEnsemble(std::vector<SymMatrix> heads) : heads_(std::move(heads)) {
    if (heads_.empty())
      throw Error("attention_core", "HeadEnsemble", "ensemble needs at least one head");
    const int d = heads_.front().dim();
    for (const auto& h : heads_) {
      if (h.dim() != d)
        throw DimensionMismatch("attention_core", "HeadEnsemble", "heads disagree on dimension");
      if (!h.is_symmetric(1e-9))
        throw Error("attention_core", "HeadEnsemble",
                    "weight matrix is not symmetric within 1e-9");
    }
  }

  static HeadEnsemble constant(int h_count, const SymMatrix& d_mat) {
    return HeadEnsemble(std::vector<SymMatrix>(static_cast<std::size_t>(h_count), d_mat));
  }

  int head_count() const noexcept { return static_cast<int>(heads_.size()); }
  int dim() const noexcept { return heads_.empty() ? 0 : heads_.front().dim(); }
  const SymMatrix& head(int h) const { return heads_[static_cast<std::size_t>(h)]; }
  SymMatrix& head(int h) { return heads_[static_cast<std::size_t>(h)]; }
  const std::vector<SymMatrix>& heads() const noexcept { return heads_; }

  double mean_frobenius_sq() const {
    double s = 0.0;
    for (const auto& h : heads_) s += h.frobenius_sq();
    return s / static_cast<double>(heads_.size());
  }

  friend bool operator==(const HeadEnsemble& a, const HeadEnsemble& b) {
    return a.heads_ == b.heads_;
  }

 private:
  std::vector<SymMatrix> heads_;
};

namespace detail {

inline void check_token_index(const TokenCloud& cloud, int i, const char* op) {
  if (i < 0 || i >= cloud.size())
    throw Error("attention_core", op, "token index " + std::to_string(i) + " out of range");
}

}  // namespace detail

/// Softmax self-attention row i: A_ij = e^{<x_i, D x_j>} / sum_p e^{<x_i, D x_p>},
/// computed with per-row max subtraction.
inline Vec attention_row(const TokenCloud& cloud, const SymMatrix& d_mat, int i) {
  detail::check_token_index(cloud, i, "attention_row");
  const int n = cloud.size();
  Vec logits(n);
  Vec dxj = d_mat.apply(cloud.point(i));  // D x_i reused below via symmetry of D
  double mx = -1e308;
  for (int j = 0; j < n; ++j) {
    // <x_i, D x_j> = <D x_i, x_j> since D is symmetric
    logits[j] = dot({dxj.data(), dxj.size()}, cloud.point(j));
    mx = std::max(mx, logits[j]);
  }
  double denom = 0.0;
  for (int j = 0; j < n; ++j) {
    logits[j] = std::exp(logits[j] - mx);
    denom += logits[j];
  }
  for (double& w : logits) w /= denom;
  return logits;
}

/// Per-head velocity V_i = P^perp_{x_i}( sum_j A_ij D x_j ).
inline TangentVector head_velocity(const TokenCloud& cloud, const SymMatrix& d_mat, int i) {
  detail::check_token_index(cloud, i, "head_velocity");
  const int n = cloud.size();
  const int d = cloud.dim();
  const Vec a = attention_row(cloud, d_mat, i);
  Vec acc(d, 0.0);
  for (int j = 0; j < n; ++j) {
    Vec dxj = d_mat.apply(cloud.point(j));
    for (int k = 0; k < d; ++k) acc[k] += a[j] * dxj[k];
  }
  return project_tangent(cloud.point_unit(i), {acc.data(), acc.size()});
}

/// Head-averaged velocity (1/H) sum_h V_i^{(h)}.
inline TangentVector multihead_velocity(const TokenCloud& cloud, const HeadEnsemble& ens,
                                        int i) {
  detail::check_token_index(cloud, i, "multihead_velocity");
  const int d = cloud.dim();
  Vec acc(d, 0.0);
  for (int h = 0; h < ens.head_count(); ++h) {
    const TangentVector vh = head_velocity(cloud, ens.head(h), i);
    for (int k = 0; k < d; ++k) acc[k] += vh.v[k];
  }
  const double inv_h = 1.0 / ens.head_count();
  for (double& v : acc) v *= inv_h;
  return project_tangent(cloud.point_unit(i), {acc.data(), acc.size()});
}

/// Nonlinear mobility m(x, D) = (1/n) sum_j e^{<x, D x_j>}.
inline double mobility(const TokenCloud& cloud, const SymMatrix& d_mat, const UnitVector& x) {
  if (x.dim() != cloud.dim())
    throw DimensionMismatch("attention_core", "mobility", "point dimension mismatch");
  const Vec dx = d_mat.apply(x.span());
  double s = 0.0;
  for (int j = 0; j < cloud.size(); ++j) s += std::exp(dot({dx.data(), dx.size()}, cloud.point(j)));
  return s / cloud.size();
}

/// Effective mobility b(x) = ( (1/H) sum_h 1/m(x, D^{(h)}) )^{-1}, the
/// head-weighted harmonic mean of the per-head mobilities.
inline double effective_mobility(const TokenCloud& cloud, const HeadEnsemble& ens,
                                 const UnitVector& x) {
  double inv = 0.0;
  for (int h = 0; h < ens.head_count(); ++h) inv += 1.0 / mobility(cloud, ens.head(h), x);
  return ens.head_count() / inv;
}

/// Fully evaluated mean-field state at a fixed (cloud, ensemble) pair.  One
/// fused pass per head computes everything the integrator and the energy
/// ledger need; rows are embarrassingly parallel and each row accumulates in
/// a fixed order, so results do not depend on the thread count.
struct CloudField {
  int n = 0;
  int d = 0;
  Vec vbar;              // n x d   (1/H) sum_h V_i^{(h)}
  Vec grad_pair;         // n x d   (1/H) sum_h m_i^h V_i^{(h)}  (tangent energy gradient)
  Vec b_eff;             // n       effective mobility at each token
  double energy = 0.0;   // (1/(2Hn^2)) sum e^{<x_i, D^h x_j>}
  double g2_unweighted = 0.0;
  double g2_weighted = 0.0;
  double dissipation_pairing = 0.0;  // (1/n) sum_i <grad_pair_i, vbar_i>
  // Ledger pairings, populated when drift/noise inputs are supplied.
  double drift_pair = 0.0;  // rate: (1/(2Hn^2)) sum e^B <x_i, f_h x_j>
  // Ito/compensator increment over one step of size dt (not a rate):
  //   (1/(2Hn^2)) sum e^B (e^{delta_f + v/2} - 1 - delta_f),
  // delta_f = dt <x_i, f x_j>, v = 2 sigma^2 dt ||sym(x_i x_j^T)||_F^2;
  // the leading term is the usual quadratic contraction
  //   (1/(4Hn^2)) sum e^B (x_i x_j^T : g)^2 dt.
  double ito_increment = 0.0;
  double mart_pair = 0.0;   // (1/(2Hn^2)) sum e^B sqrt(2 sigma2) <x_i, W_h x_j>

  std::span<const double> velocity(int i) const {
    return {vbar.data() + static_cast<std::size_t>(i) * d, static_cast<std::size_t>(d)};
  }
};

struct FieldRequest {
  bool want_scalars = true;  // energy, G^2 series, dissipation pairing
  // Optional ledger inputs: per-head drift matrices and the symmetrized
  // increments about to be consumed by the weight step over [t, t + dt).
  const std::vector<SymMatrix>* drifts = nullptr;
  const std::vector<SymMatrix>* increments = nullptr;
  double sigma2 = 0.0;
  double dt = 0.0;
  int threads = 1;
};

namespace detail {

/// expm1 by a degree-5 Taylor polynomial; the compensator arguments are
/// O(dt), so the truncation error is far below the Monte Carlo noise.
inline double expm1_small(double z) {
  return z * (1.0 + z * (0.5 + z * (1.0 / 6.0 + z * (1.0 / 24.0 + z * (1.0 / 120.0)))));
}

}  // namespace detail

namespace detail {

struct RowAccum {
  double sumw = 0.0;
  double acc[3] = {0.0, 0.0, 0.0};
  double sdrift = 0.0;
  double sito = 0.0;
  double smart = 0.0;
};

/// Hot j-loop for d = 3 in structure-of-arrays layout.  The simd reductions
/// let the compiler vectorize fast_exp together with the accumulations.
/// Streams are packed as soa[k*n + j]: x in lanes 0..2, D x in 3..5,
/// f x in 6..8, W x in 9..11.
template <bool WithLedger, bool WithNoise>
inline RowAccum field_row_d3(const double* xi, const double* __restrict__ soa, int n,
                             double dt = 0.0, double half_s2dt = 0.0) {
  const double xi0 = xi[0], xi1 = xi[1], xi2 = xi[2];
  const double* __restrict__ x0 = soa;
  const double* __restrict__ x1 = soa + n;
  const double* __restrict__ x2 = soa + 2 * n;
  const double* __restrict__ d0p = soa + 3 * n;
  const double* __restrict__ d1p = soa + 4 * n;
  const double* __restrict__ d2p = soa + 5 * n;
  const double* __restrict__ f0 = soa + 6 * n;
  const double* __restrict__ f1 = soa + 7 * n;
  const double* __restrict__ f2 = soa + 8 * n;
  const double* __restrict__ w0 = soa + 9 * n;
  const double* __restrict__ w1 = soa + 10 * n;
  const double* __restrict__ w2 = soa + 11 * n;
  double sumw = 0.0, a0 = 0.0, a1 = 0.0, a2 = 0.0, sdrift = 0.0, sito = 0.0, smart = 0.0;
#pragma omp simd reduction(+ : sumw, a0, a1, a2, sdrift, sito, smart)
  for (int j = 0; j < n; ++j) {
    const double d0 = d0p[j], d1 = d1p[j], d2 = d2p[j];
    const double w = fast_exp(xi0 * d0 + xi1 * d1 + xi2 * d2);
    sumw += w;
    a0 += w * d0;
    a1 += w * d1;
    a2 += w * d2;
    if constexpr (WithLedger) {
      const double fp = xi0 * f0[j] + xi1 * f1[j] + xi2 * f2[j];
      const double sp = xi0 * x0[j] + xi1 * x1[j] + xi2 * x2[j];
      const double z = dt * fp + half_s2dt * (1.0 + sp * sp);
      sdrift += w * fp;
      sito += w * (expm1_small(z) - dt * fp);
      if constexpr (WithNoise) smart += w * (xi0 * w0[j] + xi1 * w1[j] + xi2 * w2[j]);
    }
  }
  RowAccum r;
  r.sumw = sumw;
  r.acc[0] = a0;
  r.acc[1] = a1;
  r.acc[2] = a2;
  r.sdrift = sdrift;
  r.sito = sito;
  r.smart = smart;
  return r;
}

}  // namespace detail

inline CloudField evaluate_field(const TokenCloud& cloud, const HeadEnsemble& ens,
                                 const FieldRequest& req = {}) {
  const int n = cloud.size();
  const int d = cloud.dim();
  const int h_count = ens.head_count();
  if (ens.dim() != d)
    throw DimensionMismatch("attention_core", "evaluate_field",
                            "ensemble dimension does not match cloud");

  CloudField out;
  out.n = n;
  out.d = d;
  out.vbar.assign(static_cast<std::size_t>(n) * d, 0.0);
  out.grad_pair.assign(static_cast<std::size_t>(n) * d, 0.0);
  out.b_eff.assign(n, 0.0);

  const bool ledger = req.drifts != nullptr;
  Vec inv_m(n, 0.0);
  Vec row_sumexp(ledger || req.want_scalars ? n : 0, 0.0);
  Vec row_drift(ledger ? n : 0, 0.0);
  Vec row_ito(ledger ? n : 0, 0.0);
  Vec row_mart(ledger ? n : 0, 0.0);

  const double inv_h = 1.0 / h_count;
  const double g_coef = std::sqrt(2.0 * req.sigma2);
  const double half_s2dt = 0.5 * req.sigma2 * req.dt;
  const double* x = cloud.data();
  const bool noisy = ledger && req.increments != nullptr && req.sigma2 > 0.0;

  if (d == 3) {
    // Fast path: one self-contained structure-of-arrays block per head
    // (x, D x, f x, W x lanes), filled once, then a single row-parallel
    // sweep with the head loop inside.  Each row is owned by exactly one
    // worker and accumulates heads in index order, so the result does not
    // depend on the thread count.
    const std::size_t block = static_cast<std::size_t>(n) * 12;
    Vec soa(block * h_count);
    for (int h = 0; h < h_count; ++h) {
      double* base = soa.data() + block * h;
      for (int j = 0; j < n; ++j) {
        const double* xj = x + static_cast<std::size_t>(j) * 3;
        base[j] = xj[0];
        base[n + j] = xj[1];
        base[2 * n + j] = xj[2];
      }
      auto fill = [&](const SymMatrix& m, int lane) {
        for (int r = 0; r < 3; ++r) {
          const double m0 = m(r, 0), m1 = m(r, 1), m2 = m(r, 2);
          double* dst = base + static_cast<std::size_t>(lane + r) * n;
          for (int j = 0; j < n; ++j)
            dst[j] = m0 * base[j] + m1 * base[n + j] + m2 * base[2 * n + j];
        }
      };
      fill(ens.head(h), 3);
      if (ledger) {
        fill((*req.drifts)[static_cast<std::size_t>(h)], 6);
        if (noisy) fill((*req.increments)[static_cast<std::size_t>(h)], 9);
      }
    }

    // Head-outer within each worker's row range keeps one head block hot in
    // cache; every row still accumulates its heads in index order.
    parallel_for(n, req.threads, [&](int begin, int end) {
      for (int h = 0; h < h_count; ++h) {
        const double* base = soa.data() + block * h;
        for (int i = begin; i < end; ++i) {
          const double* xi = x + static_cast<std::size_t>(i) * 3;
          double* vb = out.vbar.data() + static_cast<std::size_t>(i) * 3;
          double* gp = out.grad_pair.data() + static_cast<std::size_t>(i) * 3;
          detail::RowAccum r;
          if (ledger && noisy)
            r = detail::field_row_d3<true, true>(xi, base, n, req.dt, half_s2dt);
          else if (ledger)
            r = detail::field_row_d3<true, false>(xi, base, n, req.dt, half_s2dt);
          else
            r = detail::field_row_d3<false, false>(xi, base, n);
          const double radial = r.acc[0] * xi[0] + r.acc[1] * xi[1] + r.acc[2] * xi[2];
          const double m_i = r.sumw / n;
          for (int k = 0; k < 3; ++k) {
            const double tang = (r.acc[k] - radial * xi[k]) / r.sumw;
            vb[k] += inv_h * tang;
            gp[k] += inv_h * m_i * tang;
          }
          inv_m[i] += 1.0 / m_i;
          if (!row_sumexp.empty()) row_sumexp[i] += r.sumw;
          if (ledger) {
            row_drift[i] += r.sdrift;
            row_ito[i] += r.sito;
            if (noisy) row_mart[i] += r.smart;
          }
        }
      }
    });
  } else {
    // Generic-dimension path, head-major.
    Vec dxj(static_cast<std::size_t>(n) * d);
    Vec fxj, wxj;
    for (int h = 0; h < h_count; ++h) {
      const SymMatrix& dm = ens.head(h);
      for (int j = 0; j < n; ++j) {
        const Vec t = dm.apply(cloud.point(j));
        std::copy(t.begin(), t.end(), dxj.data() + static_cast<std::size_t>(j) * d);
      }
      if (ledger) {
        fxj.assign(static_cast<std::size_t>(n) * d, 0.0);
        const SymMatrix& f = (*req.drifts)[static_cast<std::size_t>(h)];
        for (int j = 0; j < n; ++j) {
          const Vec t = f.apply(cloud.point(j));
          std::copy(t.begin(), t.end(), fxj.data() + static_cast<std::size_t>(j) * d);
        }
        if (noisy) {
          wxj.assign(static_cast<std::size_t>(n) * d, 0.0);
          const SymMatrix& w = (*req.increments)[static_cast<std::size_t>(h)];
          for (int j = 0; j < n; ++j) {
            const Vec t = w.apply(cloud.point(j));
            std::copy(t.begin(), t.end(), wxj.data() + static_cast<std::size_t>(j) * d);
          }
        }
      }

      parallel_for(n, req.threads, [&](int begin, int end) {
        Vec acc(d);
        for (int i = begin; i < end; ++i) {
          const double* xi = x + static_cast<std::size_t>(i) * d;
          double sumw = 0.0, sdrift = 0.0, sito = 0.0, smart = 0.0;
          std::fill(acc.begin(), acc.end(), 0.0);
          for (int j = 0; j < n; ++j) {
            const double* dj = dxj.data() + static_cast<std::size_t>(j) * d;
            const double* xj = x + static_cast<std::size_t>(j) * d;
            double logit = 0.0;
            for (int k = 0; k < d; ++k) logit += xi[k] * dj[k];
            const double w = fast_exp(logit);
            sumw += w;
            for (int k = 0; k < d; ++k) acc[k] += w * dj[k];
            if (ledger) {
              const double* fj = fxj.data() + static_cast<std::size_t>(j) * d;
              double fp = 0.0, sp = 0.0;
              for (int k = 0; k < d; ++k) {
                fp += xi[k] * fj[k];
                sp += xi[k] * xj[k];
              }
              const double z = req.dt * fp + half_s2dt * (1.0 + sp * sp);
              sdrift += w * fp;
              sito += w * (detail::expm1_small(z) - req.dt * fp);
              if (noisy) {
                const double* wj = wxj.data() + static_cast<std::size_t>(j) * d;
                double wp = 0.0;
                for (int k = 0; k < d; ++k) wp += xi[k] * wj[k];
                smart += w * wp;
              }
            }
          }
          // Tangent-project the attention average; P^perp commutes with sums.
          double radial = 0.0;
          for (int k = 0; k < d; ++k) radial += acc[k] * xi[k];
          const double m_i = sumw / n;
          double* vb = out.vbar.data() + static_cast<std::size_t>(i) * d;
          double* gp = out.grad_pair.data() + static_cast<std::size_t>(i) * d;
          for (int k = 0; k < d; ++k) {
            const double tang = (acc[k] - radial * xi[k]) / sumw;  // V_i^{(h)} component
            vb[k] += inv_h * tang;
            gp[k] += inv_h * m_i * tang;
          }
          inv_m[i] += 1.0 / m_i;
          if (!row_sumexp.empty()) row_sumexp[i] += sumw;
          if (ledger) {
            row_drift[i] += sdrift;
            row_ito[i] += sito;
            if (noisy) row_mart[i] += smart;
          }
        }
      });
    }
  }

  for (int i = 0; i < n; ++i) out.b_eff[i] = h_count / inv_m[i];

  if (req.want_scalars) {
    const double scale = 1.0 / (2.0 * h_count * static_cast<double>(n) * n);
    double se = 0.0, g2u = 0.0, g2w = 0.0, diss = 0.0;
    for (int i = 0; i < n; ++i) {
      se += row_sumexp[i];
      const double* vb = out.vbar.data() + static_cast<std::size_t>(i) * d;
      const double* gp = out.grad_pair.data() + static_cast<std::size_t>(i) * d;
      double v2 = 0.0, pv = 0.0;
      for (int k = 0; k < d; ++k) {
        v2 += vb[k] * vb[k];
        pv += gp[k] * vb[k];
      }
      g2u += v2;
      g2w += out.b_eff[i] * v2;
      diss += pv;
    }
    out.energy = se * scale;
    out.g2_unweighted = g2u / n;
    out.g2_weighted = g2w / n;
    out.dissipation_pairing = diss / n;
    if (ledger) {
      double sd = 0.0, si = 0.0, sm = 0.0;
      for (int i = 0; i < n; ++i) {
        sd += row_drift[i];
        si += row_ito[i];
        sm += row_mart[i];
      }
      out.drift_pair = sd * scale;
      out.ito_increment = si * scale;
      out.mart_pair = sm * g_coef * scale;
    }
  }
  return out;
}

}  // namespace mfattn
