#pragma once

#include <cmath>
#include <span>
#include <utility>

#include "mfattn/error.hpp"
#include "mfattn/linalg.hpp"

namespace mfattn {

/// Threshold under which radial projection reports a degenerate step.
inline constexpr double kNearZeroEps = 1e-12;

/// Unit-norm tolerance enforced on construction.
inline constexpr double kUnitTol = 1e-9;

struct UnitVector {
  Vec c;

  UnitVector() = default;
  explicit UnitVector(Vec coords) : c(std::move(coords)) {
    const double n = norm(c);
    if (std::abs(n - 1.0) > kUnitTol)
      throw Error("sphere_geometry", "UnitVector", "vector is not unit-norm");
  }

  int dim() const noexcept { return static_cast<int>(c.size()); }
  std::span<const double> span() const noexcept { return {c.data(), c.size()}; }
};

struct TangentVector {
  UnitVector base;
  Vec v;

  int dim() const noexcept { return static_cast<int>(v.size()); }
  double norm() const { return mfattn::norm({v.data(), v.size()}); }
};

/// P_x^perp(v) = v - <v,x> x.
inline TangentVector project_tangent(const UnitVector& x, std::span<const double> v) {
  if (static_cast<int>(v.size()) != x.dim())
    throw DimensionMismatch("sphere_geometry", "project_tangent",
                            "vector dimension does not match base point");
  const double r = dot(v, x.span());
  Vec out(v.begin(), v.end());
  for (int i = 0; i < x.dim(); ++i) out[i] -= r * x.c[i];
  return TangentVector{x, std::move(out)};
}

/// z / ||z||.  Throws NearZeroVector for ||z|| <= kNearZeroEps, which signals
/// a degenerate Euler step.
inline UnitVector radial_normalize(std::span<const double> z) {
  const double n = norm(z);
  if (n <= kNearZeroEps)
    throw NearZeroVector("sphere_geometry", "radial_normalize",
                         "cannot project a near-zero vector onto the sphere");
  Vec out(z.begin(), z.end());
  for (double& v : out) v /= n;
  UnitVector u;
  u.c = std::move(out);  // exact by construction, skip the tolerance check
  return u;
}

/// Riemannian gradient in x of K(x,y) = e^{<x, D y>} on the sphere:
/// P_x^perp(e^{<x,Dy>} D y).
inline TangentVector kernel_gradient(const UnitVector& x, const UnitVector& y,
                                     const SymMatrix& d_mat) {
  if (x.dim() != y.dim() || x.dim() != d_mat.dim())
    throw DimensionMismatch("sphere_geometry", "kernel_gradient",
                            "points and weight matrix disagree on dimension");
  Vec dy = d_mat.apply(y.span());
  const double w = std::exp(dot(x.span(), {dy.data(), dy.size()}));
  for (double& v : dy) v *= w;
  return project_tangent(x, {dy.data(), dy.size()});
}

}  // namespace mfattn
