#pragma once

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

#include "mfattn/error.hpp"
#include "mfattn/rng.hpp"

namespace mfattn {

using Vec = std::vector<double>;

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

/// Dense symmetric d x d matrix, stored full row-major.  Elementwise
/// arithmetic on bit-symmetric operands stays bit-symmetric, which is how the
/// weight integrator preserves symmetry exactly.
class SymMatrix {
 public:
  SymMatrix() = default;
  explicit SymMatrix(int d) : d_(d), a_(static_cast<std::size_t>(d) * d, 0.0) {}

  static SymMatrix zero(int d) { return SymMatrix(d); }

  static SymMatrix identity(int d, double scale = 1.0) {
    SymMatrix m(d);
    for (int i = 0; i < d; ++i) m(i, i) = scale;
    return m;
  }

  static SymMatrix from_rows(int d, std::initializer_list<double> rows) {
    SymMatrix m(d);
    std::size_t k = 0;
    for (double v : rows) m.a_[k++] = v;
    return m;
  }

  int dim() const noexcept { return d_; }
  double& operator()(int i, int j) { return a_[static_cast<std::size_t>(i) * d_ + j]; }
  double operator()(int i, int j) const { return a_[static_cast<std::size_t>(i) * d_ + j]; }
  const double* data() const noexcept { return a_.data(); }
  double* data() noexcept { return a_.data(); }

  /// Sets entries (i,j) and (j,i) to the same value.
  void set_sym(int i, int j, double v) {
    (*this)(i, j) = v;
    (*this)(j, i) = v;
  }

  Vec apply(std::span<const double> x) const {
    Vec y(d_, 0.0);
    for (int i = 0; i < d_; ++i) {
      double s = 0.0;
      const double* row = a_.data() + static_cast<std::size_t>(i) * d_;
      for (int j = 0; j < d_; ++j) s += row[j] * x[j];
      y[i] = s;
    }
    return y;
  }

  double max_asymmetry() const {
    double m = 0.0;
    for (int i = 0; i < d_; ++i)
      for (int j = i + 1; j < d_; ++j) m = std::max(m, std::abs((*this)(i, j) - (*this)(j, i)));
    return m;
  }

  bool is_symmetric(double tol) const { return max_asymmetry() <= tol; }

  double frobenius_sq() const {
    double s = 0.0;
    for (double v : a_) s += v * v;
    return s;
  }

  SymMatrix& operator+=(const SymMatrix& o) {
    for (std::size_t k = 0; k < a_.size(); ++k) a_[k] += o.a_[k];
    return *this;
  }

  SymMatrix& operator-=(const SymMatrix& o) {
    for (std::size_t k = 0; k < a_.size(); ++k) a_[k] -= o.a_[k];
    return *this;
  }

  SymMatrix& operator*=(double s) {
    for (double& v : a_) v *= s;
    return *this;
  }

  friend SymMatrix operator+(SymMatrix a, const SymMatrix& b) { return a += b; }
  friend SymMatrix operator-(SymMatrix a, const SymMatrix& b) { return a -= b; }
  friend SymMatrix operator*(SymMatrix a, double s) { return a *= s; }
  friend SymMatrix operator*(double s, SymMatrix a) { return a *= s; }

  friend bool operator==(const SymMatrix& a, const SymMatrix& b) {
    return a.d_ == b.d_ && a.a_ == b.a_;
  }

 private:
  int d_ = 0;
  Vec a_;
};

/// Gaussian matrix with independent N(0,1) entries, then symmetrized as
/// (Z + Z^T)/2: diagonal variance 1, off-diagonal variance 1/2.
inline SymMatrix symmetric_gaussian(int d, RngStream& rng) {
  SymMatrix z(d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) z(i, j) = rng.gaussian();
  SymMatrix w(d);
  for (int i = 0; i < d; ++i) {
    w(i, i) = z(i, i);
    for (int j = i + 1; j < d; ++j) w.set_sym(i, j, 0.5 * (z(i, j) + z(j, i)));
  }
  return w;
}

/// Spectral norm of a symmetric matrix by power iteration on A^2.
inline double spectral_norm_sym(const SymMatrix& a) {
  const int d = a.dim();
  Vec v(d, 0.0);
  for (int i = 0; i < d; ++i) v[i] = 1.0 / std::sqrt(static_cast<double>(d)) + 1e-3 * (i + 1);
  double lambda = 0.0;
  for (int it = 0; it < 500; ++it) {
    Vec w = a.apply(a.apply(v));
    double nw = norm(w);
    if (nw == 0.0) return 0.0;
    for (int i = 0; i < d; ++i) v[i] = w[i] / nw;
    lambda = nw;
  }
  return std::sqrt(lambda);
}

}  // namespace mfattn
