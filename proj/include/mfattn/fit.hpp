#pragma once

#include <array>
#include <cmath>
#include <vector>

#include "mfattn/error.hpp"
#include "mfattn/linalg.hpp"

namespace mfattn {

namespace detail {

/// Regularized incomplete beta I_x(a,b) by Lentz continued fraction.
inline double betacf(double a, double b, double x) {
  constexpr int kMaxIter = 300;
  constexpr double kEps = 3e-16, kFpMin = 1e-300;
  const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0, d = 1.0 - qab * x / qap;
  if (std::abs(d) < kFpMin) d = kFpMin;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const int m2 = 2 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kFpMin) d = kFpMin;
    c = 1.0 + aa / c;
    if (std::abs(c) < kFpMin) c = kFpMin;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kFpMin) d = kFpMin;
    c = 1.0 + aa / c;
    if (std::abs(c) < kFpMin) c = kFpMin;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < kEps) break;
  }
  return h;
}

inline double incomplete_beta(double a, double b, double x) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double ln_bt = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                       a * std::log(x) + b * std::log(1.0 - x);
  const double bt = std::exp(ln_bt);
  if (x < (a + 1.0) / (a + b + 2.0)) return bt * betacf(a, b, x) / a;
  return 1.0 - bt * betacf(b, a, 1.0 - x) / b;
}

}  // namespace detail

/// CDF of the Student t distribution with dof degrees of freedom.
inline double student_t_cdf(double t, double dof) {
  const double x = dof / (dof + t * t);
  const double p = 0.5 * detail::incomplete_beta(0.5 * dof, 0.5, x);
  return t >= 0.0 ? 1.0 - p : p;
}

/// Upper quantile of the Student t distribution, by bisection.
inline double student_t_quantile(double p, double dof) {
  double lo = 0.0, hi = 1e6;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (student_t_cdf(mid, dof) < p)
      lo = mid;
    else
      hi = mid;
  }
  return 0.5 * (lo + hi);
}

/// Fitted a * H^b with 95% confidence intervals from the log-log OLS and the
/// Pearson coefficient of the log-log points.
struct FitResult {
  double a = 0.0;
  double b = 0.0;
  std::array<double, 2> ci_a{0.0, 0.0};
  std::array<double, 2> ci_b{0.0, 0.0};
  double pearson_r = 0.0;
};

/// Ordinary least squares on (log H, log mean).  a = exp(intercept),
/// b = slope; CIs use t-distribution with n-2 dof.
inline FitResult fit_power_law(const Vec& h_values, const Vec& means) {
  const std::size_t m = h_values.size();
  if (m != means.size() || m < 3)
    throw Error("experiments", "fit_power_law", "need at least 3 (H, mean) pairs");
  Vec lx(m), ly(m);
  for (std::size_t i = 0; i < m; ++i) {
    if (h_values[i] <= 0.0 || means[i] <= 0.0)
      throw Error("experiments", "fit_power_law", "H values and means must be positive");
    lx[i] = std::log(h_values[i]);
    ly[i] = std::log(means[i]);
  }
  double sx = 0.0, sy = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    sx += lx[i];
    sy += ly[i];
  }
  const double mx = sx / m, my = sy / m;
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    sxx += (lx[i] - mx) * (lx[i] - mx);
    syy += (ly[i] - my) * (ly[i] - my);
    sxy += (lx[i] - mx) * (ly[i] - my);
  }
  const double slope = sxy / sxx;
  const double intercept = my - slope * mx;

  double ssr = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    const double r = ly[i] - (intercept + slope * lx[i]);
    ssr += r * r;
  }
  const double dof = static_cast<double>(m) - 2.0;
  const double s2 = ssr / dof;
  const double se_b = std::sqrt(s2 / sxx);
  const double se_int = std::sqrt(s2 * (1.0 / m + mx * mx / sxx));
  const double tq = student_t_quantile(0.975, dof);

  FitResult fit;
  fit.b = slope;
  fit.a = std::exp(intercept);
  fit.ci_b = {slope - tq * se_b, slope + tq * se_b};
  fit.ci_a = {std::exp(intercept - tq * se_int), std::exp(intercept + tq * se_int)};
  fit.pearson_r = syy > 0.0 ? sxy / std::sqrt(sxx * syy) : (sxy == 0.0 ? 0.0 : 1.0);
  return fit;
}

inline double mean_of(const Vec& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / v.size();
}

/// Standard error of the mean (sample standard deviation / sqrt(n)).
inline double se_of(const Vec& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / (v.size() - 1) / v.size());
}

}  // namespace mfattn
