#pragma once

#include <bit>
#include <cstdint>

namespace mfattn {

/// Branch-free exp for the hot attention kernels.  Cody-Waite reduction plus
/// a degree-11 Taylor polynomial; relative error < 5e-14 on [-700, 700]
/// (inputs are clamped to that range).  The 2^k factor is assembled from the
/// rounding-shift bit pattern with pure integer adds, so the whole function
/// vectorizes inside simd loops.  Reference-path code keeps std::exp.
inline double fast_exp(double x) {
  constexpr double kLog2E = 1.4426950408889634074;
  constexpr double kLn2Hi = 6.93147180369123816490e-01;
  constexpr double kLn2Lo = 1.90821492927058770002e-10;
  constexpr double kShift = 6755399441055744.0;  // 1.5 * 2^52

  // Branchless clamp to [-708, 708] via mask selects; ternaries here would
  // defeat vectorization (the compiler path-splits the constant arms).
  const std::uint64_t over = -static_cast<std::uint64_t>(x > 708.0);
  const std::uint64_t under = -static_cast<std::uint64_t>(x < -708.0);
  std::uint64_t xb = std::bit_cast<std::uint64_t>(x);
  xb = (xb & ~over) | (std::bit_cast<std::uint64_t>(708.0) & over);
  xb = (xb & ~under) | (std::bit_cast<std::uint64_t>(-708.0) & under);
  x = std::bit_cast<double>(xb);

  double t = x * kLog2E + kShift;
  // The rounded integer k sits in the low mantissa bits of t; adding the
  // exponent bias and shifting builds the bits of 2^k directly.
  const std::uint64_t scale_bits = (std::bit_cast<std::uint64_t>(t) + 1023ULL) << 52;
  t -= kShift;

  const double r = (x - t * kLn2Hi) - t * kLn2Lo;

  // Taylor series of e^r on |r| <= ln2/2.
  double p = 2.5052108385441718775e-08;  // 1/11!
  p = p * r + 2.7557319223985892511e-07;
  p = p * r + 2.7557319223985890653e-06;
  p = p * r + 2.4801587301587301566e-05;
  p = p * r + 1.9841269841269841253e-04;
  p = p * r + 1.3888888888888889419e-03;
  p = p * r + 8.3333333333333332177e-03;
  p = p * r + 4.1666666666666664354e-02;
  p = p * r + 1.6666666666666665741e-01;
  p = p * r + 5.0000000000000000000e-01;
  p = p * r + 1.0;
  p = p * r + 1.0;

  return p * std::bit_cast<double>(scale_bits);
}

}  // namespace mfattn
