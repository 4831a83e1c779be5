#pragma once

#include <cstdint>
#include <random>

namespace mfattn {

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

}  // namespace detail

/// Stream tags.  Every random draw in the suite flows from one 64-bit root
/// seed through stream_id = (tag << 56) | (trajectory << 24) | head, mixed by
/// splitmix64.  Identical (seed, stream_id) reproduce identical sequences.
enum class StreamTag : std::uint64_t {
  WeightNoise = 0,
  WeightInit = 1,
  CloudInit = 2,
  Perturbation = 3,
  Sampling = 4,
};

inline std::uint64_t make_stream_id(StreamTag tag, std::uint64_t trajectory,
                                    std::uint64_t head = 0) {
  return (static_cast<std::uint64_t>(tag) << 56) | ((trajectory & 0xFFFFFFFFULL) << 24) |
         (head & 0xFFFFFFULL);
}

/// Seeded random stream.  One independent stream per (trajectory, head); the
/// engine is seeded by a splitmix64 mix of (seed, stream_id).
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::uint64_t stream_id)
      : seed_(seed),
        stream_id_(stream_id),
        eng_(detail::splitmix64(detail::splitmix64(seed) ^ detail::splitmix64(~stream_id))) {}

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t stream_id() const noexcept { return stream_id_; }

  double gaussian() { return normal_(eng_); }
  double uniform01() { return uniform_(eng_); }
  std::uint64_t next_u64() { return eng_(); }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_id_;
  std::mt19937_64 eng_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

}  // namespace mfattn
