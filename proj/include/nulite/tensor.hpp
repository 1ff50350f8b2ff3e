#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace nulite {

struct Dims4 {
  int n = 0;
  int c = 0;
  int h = 0;
  int w = 0;

  std::int64_t count() const {
    return static_cast<std::int64_t>(n) * c * h * w;
  }
  bool operator==(const Dims4& o) const {
    return n == o.n && c == o.c && h == o.h && w == o.w;
  }
  bool operator!=(const Dims4& o) const { return !(*this == o); }
  std::string str() const;
};

/// Deterministic 64-bit PRNG (splitmix64). The full algorithm lives here so
/// seeded runs reproduce bit-for-bit on any platform:
///   state += 0x9E3779B97F4A7C15
///   z = state; z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
///   z = (z ^ (z >> 27)) * 0x94D049BB133111EB
///   return z ^ (z >> 31)
/// Normal variates use the Box-Muller transform on two uniform draws.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64();

  /// Uniform in [0, 1), 53-bit resolution.
  double uniform();

  /// Uniform integer in [0, bound). bound must be > 0.
  std::uint64_t uniform_int(std::uint64_t bound);

  /// Normal(0, std). Draws exactly two u64s per call.
  double normal(double std_dev);

  /// Derives an independent stream (used to decouple init/shuffle/augment).
  Rng fork();

 private:
  std::uint64_t state_;
};

/// Dense rank-4 array in N,C,H,W order, row-major with W fastest.
/// The universal value type of the library; 32-bit elements throughout.
class Tensor4 {
 public:
  Tensor4() = default;

  static Tensor4 zeros(Dims4 dims);
  static Tensor4 full(Dims4 dims, float value);
  static Tensor4 from_data(Dims4 dims, std::vector<float> data);
  static Tensor4 randn(Dims4 dims, float std_dev, Rng& rng);

  const Dims4& dims() const { return dims_; }
  std::int64_t size() const { return static_cast<std::int64_t>(data_.size()); }

  float at(int n, int c, int y, int x) const {
    return data_[check_offset(n, c, y, x)];
  }
  float& at(int n, int c, int y, int x) {
    return data_[check_offset(n, c, y, x)];
  }

  const float* data() const { return data_.data(); }
  float* data() { return data_.data(); }
  const std::vector<float>& vec() const { return data_; }

  /// Throws if any element is NaN or infinite; `what` names the producer.
  void check_finite(const std::string& what) const;

 private:
  std::int64_t check_offset(int n, int c, int y, int x) const;

  Dims4 dims_{};
  std::vector<float> data_;
};

}  // namespace nulite
