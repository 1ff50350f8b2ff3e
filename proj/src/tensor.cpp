#include "nulite/tensor.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace nulite {

std::string Dims4::str() const {
  return "(" + std::to_string(n) + "," + std::to_string(c) + "," +
         std::to_string(h) + "," + std::to_string(w) + ")";
}

std::uint64_t Rng::next_u64() {
  state_ += 0x9E3779B97F4A7C15ULL;
  std::uint64_t z = state_;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

double Rng::uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

std::uint64_t Rng::uniform_int(std::uint64_t bound) {
  if (bound == 0) throw std::invalid_argument("uniform_int: bound must be > 0");
  // fixed-point multiply; bias is < 1/2^64 and irrelevant here
  return static_cast<std::uint64_t>(
      (static_cast<unsigned __int128>(next_u64()) * bound) >> 64);
}

double Rng::normal(double std_dev) {
  if (!(std_dev > 0.0)) throw std::invalid_argument("normal: std must be > 0");
  // u1 in (0,1] so the log is finite
  double u1 = (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
  double u2 = static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  constexpr double two_pi = 6.283185307179586476925286766559;
  return std_dev * std::sqrt(-2.0 * std::log(u1)) * std::cos(two_pi * u2);
}

Rng Rng::fork() { return Rng(next_u64()); }

namespace {
std::int64_t checked_count(Dims4 d) {
  if (d.n < 1 || d.c < 1 || d.h < 1 || d.w < 1) {
    throw std::invalid_argument("Tensor4: all dims must be >= 1, got " + d.str());
  }
  std::int64_t count = d.n;
  for (std::int64_t dim : {std::int64_t{d.c}, std::int64_t{d.h}, std::int64_t{d.w}}) {
    if (count > std::numeric_limits<std::int64_t>::max() / dim) {
      throw std::invalid_argument("Tensor4: element count overflow for " + d.str());
    }
    count *= dim;
  }
  return count;
}
}  // namespace

Tensor4 Tensor4::zeros(Dims4 dims) { return full(dims, 0.0f); }

Tensor4 Tensor4::full(Dims4 dims, float value) {
  Tensor4 t;
  t.dims_ = dims;
  t.data_.assign(static_cast<std::size_t>(checked_count(dims)), value);
  return t;
}

Tensor4 Tensor4::from_data(Dims4 dims, std::vector<float> data) {
  if (checked_count(dims) != static_cast<std::int64_t>(data.size())) {
    throw std::invalid_argument("Tensor4::from_data: data length " +
                                std::to_string(data.size()) +
                                " does not match dims " + dims.str());
  }
  Tensor4 t;
  t.dims_ = dims;
  t.data_ = std::move(data);
  return t;
}

Tensor4 Tensor4::randn(Dims4 dims, float std_dev, Rng& rng) {
  Tensor4 t = zeros(dims);
  for (float& v : t.data_) v = static_cast<float>(rng.normal(std_dev));
  return t;
}

void Tensor4::check_finite(const std::string& what) const {
  for (float v : data_) {
    if (!std::isfinite(v)) {
      throw std::runtime_error(what + ": non-finite value in tensor " +
                               dims_.str());
    }
  }
}

std::int64_t Tensor4::check_offset(int n, int c, int y, int x) const {
  if (n < 0 || n >= dims_.n || c < 0 || c >= dims_.c || y < 0 || y >= dims_.h ||
      x < 0 || x >= dims_.w) {
    throw std::out_of_range("Tensor4: index (" + std::to_string(n) + "," +
                            std::to_string(c) + "," + std::to_string(y) + "," +
                            std::to_string(x) + ") out of range for " +
                            dims_.str());
  }
  return ((static_cast<std::int64_t>(n) * dims_.c + c) * dims_.h + y) * dims_.w + x;
}

}  // namespace nulite
