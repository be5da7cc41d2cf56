#pragma once

#include <Eigen/Dense>

#include <complex>
#include <cstdint>
#include <cstring>
#include <stdexcept>
#include <string>
#include <vector>

namespace rxlab {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;
using CMat = Eigen::MatrixXcd;
using CVec = Eigen::VectorXcd;
using cplx = std::complex<double>;

inline constexpr double kPi = 3.141592653589793238462643383279502884;

// Error taxonomy; the CLI maps these onto distinct exit codes.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DivergenceError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct GuardError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Every categorical posterior leaving a detector satisfies entries >= kPosteriorFloor
// and row sums == 1. The raw floor applied before renormalization is chosen slightly
// above the guarantee so division by the row sum cannot dip entries back under it.
inline constexpr double kPosteriorFloor = 1e-8;
inline constexpr double kRawPosteriorFloor = 2e-8;

// In-place: clamp entries to the raw floor, then renormalize each row to sum 1.
inline void floor_normalize_rows(Mat& p) {
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    double sum = 0.0;
    for (Eigen::Index j = 0; j < p.cols(); ++j) {
      double v = p(i, j);
      if (!(v > kRawPosteriorFloor)) v = kRawPosteriorFloor;
      p(i, j) = v;
      sum += v;
    }
    p.row(i) /= sum;
  }
}

// FNV-1a, used for config hashing so datasets and weight files can be tied to
// the exact configuration that produced them.
inline std::uint64_t fnv1a64(const void* data, std::size_t len,
                             std::uint64_t h = 0xcbf29ce484222325ull) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::uint64_t fnv1a64(const std::string& s,
                             std::uint64_t h = 0xcbf29ce484222325ull) {
  return fnv1a64(s.data(), s.size(), h);
}

inline bool host_is_little_endian() {
  const std::uint32_t x = 1;
  unsigned char b;
  std::memcpy(&b, &x, 1);
  return b == 1;
}

}  // namespace rxlab
