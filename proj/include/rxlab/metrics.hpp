#pragma once

#include <cmath>
#include <cstdint>

#include "rxlab/common.hpp"
#include "rxlab/constellation.hpp"
#include "rxlab/detect_qrm.hpp"

namespace rxlab {

struct ErrorCounter {
  std::uint64_t symbol_errors = 0;
  std::uint64_t symbols = 0;
  std::uint64_t bit_errors = 0;
  std::uint64_t bits = 0;

  void merge(const ErrorCounter& o) {
    symbol_errors += o.symbol_errors;
    symbols += o.symbols;
    bit_errors += o.bit_errors;
    bits += o.bits;
  }

  double ser() const { return symbols ? double(symbol_errors) / double(symbols) : 0.0; }
  double ber() const { return bits ? double(bit_errors) / double(bits) : 0.0; }
};

// Wilson score interval half-width for an observed proportion.
inline double wilson_halfwidth(std::uint64_t errors, std::uint64_t trials,
                               double z = 1.96) {
  if (trials == 0) return 0.0;
  const double n = static_cast<double>(trials);
  const double p = static_cast<double>(errors) / n;
  const double z2 = z * z;
  return (z / (1.0 + z2 / n)) * std::sqrt(p * (1.0 - p) / n + z2 / (4.0 * n * n));
}

// Hard decisions from a per-dimension posterior vs the true PAM levels.
// One complex symbol spans real dims (j, j + n_tx); it is in error when
// either dimension is. Bits compare Gray labels per dimension.
inline ErrorCounter count_errors(const Mat& posterior, const Eigen::VectorXi& true_levels,
                                 const Constellation& qam, int n_tx) {
  ErrorCounter c;
  const Eigen::VectorXi hard = argmax_levels(posterior);
  const int m = qam.pam_bits();
  std::uint8_t ba[8], bb[8];
  for (int j = 0; j < n_tx; ++j) {
    const bool i_ok = hard[j] == true_levels[j];
    const bool q_ok = hard[j + n_tx] == true_levels[j + n_tx];
    c.symbols += 1;
    c.symbol_errors += (i_ok && q_ok) ? 0 : 1;
  }
  for (int d = 0; d < static_cast<int>(hard.size()); ++d) {
    qam.pam_bits_from_level(hard[d], ba);
    qam.pam_bits_from_level(true_levels[d], bb);
    for (int i = 0; i < m; ++i) {
      c.bits += 1;
      c.bit_errors += ba[i] != bb[i] ? 1 : 0;
    }
  }
  return c;
}

// True real-model levels of one payload RE from the transmitted bits.
inline Eigen::VectorXi true_levels_of(const std::uint8_t* bits, const Constellation& qam,
                                      int n_tx) {
  Eigen::VectorXi lev(2 * n_tx);
  const int bps = qam.bits_per_symbol();
  const int m = qam.pam_bits();
  std::uint8_t bi[8], bq[8];
  for (int a = 0; a < n_tx; ++a) {
    const std::uint8_t* sym_bits = bits + a * bps;
    for (int i = 0; i < m; ++i) {
      bi[i] = sym_bits[2 * i];
      bq[i] = sym_bits[2 * i + 1];
    }
    lev[a] = qam.pam_level_from_bits(bi);
    lev[a + n_tx] = qam.pam_level_from_bits(bq);
  }
  return lev;
}

}  // namespace rxlab
