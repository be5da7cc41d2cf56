#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

#include "rxlab/common.hpp"

namespace rxlab {

// Square M-QAM with Gray labeling, normalized to unit average symbol energy.
// A symbol is two independent sqrt(M)-PAM dimensions; of the log2(M) bits of a
// symbol, even-indexed bits map to the in-phase dimension and odd-indexed bits
// to the quadrature dimension. Per dimension the amplitude of the m bits
// (b0..b_{m-1}) is the nested rule
//   a = (1-2*b0) * (2^{m-1} - (1-2*b1) * (2^{m-2} - ... (1-2*b_{m-1}) * 1))
// scaled so that E|symbol|^2 = 1. This is the conventional Gray layout: points
// adjacent along either axis differ in exactly one bit.
class Constellation {
 public:
  explicit Constellation(int order) : order_(order) {
    int root = static_cast<int>(std::lround(std::sqrt(double(order))));
    if (order < 4 || root * root != order)
      throw ConfigError("constellation order must be a perfect square >= 4, got " +
                        std::to_string(order));
    pam_size_ = root;
    pam_bits_ = 0;
    while ((1 << pam_bits_) < pam_size_) ++pam_bits_;
    if ((1 << pam_bits_) != pam_size_)
      throw ConfigError("constellation order must be a power of 4");

    // Unnormalized amplitudes are the odd integers +-1..+-(sqrt(M)-1).
    double energy = 0.0;
    for (int a = 1; a < pam_size_; a += 2) energy += 2.0 * a * a;
    energy /= pam_size_;
    scale_ = 1.0 / std::sqrt(2.0 * energy);

    pam_.resize(pam_size_);
    for (int i = 0; i < pam_size_; ++i)
      pam_[i] = scale_ * (2 * i - (pam_size_ - 1));

    // level -> bits lookup, built by inverting the amplitude rule.
    bits_of_level_.assign(pam_size_, 0);
    for (int pattern = 0; pattern < pam_size_; ++pattern) {
      std::array<std::uint8_t, 8> b{};
      for (int i = 0; i < pam_bits_; ++i) b[i] = (pattern >> (pam_bits_ - 1 - i)) & 1;
      const int amp = pam_amp_unnormalized(b.data(), pam_bits_);
      const int level = (amp + pam_size_ - 1) / 2;
      bits_of_level_[level] = static_cast<std::uint8_t>(pattern);
    }
  }

  int order() const { return order_; }
  int bits_per_symbol() const { return 2 * pam_bits_; }
  int pam_size() const { return pam_size_; }
  int pam_bits() const { return pam_bits_; }
  // Per real dimension; equals 1/2 by the unit-energy normalization.
  double pam_energy() const {
    double e = 0.0;
    for (double a : pam_) e += a * a;
    return e / pam_size_;
  }
  const std::vector<double>& pam() const { return pam_; }

  // Amplitude rule on raw bit values, before scaling.
  static int pam_amp_unnormalized(const std::uint8_t* b, int m) {
    int inner = 1;
    for (int i = m - 1; i >= 1; --i) inner = (1 << (m - i)) - (1 - 2 * b[i]) * inner;
    return (1 - 2 * b[0]) * inner;
  }

  int pam_level_from_bits(const std::uint8_t* b) const {
    const int amp = pam_amp_unnormalized(b, pam_bits_);
    return (amp + pam_size_ - 1) / 2;
  }

  void pam_bits_from_level(int level, std::uint8_t* out) const {
    const std::uint8_t pattern = bits_of_level_[level];
    for (int i = 0; i < pam_bits_; ++i) out[i] = (pattern >> (pam_bits_ - 1 - i)) & 1;
  }

  // bits[0..2m): even indices feed I, odd indices feed Q.
  cplx map_symbol(const std::uint8_t* bits) const {
    std::array<std::uint8_t, 8> bi{}, bq{};
    for (int i = 0; i < pam_bits_; ++i) {
      bi[i] = bits[2 * i];
      bq[i] = bits[2 * i + 1];
    }
    return {pam_[pam_level_from_bits(bi.data())], pam_[pam_level_from_bits(bq.data())]};
  }

  void bits_from_levels(int i_level, int q_level, std::uint8_t* out) const {
    std::array<std::uint8_t, 8> bi{}, bq{};
    pam_bits_from_level(i_level, bi.data());
    pam_bits_from_level(q_level, bq.data());
    for (int i = 0; i < pam_bits_; ++i) {
      out[2 * i] = bi[i];
      out[2 * i + 1] = bq[i];
    }
  }

  int nearest_pam_level(double x) const {
    // Uniformly spaced levels: direct quantization.
    const double step = 2.0 * scale_;
    int idx = static_cast<int>(std::lround((x - pam_[0]) / step));
    if (idx < 0) idx = 0;
    if (idx >= pam_size_) idx = pam_size_ - 1;
    return idx;
  }

  std::vector<cplx> points() const {
    std::vector<cplx> pts;
    pts.reserve(order_);
    std::vector<std::uint8_t> bits(bits_per_symbol());
    for (int v = 0; v < order_; ++v) {
      for (int i = 0; i < bits_per_symbol(); ++i)
        bits[i] = (v >> (bits_per_symbol() - 1 - i)) & 1;
      pts.push_back(map_symbol(bits.data()));
    }
    return pts;
  }

  // Bit count must be a multiple of bits_per_symbol().
  std::vector<cplx> map_bits(const std::vector<std::uint8_t>& bits) const {
    const int bps = bits_per_symbol();
    if (bits.size() % bps != 0)
      throw ConfigError("bit count not a multiple of bits per symbol");
    std::vector<cplx> out(bits.size() / bps);
    for (std::size_t s = 0; s < out.size(); ++s) out[s] = map_symbol(&bits[s * bps]);
    return out;
  }

 private:
  int order_;
  int pam_size_;
  int pam_bits_;
  double scale_;
  std::vector<double> pam_;
  std::vector<std::uint8_t> bits_of_level_;
};

}  // namespace rxlab
