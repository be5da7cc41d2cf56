#pragma once

#include <cmath>
#include <vector>

#include "rxlab/common.hpp"
#include "rxlab/grid.hpp"
#include "rxlab/rng.hpp"

namespace rxlab {

struct ChannelConfig {
  int n_rx = 2;
  int n_tx = 2;
  double alpha = 0.0;  // rx correlation, rho^|i-j|
  double beta = 0.0;   // tx correlation
  int n_taps = 4;
  double tap_decay_db = 3.0;
  int fft_size = 64;
};

inline Vec power_delay_profile(int n_taps, double decay_db) {
  if (n_taps <= 0) throw ConfigError("need at least one channel tap");
  Vec pdp(n_taps);
  for (int l = 0; l < n_taps; ++l) pdp[l] = std::pow(10.0, -decay_db * l / 10.0);
  pdp /= pdp.sum();
  return pdp;
}

// Exponential correlation matrix rho^|i-j|.
inline CMat exp_correlation(int n, double rho) {
  if (rho < 0.0 || rho >= 1.0) throw ConfigError("correlation must be in [0,1)");
  CMat r(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) r(i, j) = std::pow(rho, std::abs(i - j));
  return r;
}

// One TTI realization: static over the slot, frequency-selective across tones.
class Channel {
 public:
  Channel(const ChannelConfig& cfg, Rng& rng) : cfg_(cfg) {
    const Vec pdp = power_delay_profile(cfg.n_taps, cfg.tap_decay_db);
    const CMat l_rx = Eigen::LLT<CMat>(exp_correlation(cfg.n_rx, cfg.alpha)).matrixL();
    const CMat l_tx = Eigen::LLT<CMat>(exp_correlation(cfg.n_tx, cfg.beta)).matrixL();
    taps_.reserve(cfg.n_taps);
    for (int l = 0; l < cfg.n_taps; ++l) {
      CMat w(cfg.n_rx, cfg.n_tx);
      for (int i = 0; i < cfg.n_rx; ++i)
        for (int j = 0; j < cfg.n_tx; ++j) w(i, j) = rng.cgaussian(1.0);
      taps_.push_back(std::sqrt(pdp[l]) * l_rx * w * l_tx.transpose());
    }
  }

  // Rebuild from stored tap matrices (dataset replay).
  Channel(const ChannelConfig& cfg, std::vector<CMat> taps)
      : cfg_(cfg), taps_(std::move(taps)) {
    if (static_cast<int>(taps_.size()) != cfg.n_taps)
      throw ConfigError("tap count mismatch");
    for (const auto& t : taps_)
      if (t.rows() != cfg.n_rx || t.cols() != cfg.n_tx)
        throw ConfigError("tap matrix shape mismatch");
  }

  // Frequency response at one subcarrier (same for all OFDM symbols).
  CMat at(int subcarrier) const {
    CMat h = CMat::Zero(cfg_.n_rx, cfg_.n_tx);
    for (int l = 0; l < static_cast<int>(taps_.size()); ++l) {
      const double ph = -2.0 * kPi * subcarrier * l / cfg_.fft_size;
      h += taps_[l] * cplx(std::cos(ph), std::sin(ph));
    }
    return h;
  }

  const ChannelConfig& config() const { return cfg_; }
  const std::vector<CMat>& taps() const { return taps_; }

 private:
  ChannelConfig cfg_;
  std::vector<CMat> taps_;
};

inline double noise_var_for_snr_db(double snr_db) {
  return std::pow(10.0, -snr_db / 10.0);
}

// Received grid per rx antenna: y = sum_tx H(sc) x_tx + w, w ~ CN(0, sigma_w2).
struct RxGrid {
  std::vector<CMat> per_rx;  // n_symbols x n_subcarriers each

  const cplx& at(int rx, int sym, int sc) const { return per_rx[rx](sym, sc); }
};

inline RxGrid apply_channel(const Channel& ch, const TxGrid& tx, double sigma_w2,
                            Rng& rng) {
  const auto& cfg = ch.config();
  if (static_cast<int>(tx.per_tx.size()) != cfg.n_tx)
    throw ConfigError("tx grid antenna count mismatch");
  const int n_sym = static_cast<int>(tx.per_tx[0].rows());
  const int n_sc = static_cast<int>(tx.per_tx[0].cols());

  RxGrid rx;
  rx.per_rx.assign(cfg.n_rx, CMat::Zero(n_sym, n_sc));
  for (int sc = 0; sc < n_sc; ++sc) {
    const CMat h = ch.at(sc);
    for (int sym = 0; sym < n_sym; ++sym) {
      CVec x(cfg.n_tx);
      for (int a = 0; a < cfg.n_tx; ++a) x[a] = tx.per_tx[a](sym, sc);
      const CVec y = h * x;
      for (int r = 0; r < cfg.n_rx; ++r) rx.per_rx[r](sym, sc) = y[r];
    }
  }
  if (sigma_w2 > 0.0) {
    for (int r = 0; r < cfg.n_rx; ++r)
      for (int sym = 0; sym < n_sym; ++sym)
        for (int sc = 0; sc < n_sc; ++sc)
          rx.per_rx[r](sym, sc) += rng.cgaussian(sigma_w2);
  }
  return rx;
}

}  // namespace rxlab
