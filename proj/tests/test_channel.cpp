#include <catch2/catch_amalgamated.hpp>

#include "rxlab/channel.hpp"
#include "rxlab/grid.hpp"

using namespace rxlab;

TEST_CASE("power delay profile is an exponential that sums to one") {
  const Vec pdp = power_delay_profile(4, 3.0);
  REQUIRE(pdp.size() == 4);
  REQUIRE(pdp.sum() == Catch::Approx(1.0).margin(1e-14));
  const double step = std::pow(10.0, -3.0 / 10.0);
  for (int l = 1; l < 4; ++l) REQUIRE(pdp[l] / pdp[l - 1] == Catch::Approx(step));
  const Vec flat = power_delay_profile(3, 0.0);
  for (int l = 0; l < 3; ++l) REQUIRE(flat[l] == Catch::Approx(1.0 / 3.0));
}

TEST_CASE("spatial correlation matrix is the exponential model") {
  const CMat r = exp_correlation(3, 0.5);
  REQUIRE(r(0, 0) == cplx(1.0, 0.0));
  REQUIRE(r(0, 1).real() == Catch::Approx(0.5));
  REQUIRE(r(1, 0).real() == Catch::Approx(0.5));
  REQUIRE(r(0, 2).real() == Catch::Approx(0.25));
  REQUIRE(r(2, 0).real() == Catch::Approx(0.25));
  REQUIRE(r.imag().cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("snr converts to noise variance against unit signal power") {
  REQUIRE(noise_var_for_snr_db(0.0) == Catch::Approx(1.0));
  REQUIRE(noise_var_for_snr_db(10.0) == Catch::Approx(0.1));
  REQUIRE(noise_var_for_snr_db(20.0) == Catch::Approx(0.01));
  REQUIRE(noise_var_for_snr_db(-10.0) == Catch::Approx(10.0));
}

TEST_CASE("frequency response is the dft of the taps") {
  ChannelConfig cfg;
  cfg.n_rx = 2;
  cfg.n_tx = 2;
  Rng rng = Rng::derive(10, 0);
  const Channel ch(cfg, rng);
  const auto& taps = ch.taps();
  REQUIRE(taps.size() == 4);
  for (const int sc : {0, 7, 31, 63}) {
    CMat want = CMat::Zero(2, 2);
    for (int l = 0; l < 4; ++l) {
      const double ang = -2.0 * kPi * sc * l / 64.0;
      want += taps[l] * cplx(std::cos(ang), std::sin(ang));
    }
    REQUIRE((ch.at(sc) - want).cwiseAbs().maxCoeff() < 1e-12);
  }
  // Subcarrier 0 sees the plain tap sum.
  CMat sum = CMat::Zero(2, 2);
  for (const auto& t : taps) sum += t;
  REQUIRE((ch.at(0) - sum).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("channel replay from stored taps is exact") {
  ChannelConfig cfg;
  Rng rng = Rng::derive(11, 0);
  const Channel ch(cfg, rng);
  const Channel replay(cfg, ch.taps());
  for (int sc = 0; sc < 48; ++sc)
    REQUIRE((ch.at(sc) - replay.at(sc)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("channel statistics match the configured covariances") {
  // Mean link energy over taps equals one (pdp normalized), and the spatial
  // correlation between adjacent rx antennas approaches alpha.
  ChannelConfig cfg;
  cfg.n_rx = 2;
  cfg.n_tx = 2;
  cfg.alpha = 0.6;
  cfg.beta = 0.0;
  Rng rng = Rng::derive(12, 0);
  const int trials = 20000;
  double energy = 0.0;
  cplx rx_corr = 0.0;
  double rx_pow = 0.0;
  for (int t = 0; t < trials; ++t) {
    const Channel ch(cfg, rng);
    for (const auto& tap : ch.taps()) {
      energy += tap.cwiseAbs2().sum() / 4.0;  // 4 links
      for (int n = 0; n < 2; ++n) {
        rx_corr += tap(0, n) * std::conj(tap(1, n));
        rx_pow += 0.5 * (std::norm(tap(0, n)) + std::norm(tap(1, n)));
      }
    }
  }
  REQUIRE(energy / trials == Catch::Approx(1.0).margin(0.02));
  REQUIRE(std::abs(rx_corr / rx_pow - cfg.alpha) < 0.02);
}

TEST_CASE("noiseless received grid is the channel times the tx grid") {
  const GridLayout g = build_grid(GridConfig{});
  const Constellation qam(4);
  ChannelConfig cc;
  Rng rng = Rng::derive(13, 0);
  const Channel ch(cc, rng);
  const auto bits = random_payload_bits(g, qam, rng);
  const TxGrid tx = fill_grid(g, qam, bits);
  const RxGrid rx = apply_channel(ch, tx, 0.0, rng);
  for (const int sc : {0, 17, 47}) {
    const CMat h = ch.at(sc);
    for (int sym = 0; sym < 14; ++sym) {
      CVec x(2), want(2);
      x << tx.at(0, sym, sc), tx.at(1, sym, sc);
      want = h * x;
      for (int r = 0; r < 2; ++r)
        REQUIRE(std::abs(rx.at(r, sym, sc) - want[r]) < 1e-12);
    }
  }
}

TEST_CASE("noise variance in the received grid tracks the request") {
  const GridLayout g = build_grid(GridConfig{});
  const Constellation qam(4);
  ChannelConfig cc;
  Rng rng = Rng::derive(14, 0);
  const Channel ch(cc, rng);
  TxGrid tx;
  tx.per_tx.assign(2, CMat::Zero(14, 48));  // silence: the rx grid is pure noise
  const double sigma_w2 = 0.25;
  double acc = 0.0;
  int count = 0;
  for (int rep = 0; rep < 30; ++rep) {
    const RxGrid rx = apply_channel(ch, tx, sigma_w2, rng);
    for (int r = 0; r < 2; ++r) {
      acc += rx.per_rx[r].cwiseAbs2().sum();
      count += 14 * 48;
    }
  }
  REQUIRE(acc / count == Catch::Approx(sigma_w2).epsilon(0.03));
}
