#pragma once

#include <cmath>
#include <functional>
#include <ostream>
#include <string>
#include <vector>

#include "rxlab/baselines.hpp"
#include "rxlab/chanest.hpp"
#include "rxlab/dataset.hpp"
#include "rxlab/detect_gnn.hpp"
#include "rxlab/detect_qrm.hpp"
#include "rxlab/flops.hpp"
#include "rxlab/grid.hpp"
#include "rxlab/sweep.hpp"

namespace rxlab {

// A spread of detection problems: both constellations, SNRs from deep noise
// to near-noiseless, ideal and correlated channels, perfect and interpolated
// channel knowledge. Detector invariants are checked over all of it.
struct CorpusItem {
  DetectionContext ctx;
  int qam_order = 4;
};

inline std::vector<CorpusItem> selftest_corpus(std::uint64_t seed = 0x636f72ull) {
  std::vector<CorpusItem> out;
  Rng rng = Rng::derive(seed, 0);
  const double snrs[] = {-10.0, 0.0, 10.0, 20.0, 30.0, 50.0};
  for (const int order : {4, 16}) {
    const Constellation qam(order);
    for (const double snr : snrs) {
      const double sigma_w2 = noise_var_for_snr_db(snr);
      for (const double corr : {0.0, 0.95}) {
        ChannelConfig cc;
        cc.n_rx = 2;
        cc.n_tx = 2;
        cc.alpha = corr;
        cc.beta = corr;
        for (int i = 0; i < 10; ++i) {
          const Channel ch(cc, rng);
          const CMat h = ch.at(i % cc.fft_size);
          CVec x(2);
          const auto& pts = qam.points();
          for (int n = 0; n < 2; ++n) x[n] = pts[rng.uniform_int(order)];
          CVec y = h * x;
          for (int r = 0; r < 2; ++r) y[r] += rng.cgaussian(sigma_w2);
          // Every other item detects against a deliberately wrong channel
          // estimate, the kind interpolation produces.
          CMat hest = h;
          if (i % 2 == 1)
            for (int r = 0; r < 2; ++r)
              for (int n = 0; n < 2; ++n)
                hest(r, n) += 0.1 * cplx(rng.gaussian(), rng.gaussian());
          out.push_back({build_context(y, hest, sigma_w2, qam), order});
        }
      }
    }
  }
  return out;
}

struct SelftestReport {
  int passed = 0;
  int failed = 0;
};

// Fast invariant battery: one line per check, nonzero failure count if any
// check trips. Meant as a smoke test for a fresh build, not the full
// acceptance run.
inline SelftestReport run_selftest(std::ostream& os) {
  SelftestReport rep;
  const auto check = [&](const std::string& name, bool ok) {
    os << (ok ? "ok   " : "FAIL ") << name << "\n";
    (ok ? rep.passed : rep.failed)++;
  };

  {
    Rng rng = Rng::derive(7, 0);
    double worst = 0.0;
    for (int trial = 0; trial < 50; ++trial) {
      const int n = 2 + rng.uniform_int(5);
      Mat a(2 * n, n);
      for (Eigen::Index i = 0; i < a.size(); ++i) a(i) = rng.gaussian();
      for (const double sigma : {0.0, 0.3, 1.0}) {
        const MmseQrd f = mmse_qrd(a, sigma);
        worst = std::max(worst, (f.q1.transpose() * f.q1 +
                                 f.q2.transpose() * f.q2 -
                                 Mat::Identity(n, n)).cwiseAbs().maxCoeff());
        worst = std::max(worst, (f.q1 * f.r - a).cwiseAbs().maxCoeff());
        worst = std::max(worst, (f.q2 * f.r - sigma * Mat::Identity(n, n))
                                    .cwiseAbs().maxCoeff());
      }
    }
    check("qr factor identities", worst < 1e-10);
  }

  {
    double worst = 0.0;
    Rng rng = Rng::derive(8, 0);
    for (const int order : {4, 16}) {
      const Constellation qam(order);
      for (int trial = 0; trial < 20; ++trial) {
        CMat h(2, 2);
        for (Eigen::Index i = 0; i < h.size(); ++i)
          h(i) = cplx(rng.gaussian(), rng.gaussian()) / std::sqrt(2.0);
        CVec y(2);
        for (int r = 0; r < 2; ++r) y[r] = cplx(rng.gaussian(), rng.gaussian());
        const auto ctx = build_context(y, h, 0.1, qam);
        const Mat pri = uniform_priors(ctx.n_vars, qam.pam_size());
        const int k_full = static_cast<int>(
            std::pow(qam.pam_size(), ctx.n_vars));
        const Mat a = qrm_detect(ctx, pri, k_full).posterior;
        const Mat b = ml_marginals(ctx, pri).posterior;
        worst = std::max(worst, (a - b).cwiseAbs().maxCoeff());
      }
    }
    check("full-width tree search equals exhaustive marginals", worst < 1e-9);
  }

  {
    // One transmit antenna makes the Gaussian factor diagonal, so EP's
    // moment matching is exact and must agree with enumeration. EP works on
    // the plain likelihood, so the enumeration context is built with a huge
    // symbol energy to switch off the MMSE regularization term.
    double worst = 0.0;
    Rng rng = Rng::derive(9, 0);
    const Constellation qam(16);
    for (int trial = 0; trial < 20; ++trial) {
      CMat h(2, 1);
      for (Eigen::Index i = 0; i < h.size(); ++i)
        h(i) = cplx(rng.gaussian(), rng.gaussian());
      CVec y(2);
      for (int r = 0; r < 2; ++r) y[r] = cplx(rng.gaussian(), rng.gaussian());
      const Mat pri = uniform_priors(2, qam.pam_size());
      const Mat a = ep_detect(y, h, 0.2, qam, pri).posterior;
      const auto raw = build_context(y, h, 0.2, qam, /*sigma_x2=*/1e30);
      const Mat b = ml_marginals(raw, pri).posterior;
      worst = std::max(worst, (a - b).cwiseAbs().maxCoeff());
    }
    check("ep matches enumeration on one antenna", worst < 1e-6);
  }

  {
    const auto corpus = selftest_corpus();
    bool ok = true;
    GnnConfig gc;
    gc.n_amp = 2;
    GnnNet net4, net16;
    {
      GnnConfig g4 = gc;
      g4.n_amp = 2;
      net4 = GnnNet(g4);
      Rng r1 = Rng::derive(11, 0);
      net4.init(r1);
      GnnConfig g16 = gc;
      g16.n_amp = 4;
      net16 = GnnNet(g16);
      Rng r2 = Rng::derive(11, 1);
      net16.init(r2);
    }
    const auto posterior_ok = [](const Mat& p) {
      for (Eigen::Index n = 0; n < p.rows(); ++n) {
        if (std::abs(p.row(n).sum() - 1.0) > 1e-12) return false;
        for (Eigen::Index a = 0; a < p.cols(); ++a)
          if (!(p(n, a) >= kPosteriorFloor)) return false;
      }
      return true;
    };
    for (const auto& item : corpus) {
      const Constellation qam(item.qam_order);
      const int na = qam.pam_size();
      const Mat pri = uniform_priors(item.ctx.n_vars, na);
      for (const int k : {1, 4, 16}) {
        if (!posterior_ok(qrm_detect(item.ctx, pri, k).posterior)) ok = false;
      }
      if (!posterior_ok(ml_marginals(item.ctx, pri).posterior)) ok = false;
      if (!posterior_ok(ep_detect_real(item.ctx.h_re, item.ctx.y_re,
                                       item.ctx.sigma_z2 / 2.0, item.ctx.pam, pri)
                            .posterior))
        ok = false;
      GnnConfig g = gc;
      g.n_amp = na;
      g.k_best = 4;
      g.t_outer = 2;
      g.l_inner = 2;
      GnnNet& net = na == 2 ? net4 : net16;
      if (!posterior_ok(qrmnet_detect(item.ctx, net, g, g.k_best, g.t_outer,
                                      g.l_inner)))
        ok = false;
    }
    check("posterior rows normalized and floored across corpus", ok);
  }

  {
    const Constellation q4(4), q16(16);
    bool ok = true;
    double e4 = 0.0, e16 = 0.0;
    for (const auto& p : q4.points()) e4 += std::norm(p);
    for (const auto& p : q16.points()) e16 += std::norm(p);
    ok = ok && std::abs(e4 / 4 - 1.0) < 1e-12 && std::abs(e16 / 16 - 1.0) < 1e-12;
    check("constellations have unit average energy", ok);
  }

  {
    GridConfig gc;
    const GridLayout g = build_grid(gc);
    bool ok = static_cast<int>(g.payload.size()) == 480;
    for (int tx = 0; tx < gc.n_tx && ok; ++tx)
      ok = static_cast<int>(g.pilots[tx].size()) == gc.n_pilots;
    check("grid carves 32 pilots and 480 payload elements", ok);
  }

  {
    const Vec pdp = power_delay_profile(4, 3.0);
    bool ok = std::abs(pdp.sum() - 1.0) < 1e-12 && pdp.minCoeff() > 0.0;
    for (int l = 1; l < 4; ++l) ok = ok && pdp[l] < pdp[l - 1];
    check("power delay profile normalized and decaying", ok);
  }

  {
    const GridLayout g = build_grid(GridConfig{});
    const InterpKernel k = gaussian_kernel(g);
    bool ok = true;
    for (int tx = 0; tx < g.cfg.n_tx; ++tx)
      for (Eigen::Index r = 0; r < k.w[tx].rows(); ++r)
        if (std::abs(k.w[tx].row(r).sum() - 1.0) > 1e-9) ok = false;
    check("interpolation kernel rows sum to one", ok);
  }

  {
    const FlopTable t = flop_table(48, 14, 2, 16, 8, 64, 32, 64, 10);
    check("per-block flop ledger matches the closed forms",
          t.srcnn[0] == 1368576 && t.total_order == 1500160);
  }

  os << rep.passed << " passed, " << rep.failed << " failed\n";
  return rep;
}

}  // namespace rxlab
