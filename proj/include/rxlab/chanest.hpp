#pragma once

#include <cmath>
#include <vector>

#include "rxlab/channel.hpp"
#include "rxlab/common.hpp"
#include "rxlab/grid.hpp"
#include "rxlab/neural.hpp"

namespace rxlab {

// LS channel estimates at the pilot positions, one vector per (rx, tx) link,
// aligned with GridLayout::pilots[tx].
struct PilotTensor {
  int n_rx = 0, n_tx = 0, n_pilots = 0;
  std::vector<std::vector<CVec>> h;  // [rx][tx]

  const CVec& link(int rx, int tx) const { return h[rx][tx]; }
};

inline PilotTensor ls_estimate(const RxGrid& rx, const GridLayout& g) {
  PilotTensor t;
  t.n_rx = static_cast<int>(rx.per_rx.size());
  t.n_tx = g.cfg.n_tx;
  t.n_pilots = g.cfg.n_pilots;
  t.h.assign(t.n_rx, std::vector<CVec>(t.n_tx));
  for (int m = 0; m < t.n_rx; ++m)
    for (int n = 0; n < t.n_tx; ++n) {
      CVec v(t.n_pilots);
      for (int p = 0; p < t.n_pilots; ++p) {
        const cplx pv = g.pilot_values[n][p];
        if (std::abs(pv) == 0.0) throw NumericError("zero-amplitude pilot");
        const auto& pos = g.pilots[n][p];
        v[p] = rx.per_rx[m](pos.sym, pos.sc) / pv;
      }
      t.h[m][n] = std::move(v);
    }
  return t;
}

// Full-grid channel estimate (or label) per link.
struct ChannelGrid {
  int n_rx = 0, n_tx = 0, n_sym = 0, n_sc = 0;
  std::vector<std::vector<CMat>> h;  // [rx][tx], each n_sym x n_sc

  CMat matrix_at(int sym, int sc) const {
    CMat m(n_rx, n_tx);
    for (int r = 0; r < n_rx; ++r)
      for (int t = 0; t < n_tx; ++t) m(r, t) = h[r][t](sym, sc);
    return m;
  }

  static ChannelGrid zeros(int n_rx, int n_tx, int n_sym, int n_sc) {
    ChannelGrid g;
    g.n_rx = n_rx;
    g.n_tx = n_tx;
    g.n_sym = n_sym;
    g.n_sc = n_sc;
    g.h.assign(n_rx, std::vector<CMat>(n_tx, CMat::Zero(n_sym, n_sc)));
    return g;
  }
};

// Ground truth on the whole grid (the channel is static over the TTI).
inline ChannelGrid channel_label(const Channel& ch, int n_sym, int n_sc) {
  const auto& cfg = ch.config();
  ChannelGrid g = ChannelGrid::zeros(cfg.n_rx, cfg.n_tx, n_sym, n_sc);
  for (int sc = 0; sc < n_sc; ++sc) {
    const CMat hm = ch.at(sc);
    for (int r = 0; r < cfg.n_rx; ++r)
      for (int t = 0; t < cfg.n_tx; ++t)
        for (int sym = 0; sym < n_sym; ++sym) g.h[r][t](sym, sc) = hm(r, t);
  }
  return g;
}

// Gaussian interpolation weights from each tx antenna's pilot positions to
// every grid position. Rows are normalized, so constants are reproduced
// exactly. Target row index is sym * n_subcarriers + sc.
struct InterpKernel {
  std::vector<Mat> w;  // [tx], (n_sym*n_sc) x n_pilots
  double s_f = 4.0, s_t = 4.0;
};

inline InterpKernel gaussian_kernel(const GridLayout& g, double s_f = 4.0,
                                    double s_t = 4.0) {
  if (!(s_f > 0.0) || !(s_t > 0.0)) throw ConfigError("kernel bandwidth must be positive");
  InterpKernel k;
  k.s_f = s_f;
  k.s_t = s_t;
  const int n_sym = g.cfg.n_symbols, n_sc = g.cfg.n_subcarriers;
  k.w.reserve(g.cfg.n_tx);
  for (int tx = 0; tx < g.cfg.n_tx; ++tx) {
    Mat w(n_sym * n_sc, g.cfg.n_pilots);
    for (int sym = 0; sym < n_sym; ++sym)
      for (int sc = 0; sc < n_sc; ++sc) {
        const int row = sym * n_sc + sc;
        double sum = 0.0;
        for (int p = 0; p < g.cfg.n_pilots; ++p) {
          const auto& pos = g.pilots[tx][p];
          const double df = sc - pos.sc;
          const double dt = sym - pos.sym;
          const double v =
              std::exp(-df * df / (2.0 * s_f * s_f) - dt * dt / (2.0 * s_t * s_t));
          w(row, p) = v;
          sum += v;
        }
        w.row(row) /= sum;
      }
    k.w.push_back(std::move(w));
  }
  return k;
}

inline ChannelGrid interpolate(const PilotTensor& hp, const InterpKernel& k,
                               const GridLayout& g) {
  const int n_sym = g.cfg.n_symbols, n_sc = g.cfg.n_subcarriers;
  ChannelGrid out = ChannelGrid::zeros(hp.n_rx, hp.n_tx, n_sym, n_sc);
  for (int m = 0; m < hp.n_rx; ++m)
    for (int n = 0; n < hp.n_tx; ++n) {
      const CVec full = k.w[n] * hp.h[m][n];
      for (int sym = 0; sym < n_sym; ++sym)
        for (int sc = 0; sc < n_sc; ++sc) out.h[m][n](sym, sc) = full[sym * n_sc + sc];
    }
  return out;
}

// Analytic frequency correlation of the tapped channel: E[H(sc+d) H(sc)^*]
// is the DFT of the power-delay profile.
inline cplx freq_correlation(const Vec& pdp, int fft_size, int delta) {
  cplx r = 0.0;
  for (int l = 0; l < pdp.size(); ++l) {
    const double ph = -2.0 * kPi * delta * l / fft_size;
    r += pdp[l] * cplx(std::cos(ph), std::sin(ph));
  }
  return r;
}

// Per-link LMMSE from the LS pilot estimates using the true second-order
// statistics: h_hat = R_dp (R_pp + sigma_w2 I)^-1 h_ls. Unit-modulus pilots
// make the LS noise variance exactly sigma_w2.
inline ChannelGrid lmmse_estimate(const PilotTensor& hp, const GridLayout& g,
                                  const Vec& pdp, int fft_size, double sigma_w2) {
  const int n_sym = g.cfg.n_symbols, n_sc = g.cfg.n_subcarriers;
  const int n_p = g.cfg.n_pilots;
  ChannelGrid out = ChannelGrid::zeros(hp.n_rx, hp.n_tx, n_sym, n_sc);
  for (int n = 0; n < hp.n_tx; ++n) {
    CMat rpp(n_p, n_p);
    for (int i = 0; i < n_p; ++i)
      for (int j = 0; j < n_p; ++j)
        rpp(i, j) = freq_correlation(pdp, fft_size, g.pilots[n][i].sc - g.pilots[n][j].sc);
    rpp.diagonal().array() += sigma_w2;
    const Eigen::LDLT<CMat> solver(rpp);

    CMat rdp(n_sc, n_p);
    for (int sc = 0; sc < n_sc; ++sc)
      for (int j = 0; j < n_p; ++j)
        rdp(sc, j) = freq_correlation(pdp, fft_size, sc - g.pilots[n][j].sc);

    for (int m = 0; m < hp.n_rx; ++m) {
      const CVec filt = rdp * solver.solve(hp.h[m][n]);
      for (int sym = 0; sym < n_sym; ++sym)
        for (int sc = 0; sc < n_sc; ++sc) out.h[m][n](sym, sc) = filt[sc];
    }
  }
  return out;
}

inline constexpr double kNmseFloorDb = -100.0;

inline double nmse_db(const CVec& est, const CVec& label) {
  if (est.size() != label.size()) throw ConfigError("nmse: size mismatch");
  const double denom = label.squaredNorm();
  if (denom == 0.0) throw NumericError("nmse: zero-norm label");
  const double ratio = (est - label).squaredNorm() / denom;
  if (ratio <= 1e-10) return kNmseFloorDb;
  return 10.0 * std::log10(ratio);
}

// NMSE over a set of grid positions, all links pooled.
inline double nmse_db(const ChannelGrid& est, const ChannelGrid& label,
                      const std::vector<RePos>& at) {
  const std::size_t n_link = static_cast<std::size_t>(est.n_rx) * est.n_tx;
  CVec e(static_cast<Eigen::Index>(at.size() * n_link));
  CVec l(e.size());
  Eigen::Index k = 0;
  for (int m = 0; m < est.n_rx; ++m)
    for (int n = 0; n < est.n_tx; ++n)
      for (const auto& pos : at) {
        e[k] = est.h[m][n](pos.sym, pos.sc);
        l[k] = label.h[m][n](pos.sym, pos.sc);
        ++k;
      }
  return nmse_db(e, l);
}

// Three-stage convolutional refiner operating on single-channel planes; the
// complex grid of each link travels as two independent real planes sharing
// the weights. Kernel sizes 9, 1, 5 with shape-preserving padding.
class Srcnn {
 public:
  Srcnn() = default;
  Srcnn(int n_h1, int n_h2)
      : c1_(1, n_h1, 9, 4), c2_(n_h1, n_h2, 1, 0), c3_(n_h2, 1, 5, 2),
        drop1_(0.3), drop2_(0.3) {}

  void init(Rng& rng) {
    c1_.init(rng);
    c2_.init(rng);
    c3_.init(rng);
  }

  Tensor4 forward(const Tensor4& in, bool training, Rng& rng, bool record) {
    Tensor4 a = c1_.forward(in, record);
    relu_fwd(a, record ? &mask1_ : nullptr);
    a = drop1_.forward(a, training, rng, record);
    a = c2_.forward(a, record);
    relu_fwd(a, record ? &mask2_ : nullptr);
    a = drop2_.forward(a, training, rng, record);
    return c3_.forward(a, record);
  }

  Tensor4 backward(const Tensor4& dout) {
    Tensor4 d = c3_.backward(dout);
    d = drop2_.backward(d);
    relu_bwd(d, mask2_);
    d = c2_.backward(d);
    d = drop1_.backward(d);
    relu_bwd(d, mask1_);
    return c1_.backward(d);
  }

  void collect(std::vector<ParamRef>& out, const std::string& prefix = "srcnn") {
    c1_.collect(out, prefix + ".c1");
    c2_.collect(out, prefix + ".c2");
    c3_.collect(out, prefix + ".c3");
  }

  std::vector<ParamRef> params() {
    std::vector<ParamRef> out;
    collect(out);
    return out;
  }

  void clear_tape() {
    c1_.clear_tape();
    c2_.clear_tape();
    c3_.clear_tape();
    drop1_.clear_tape();
    drop2_.clear_tape();
    mask1_.pop_all();
    mask2_.pop_all();
  }

 private:
  struct MaskStack {
    std::vector<Vec> stack;
    void pop_all() { stack.clear(); }
  };

  static void relu_fwd(Tensor4& a, MaskStack* masks) {
    if (masks) {
      Vec m(a.data.size());
      for (Eigen::Index i = 0; i < a.data.size(); ++i)
        m[i] = a.data[i] > 0.0 ? 1.0 : 0.0;
      masks->stack.push_back(std::move(m));
    }
    a.data = a.data.cwiseMax(0.0);
  }

  static void relu_bwd(Tensor4& d, MaskStack& masks) {
    if (masks.stack.empty()) throw NumericError("srcnn: backward without forward");
    d.data = d.data.cwiseProduct(masks.stack.back());
    masks.stack.pop_back();
  }

  Conv2d c1_, c2_, c3_;
  Dropout drop1_, drop2_;
  MaskStack mask1_, mask2_;
};

// Pack per-link complex grids into single-channel planes, two per link
// (real then imaginary), link order row-major over (rx, tx).
inline Tensor4 pack_planes(const ChannelGrid& g) {
  Tensor4 t(2 * g.n_rx * g.n_tx, 1, g.n_sym, g.n_sc);
  int plane = 0;
  for (int m = 0; m < g.n_rx; ++m)
    for (int n = 0; n < g.n_tx; ++n) {
      for (int sym = 0; sym < g.n_sym; ++sym)
        for (int sc = 0; sc < g.n_sc; ++sc) {
          t.at(plane, 0, sym, sc) = g.h[m][n](sym, sc).real();
          t.at(plane + 1, 0, sym, sc) = g.h[m][n](sym, sc).imag();
        }
      plane += 2;
    }
  return t;
}

inline ChannelGrid unpack_planes(const Tensor4& t, int n_rx, int n_tx) {
  if (t.n != 2 * n_rx * n_tx || t.c != 1) throw ConfigError("plane count mismatch");
  ChannelGrid g = ChannelGrid::zeros(n_rx, n_tx, t.h, t.w);
  int plane = 0;
  for (int m = 0; m < n_rx; ++m)
    for (int n = 0; n < n_tx; ++n) {
      for (int sym = 0; sym < t.h; ++sym)
        for (int sc = 0; sc < t.w; ++sc)
          g.h[m][n](sym, sc) =
              cplx(t.at(plane, 0, sym, sc), t.at(plane + 1, 0, sym, sc));
      plane += 2;
    }
  return g;
}

inline ChannelGrid srcnn_refine(const ChannelGrid& in, Srcnn& net, Rng& rng) {
  const Tensor4 out = net.forward(pack_planes(in), false, rng, false);
  return unpack_planes(out, in.n_rx, in.n_tx);
}

}  // namespace rxlab
