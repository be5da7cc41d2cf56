#pragma once

#include <string>
#include <vector>

#include "rxlab/baselines.hpp"
#include "rxlab/common.hpp"
#include "rxlab/detect_qrm.hpp"
#include "rxlab/neural.hpp"

namespace rxlab {

// Architecture and outer-loop knobs for the QRM-plus-GNN detector. n_amp is
// the real-model alphabet size (sqrt of the QAM order).
struct GnnConfig {
  int n_u = 8;
  int n_h1 = 64;
  int n_h2 = 32;
  int n_h3 = 64;
  int n_amp = 4;
  int t_outer = 2;
  int l_inner = 10;
  int k_best = 16;
  // moments feeds a_n = [mean, variance]; distribution feeds the whole
  // categorical prior row (width n_amp).
  enum class PriorFeature { kMoments, kDistribution };
  PriorFeature prior_feature = PriorFeature::kMoments;
  // Which detector supplies a_n each outer iteration.
  enum class PriorSource { kQrm, kEp };
  PriorSource prior_source = PriorSource::kQrm;
  int ep_iterations = 10;
  double ep_damping = 0.9;
  // Skip the networks entirely and return the first prior posterior; the
  // detector then equals the plain tree search by construction.
  bool debug_passthrough = false;

  int prior_width() const {
    return prior_feature == PriorFeature::kMoments ? 2 : n_amp;
  }
};

// The learned blocks. VN1 seeds node features from b_n; FN produces edge
// messages; the GRU integrates aggregated messages with the detector prior
// a_n; VN2 maps the hidden state back to node features; the readout emits
// per-node logits over the alphabet.
class GnnNet {
 public:
  GnnNet() = default;
  explicit GnnNet(const GnnConfig& cfg)
      : vn1_({3, cfg.n_h2, cfg.n_h3, cfg.n_u}),
        fn_({2 * cfg.n_u + 2, cfg.n_h1, cfg.n_h2, cfg.n_u}),
        gru_(cfg.n_u + cfg.prior_width(), cfg.n_h1),
        vn2_({cfg.n_h1, cfg.n_h2, cfg.n_h3, cfg.n_u}),
        readout_({cfg.n_u, cfg.n_h1, cfg.n_h2, cfg.n_amp}) {}

  void init(Rng& rng) {
    vn1_.init(rng);
    fn_.init(rng);
    gru_.init(rng);
    vn2_.init(rng);
    readout_.init(rng);
  }

  void collect(std::vector<ParamRef>& out, const std::string& prefix = "gnn") {
    vn1_.collect(out, prefix + ".vn1");
    fn_.collect(out, prefix + ".fn");
    gru_.collect(out, prefix + ".gru");
    vn2_.collect(out, prefix + ".vn2");
    readout_.collect(out, prefix + ".readout");
  }

  std::vector<ParamRef> params() {
    std::vector<ParamRef> out;
    collect(out);
    return out;
  }

  void clear_tape() {
    vn1_.clear_tape();
    fn_.clear_tape();
    gru_.clear_tape();
    vn2_.clear_tape();
    readout_.clear_tape();
  }

  Mlp vn1_, fn_;
  GruCell gru_;
  Mlp vn2_, readout_;
};

// Fixed per-batch tensors derived from the detection contexts. Node rows are
// batch-major (b * nv + n). Edge rows group by target node so aggregation is
// a contiguous block sum: edges of (b, target n) occupy rows
// [(b*nv + n)*(nv-1), (b*nv + n + 1)*(nv-1)), sources in ascending k.
struct GnnBatch {
  std::vector<const DetectionContext*> ctxs;
  int nv = 0;          // nodes per RE
  int deg = 0;         // nv - 1 incoming edges per node
  Mat bfeat;           // (B*nv) x 3: [c_n, G_nn, sigma_z2]
  Mat efeat;           // (B*nv*deg) x 2: [G_kn, sigma_z2]
  std::vector<int> src_row;  // edge -> source node row

  int batch_size() const { return static_cast<int>(ctxs.size()); }
  int node_rows() const { return batch_size() * nv; }
  int edge_rows() const { return node_rows() * deg; }
};

inline GnnBatch make_gnn_batch(const std::vector<const DetectionContext*>& ctxs) {
  if (ctxs.empty()) throw ConfigError("empty detection batch");
  GnnBatch b;
  b.ctxs = ctxs;
  b.nv = ctxs[0]->n_vars;
  b.deg = b.nv - 1;
  if (b.deg < 1) throw ConfigError("graph needs at least two variable nodes");
  const int bsz = static_cast<int>(ctxs.size());
  b.bfeat.resize(bsz * b.nv, 3);
  b.efeat.resize(bsz * b.nv * b.deg, 2);
  b.src_row.resize(b.efeat.rows());
  for (int i = 0; i < bsz; ++i) {
    const DetectionContext& c = *ctxs[i];
    if (c.n_vars != b.nv) throw ConfigError("mixed MIMO sizes in one batch");
    for (int n = 0; n < b.nv; ++n) {
      const int row = i * b.nv + n;
      b.bfeat(row, 0) = c.chat[n];
      b.bfeat(row, 1) = c.ghat(n, n);
      b.bfeat(row, 2) = c.sigma_z2;
      int e = row * b.deg;
      for (int k = 0; k < b.nv; ++k) {
        if (k == n) continue;
        b.efeat(e, 0) = c.ghat(k, n);
        b.efeat(e, 1) = c.sigma_z2;
        b.src_row[e] = i * b.nv + k;
        ++e;
      }
    }
  }
  return b;
}

// Detector priors a_n for every node row, from QRM or EP run with the given
// per-node prior table.
inline Mat prior_features(const GnnBatch& batch, const GnnConfig& cfg,
                          const Mat& priors) {
  Mat a(batch.node_rows(), cfg.prior_width());
  for (int i = 0; i < batch.batch_size(); ++i) {
    const DetectionContext& ctx = *batch.ctxs[i];
    const Mat pri = priors.middleRows(i * batch.nv, batch.nv);
    Mat post;
    Vec xhat, vhat;
    if (cfg.prior_source == GnnConfig::PriorSource::kQrm) {
      QrmResult r = qrm_detect(ctx, pri, cfg.k_best);
      post = std::move(r.posterior);
      xhat = std::move(r.xhat);
      vhat = std::move(r.vhat);
    } else {
      EpResult r = ep_detect_real(ctx.h_re, ctx.y_re, ctx.sigma_z2 / 2.0, ctx.pam, pri,
                                  cfg.ep_iterations, cfg.ep_damping);
      post = std::move(r.posterior);
      xhat = std::move(r.xhat);
      vhat = std::move(r.vhat);
    }
    for (int n = 0; n < batch.nv; ++n) {
      const int row = i * batch.nv + n;
      if (cfg.prior_feature == GnnConfig::PriorFeature::kMoments) {
        a(row, 0) = xhat[n];
        a(row, 1) = vhat[n];
      } else {
        a.row(row) = post.row(n);
      }
    }
  }
  return a;
}

// First-pass detector posterior (uniform priors), used both by the debug
// passthrough and to seed a_n.
inline Mat first_pass_posterior(const GnnBatch& batch, const GnnConfig& cfg) {
  Mat post(batch.node_rows(), cfg.n_amp);
  const Mat uni = uniform_priors(batch.nv, cfg.n_amp);
  for (int i = 0; i < batch.batch_size(); ++i) {
    const DetectionContext& ctx = *batch.ctxs[i];
    if (cfg.prior_source == GnnConfig::PriorSource::kQrm) {
      post.middleRows(i * batch.nv, batch.nv) = qrm_detect(ctx, uni, cfg.k_best).posterior;
    } else {
      post.middleRows(i * batch.nv, batch.nv) =
          ep_detect_real(ctx.h_re, ctx.y_re, ctx.sigma_z2 / 2.0, ctx.pam, uni,
                         cfg.ep_iterations, cfg.ep_damping)
              .posterior;
    }
  }
  return post;
}

// L rounds of FN/VN message passing from fixed features and prior features,
// then the readout softmax. With record=true every sub-network pushes its
// tape so qrmnet_backward can run afterwards (latest forward first).
inline Mat gnn_forward(GnnNet& net, const GnnConfig& cfg, const GnnBatch& batch,
                       const Mat& afeat, bool record) {
  const int rows = batch.node_rows();
  const int erows = batch.edge_rows();
  Mat u = net.vn1_.forward(batch.bfeat, record);
  Mat g = Mat::Zero(rows, cfg.n_h1);
  for (int l = 0; l < cfg.l_inner; ++l) {
    Mat ein(erows, 2 * cfg.n_u + 2);
    for (int e = 0; e < erows; ++e) {
      ein.block(e, 0, 1, cfg.n_u) = u.row(batch.src_row[e]);
      ein.block(e, cfg.n_u, 1, cfg.n_u) = u.row(e / batch.deg);
      ein.block(e, 2 * cfg.n_u, 1, 2) = batch.efeat.row(e);
    }
    const Mat msg = net.fn_.forward(ein, record);
    Mat gin(rows, cfg.n_u + cfg.prior_width());
    for (int r = 0; r < rows; ++r) {
      Vec agg = Vec::Zero(cfg.n_u);
      for (int d = 0; d < batch.deg; ++d) agg += msg.row(r * batch.deg + d).transpose();
      gin.block(r, 0, 1, cfg.n_u) = agg.transpose();
    }
    gin.rightCols(cfg.prior_width()) = afeat;
    g = net.gru_.forward(g, gin, record);
    u = net.vn2_.forward(g, record);
  }
  const Mat logits = net.readout_.forward(u, record);
  return softmax_rows(logits);
}

// Reverse pass through one recorded gnn_forward. dlogits is the gradient at
// the readout input logits (for cross-entropy: softmax minus one-hot).
// Gradients stop at the prior features.
inline void gnn_backward(GnnNet& net, const GnnConfig& cfg, const GnnBatch& batch,
                         const Mat& dlogits) {
  const int rows = batch.node_rows();
  Mat du = net.readout_.backward(dlogits);
  Mat gcarry = Mat::Zero(rows, cfg.n_h1);
  for (int l = cfg.l_inner - 1; l >= 0; --l) {
    const Mat dg = net.vn2_.backward(du) + gcarry;
    auto [dh, dgin] = net.gru_.backward(dg);
    gcarry = std::move(dh);
    Mat dmsg(batch.edge_rows(), cfg.n_u);
    for (int e = 0; e < batch.edge_rows(); ++e)
      dmsg.row(e) = dgin.block(e / batch.deg, 0, 1, cfg.n_u);
    const Mat dein = net.fn_.backward(dmsg);
    du = Mat::Zero(rows, cfg.n_u);
    for (int e = 0; e < batch.edge_rows(); ++e) {
      du.row(batch.src_row[e]) += dein.block(e, 0, 1, cfg.n_u);
      du.row(e / batch.deg) += dein.block(e, cfg.n_u, 1, cfg.n_u);
    }
  }
  net.vn1_.backward(du);
}

// Outer loop: detector pass -> a_n -> L GNN rounds -> posterior; repeat with
// the GNN posterior as the detector prior. Returns the per-t posteriors
// (raw softmax rows); the last one is the detector output.
struct QrmnetForward {
  std::vector<Mat> p_t;

  const Mat& final_posterior() const { return p_t.back(); }
};

inline QrmnetForward qrmnet_forward(GnnNet& net, const GnnConfig& cfg,
                                    const GnnBatch& batch, bool record,
                                    const Mat* first_pass = nullptr) {
  QrmnetForward out;
  if (cfg.debug_passthrough) {
    out.p_t.push_back(first_pass ? *first_pass : first_pass_posterior(batch, cfg));
    return out;
  }
  Mat priors = first_pass ? Mat() : uniform_priors(batch.node_rows(), cfg.n_amp);
  for (int t = 0; t < cfg.t_outer; ++t) {
    Mat a;
    if (t == 0 && first_pass) {
      // Seeding from a precomputed uniform-prior detector pass.
      a = Mat(batch.node_rows(), cfg.prior_width());
      if (cfg.prior_feature == GnnConfig::PriorFeature::kDistribution) {
        a = *first_pass;
      } else {
        for (int i = 0; i < batch.batch_size(); ++i) {
          Vec xh, vh;
          const Mat block = first_pass->middleRows(i * batch.nv, batch.nv);
          posterior_moments(block, batch.ctxs[i]->pam, xh, vh);
          for (int n = 0; n < batch.nv; ++n) {
            a(i * batch.nv + n, 0) = xh[n];
            a(i * batch.nv + n, 1) = vh[n];
          }
        }
      }
    } else {
      a = prior_features(batch, cfg, priors);
    }
    Mat p = gnn_forward(net, cfg, batch, a, record);
    priors = p;
    out.p_t.push_back(std::move(p));
  }
  return out;
}

// Spec-shaped single-RE entry point: floored, normalized posterior rows.
inline Mat qrmnet_detect(const DetectionContext& ctx, GnnNet& net, GnnConfig cfg,
                         int k_best, int t_outer, int l_inner) {
  cfg.k_best = k_best;
  cfg.t_outer = t_outer;
  cfg.l_inner = l_inner;
  const GnnBatch batch = make_gnn_batch({&ctx});
  Mat post = qrmnet_forward(net, cfg, batch, false).final_posterior();
  // The passthrough posterior is a detector output already floored once;
  // re-flooring would perturb it at the ulp level.
  if (!cfg.debug_passthrough) floor_normalize_rows(post);
  return post;
}

inline Mat qrmnet_detect_batch(const std::vector<const DetectionContext*>& ctxs,
                               GnnNet& net, const GnnConfig& cfg,
                               const Mat* first_pass = nullptr) {
  const GnnBatch batch = make_gnn_batch(ctxs);
  Mat post = qrmnet_forward(net, cfg, batch, false, first_pass).final_posterior();
  if (!cfg.debug_passthrough) floor_normalize_rows(post);
  return post;
}

// Training loss over one recorded forward: summed cross-entropy of every
// outer iteration's posterior against the truth, averaged per RE and per
// outer iteration. Backward accumulates into the net's gradients.
inline double qrmnet_loss_and_grad(GnnNet& net, const GnnConfig& cfg,
                                   const GnnBatch& batch,
                                   const std::vector<int>& labels,
                                   const Mat* first_pass = nullptr) {
  if (static_cast<int>(labels.size()) != batch.node_rows())
    throw ConfigError("label count mismatch");
  if (cfg.debug_passthrough)
    throw ConfigError("passthrough mode has no trainable path");
  const QrmnetForward fwd = qrmnet_forward(net, cfg, batch, true, first_pass);
  double loss = 0.0;
  for (const Mat& p : fwd.p_t) loss += cross_entropy_sum(p, labels);
  // Backward in reverse outer order so weight-shared tapes pop correctly.
  for (int t = static_cast<int>(fwd.p_t.size()) - 1; t >= 0; --t) {
    Mat dlogits = fwd.p_t[t];
    for (int r = 0; r < dlogits.rows(); ++r) dlogits(r, labels[r]) -= 1.0;
    gnn_backward(net, cfg, batch, dlogits);
  }
  return loss / (batch.batch_size() * static_cast<double>(fwd.p_t.size()));
}

}  // namespace rxlab
