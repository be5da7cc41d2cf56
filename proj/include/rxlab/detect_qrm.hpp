#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "rxlab/common.hpp"
#include "rxlab/constellation.hpp"
#include "rxlab/numerics.hpp"

namespace rxlab {

// Triangularized real-valued detection problem for one resource element.
// sigma_z2 keeps the complex-model noise variance; in the real model each
// dimension carries half of it, which cancels the 1/2 of the Gaussian
// exponent, so metrics below divide squared residuals by sigma_z2 directly.
struct DetectionContext {
  Mat rmat;   // n_vars x n_vars, upper triangular R-hat
  Vec robs;   // n_vars, rotated observation Q1^T y
  Mat ghat;   // R^T R
  Vec chat;   // R^T robs
  double sigma_z2 = 0.0;
  Vec pam;    // per-dimension alphabet, ascending
  int n_vars = 0;
  Mat h_re;   // 2Nr x 2Nt real model, for detectors bypassing the QR stage
  Vec y_re;   // 2Nr
  MmseQrd qrd;
};

inline DetectionContext build_context(const CVec& y, const CMat& h, double sigma_w2,
                                      const Constellation& qam, double sigma_x2 = 1.0) {
  if (!(sigma_w2 >= 0.0)) throw ConfigError("noise variance must be nonnegative");
  if (!(sigma_x2 > 0.0)) throw ConfigError("symbol energy must be positive");
  if (h.rows() != y.size()) throw ConfigError("channel/observation size mismatch");
  DetectionContext ctx;
  ctx.h_re = to_real_model(h);
  ctx.y_re = to_real_vec(y);
  ctx.sigma_z2 = sigma_w2;
  ctx.n_vars = static_cast<int>(ctx.h_re.cols());
  ctx.qrd = mmse_qrd(ctx.h_re, std::sqrt(sigma_w2 / sigma_x2));
  ctx.rmat = ctx.qrd.r;
  ctx.robs = ctx.qrd.q1.transpose() * ctx.y_re;
  ctx.ghat = ctx.rmat.transpose() * ctx.rmat;
  ctx.chat = ctx.rmat.transpose() * ctx.robs;
  ctx.pam = Eigen::Map<const Vec>(qam.pam().data(), qam.pam_size());
  return ctx;
}

inline Mat uniform_priors(int n_vars, int n_amp) {
  return Mat::Constant(n_vars, n_amp, 1.0 / n_amp);
}

struct QrmResult {
  Mat posterior;               // n_vars x n_amp, floored and row-normalized
  Vec xhat;                    // posterior mean per dimension
  Vec vhat;                    // posterior variance per dimension
  std::vector<int> best_path;  // level index per dimension of the best survivor
  double best_metric = 0.0;
};

inline void posterior_moments(const Mat& post, const Vec& pam, Vec& xhat, Vec& vhat) {
  const Eigen::Index nv = post.rows();
  xhat.resize(nv);
  vhat.resize(nv);
  for (Eigen::Index n = 0; n < nv; ++n) {
    double m1 = 0.0, m2 = 0.0;
    for (Eigen::Index a = 0; a < post.cols(); ++a) {
      m1 += post(n, a) * pam[a];
      m2 += post(n, a) * pam[a] * pam[a];
    }
    xhat[n] = m1;
    vhat[n] = std::max(m2 - m1 * m1, 0.0);
  }
}

inline Eigen::VectorXi argmax_levels(const Mat& post) {
  Eigen::VectorXi idx(post.rows());
  for (Eigen::Index n = 0; n < post.rows(); ++n) {
    Eigen::Index best;
    post.row(n).maxCoeff(&best);
    idx[n] = static_cast<int>(best);
  }
  return idx;
}

// K-best breadth-first tree search on the triangular system, processing
// dimensions from n_vars-1 down to 0 (back-substitution order). The path
// metric accumulates
//   |robs_n - sum_{j>=n} R_nj x_j|^2 / sigma_z2 - log p_n(x_n),
// i.e. negative log of likelihood times prior, so with K covering the whole
// tree the survivor weights marginalize to the exact symbol posteriors.
// Ties break on the path's level sequence so results are reproducible.
// max_log swaps the survivor sum for a max when forming marginals.
inline QrmResult qrm_detect(const DetectionContext& ctx, const Mat& priors, int k_best,
                            bool max_log = false) {
  const int nv = ctx.n_vars;
  const int na = static_cast<int>(ctx.pam.size());
  if (k_best < 1) throw ConfigError("k_best must be at least 1");
  if (!(ctx.sigma_z2 > 0.0)) throw ConfigError("detection needs positive noise variance");
  if (priors.rows() != nv || priors.cols() != na)
    throw ConfigError("prior table shape mismatch");

  Mat logp(nv, na);
  for (int n = 0; n < nv; ++n)
    for (int a = 0; a < na; ++a)
      logp(n, a) = std::log(std::max(priors(n, a), 1e-300));

  // levels[i] is the choice at dimension nv-1-i (extension order).
  struct Path {
    double metric;
    std::vector<std::int8_t> levels;
  };
  const auto path_less = [](const Path& a, const Path& b) {
    if (a.metric != b.metric) return a.metric < b.metric;
    return std::lexicographical_compare(a.levels.begin(), a.levels.end(),
                                        b.levels.begin(), b.levels.end());
  };

  std::vector<Path> cur{{0.0, {}}}, next;
  for (int n = nv - 1; n >= 0; --n) {
    next.clear();
    next.reserve(cur.size() * na);
    for (const auto& p : cur) {
      double interf = 0.0;
      for (int j = n + 1; j < nv; ++j)
        interf += ctx.rmat(n, j) * ctx.pam[p.levels[nv - 1 - j]];
      const double base = ctx.robs[n] - interf;
      for (int a = 0; a < na; ++a) {
        const double e = base - ctx.rmat(n, n) * ctx.pam[a];
        Path q;
        q.metric = p.metric + e * e / ctx.sigma_z2 - logp(n, a);
        q.levels = p.levels;
        q.levels.push_back(static_cast<std::int8_t>(a));
        next.push_back(std::move(q));
      }
    }
    std::sort(next.begin(), next.end(), path_less);
    if (static_cast<int>(next.size()) > k_best) next.resize(k_best);
    cur.swap(next);
  }

  QrmResult out;
  out.best_metric = cur[0].metric;
  out.best_path.resize(nv);
  for (int n = 0; n < nv; ++n) out.best_path[n] = cur[0].levels[nv - 1 - n];

  Mat post = Mat::Zero(nv, na);
  for (const auto& p : cur) {
    const double w = std::exp(-(p.metric - out.best_metric));
    for (int n = 0; n < nv; ++n) {
      const int a = p.levels[nv - 1 - n];
      if (max_log)
        post(n, a) = std::max(post(n, a), w);
      else
        post(n, a) += w;
    }
  }
  for (int n = 0; n < nv; ++n) post.row(n) /= post.row(n).sum();
  floor_normalize_rows(post);
  out.posterior = std::move(post);
  posterior_moments(out.posterior, ctx.pam, out.xhat, out.vhat);
  return out;
}

}  // namespace rxlab
