#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "rxlab/common.hpp"
#include "rxlab/constellation.hpp"
#include "rxlab/detect_qrm.hpp"

namespace rxlab {

inline constexpr std::uint64_t kMlStateGuard = 1ull << 20;

struct MlResult {
  Mat posterior;             // n_vars x n_amp
  Vec xhat;
  Vec vhat;
  std::vector<int> map_path;  // level per dimension of the MAP vector
  double map_metric = 0.0;
};

// Exact marginal posteriors on the triangular model by full enumeration:
// weight(x) = exp(-|robs - R x|^2 / sigma_z2) * prod_n p_n(x_n). Implemented
// as a mixed-radix counter over level vectors, independent of the tree search,
// so the two can cross-check each other.
inline MlResult ml_marginals(const DetectionContext& ctx, const Mat& priors) {
  const int nv = ctx.n_vars;
  const int na = static_cast<int>(ctx.pam.size());
  if (!(ctx.sigma_z2 > 0.0)) throw ConfigError("detection needs positive noise variance");
  if (priors.rows() != nv || priors.cols() != na)
    throw ConfigError("prior table shape mismatch");

  std::uint64_t states = 1;
  for (int n = 0; n < nv; ++n) {
    states *= static_cast<std::uint64_t>(na);
    if (states > kMlStateGuard)
      throw GuardError("ml_marginals: " + std::to_string(na) + "^" +
                       std::to_string(nv) + " states exceeds the enumeration guard");
  }

  Mat logp(nv, na);
  for (int n = 0; n < nv; ++n)
    for (int a = 0; a < na; ++a)
      logp(n, a) = std::log(std::max(priors(n, a), 1e-300));

  std::vector<int> lev(nv, 0);
  const auto metric_of = [&](const std::vector<int>& l) {
    double m = 0.0;
    for (int k = 0; k < nv; ++k) {
      double e = ctx.robs[k];
      for (int j = k; j < nv; ++j) e -= ctx.rmat(k, j) * ctx.pam[l[j]];
      m += e * e / ctx.sigma_z2 - logp(k, l[k]);
    }
    return m;
  };
  const auto advance = [&](std::vector<int>& l) {
    for (int n = 0; n < nv; ++n) {
      if (++l[n] < na) return true;
      l[n] = 0;
    }
    return false;
  };

  // Pass 1: minimum metric (for stable exponentials) and the MAP vector.
  double mmin = std::numeric_limits<double>::infinity();
  std::vector<int> map_path(nv, 0);
  do {
    const double m = metric_of(lev);
    if (m < mmin) {
      mmin = m;
      map_path = lev;
    }
  } while (advance(lev));

  // Pass 2: accumulate marginal weights.
  Mat post = Mat::Zero(nv, na);
  std::fill(lev.begin(), lev.end(), 0);
  do {
    const double w = std::exp(-(metric_of(lev) - mmin));
    for (int n = 0; n < nv; ++n) post(n, lev[n]) += w;
  } while (advance(lev));

  for (int n = 0; n < nv; ++n) post.row(n) /= post.row(n).sum();
  floor_normalize_rows(post);

  MlResult out;
  out.posterior = std::move(post);
  out.map_path = std::move(map_path);
  out.map_metric = mmin;
  posterior_moments(out.posterior, ctx.pam, out.xhat, out.vhat);
  return out;
}

inline MlResult ml_marginals(const CVec& y, const CMat& h, double sigma_w2,
                             const Constellation& qam, const Mat& priors) {
  return ml_marginals(build_context(y, h, sigma_w2, qam), priors);
}

struct EpResult {
  Mat posterior;  // n_vars x n_amp
  Vec xhat;
  Vec vhat;
  int iterations_run = 0;
  bool converged = false;
};

// Expectation propagation on the real model y = Hx + w with per-dimension
// noise variance noise_var. Gaussian sites in natural parameters (lambda,
// gamma); each sweep recomputes the joint Gaussian, forms per-node cavities,
// moment-matches against the discrete prior, and applies a damped site
// update. Non-positive cavity or site precisions are skipped, and tilted
// variances are clipped at 1e-9.
inline EpResult ep_detect_real(const Mat& h, const Vec& y, double noise_var,
                               const Vec& pam, const Mat& priors,
                               int iterations = 10, double damping = 0.9) {
  const int nv = static_cast<int>(h.cols());
  const int na = static_cast<int>(pam.size());
  if (!(noise_var > 0.0)) throw ConfigError("noise variance must be positive");
  if (!(damping > 0.0 && damping <= 1.0)) throw ConfigError("damping must be in (0,1]");
  if (iterations < 1) throw ConfigError("need at least one EP iteration");
  if (priors.rows() != nv || priors.cols() != na)
    throw ConfigError("prior table shape mismatch");

  constexpr double kVarClip = 1e-9;
  double prior_var = 0.0;
  for (int a = 0; a < na; ++a) prior_var += pam[a] * pam[a];
  prior_var /= na;

  const Mat a0 = h.transpose() * h / noise_var;
  const Vec b0 = h.transpose() * y / noise_var;

  Vec lambda = Vec::Constant(nv, 1.0 / prior_var);
  Vec gamma = Vec::Zero(nv);

  Mat logp(nv, na);
  for (int n = 0; n < nv; ++n)
    for (int a = 0; a < na; ++a)
      logp(n, a) = std::log(std::max(priors(n, a), 1e-300));

  // Tilted categorical for one node given its cavity; returns (mean, var).
  Vec trow(na);
  const auto tilted = [&](int n, double cav_mean, double cav_var, double& mu,
                          double& var) {
    double lmax = -std::numeric_limits<double>::infinity();
    for (int a = 0; a < na; ++a) {
      const double d = pam[a] - cav_mean;
      trow[a] = logp(n, a) - d * d / (2.0 * cav_var);
      lmax = std::max(lmax, trow[a]);
    }
    double sum = 0.0;
    for (int a = 0; a < na; ++a) {
      trow[a] = std::exp(trow[a] - lmax);
      sum += trow[a];
    }
    trow /= sum;
    double m1 = 0.0, m2 = 0.0;
    for (int a = 0; a < na; ++a) {
      m1 += trow[a] * pam[a];
      m2 += trow[a] * pam[a] * pam[a];
    }
    mu = m1;
    var = std::max(m2 - m1 * m1, kVarClip);
  };

  EpResult out;
  Vec mu_prev = Vec::Zero(nv);
  Mat sigma(nv, nv);
  Vec mu(nv);
  for (int it = 0; it < iterations; ++it) {
    Mat prec = a0;
    prec.diagonal() += lambda;
    sigma = prec.ldlt().solve(Mat::Identity(nv, nv));
    mu = sigma * (b0 + gamma);

    for (int n = 0; n < nv; ++n) {
      const double cav_prec = 1.0 / sigma(n, n) - lambda[n];
      if (cav_prec <= 0.0) continue;
      const double cav_var = 1.0 / cav_prec;
      const double cav_mean = (mu[n] / sigma(n, n) - gamma[n]) * cav_var;
      double tm, tv;
      tilted(n, cav_mean, cav_var, tm, tv);
      const double lam_new = 1.0 / tv - cav_prec;
      const double gam_new = tm / tv - cav_mean * cav_prec;
      if (lam_new <= 0.0) continue;
      lambda[n] = damping * lam_new + (1.0 - damping) * lambda[n];
      gamma[n] = damping * gam_new + (1.0 - damping) * gamma[n];
    }

    out.iterations_run = it + 1;
    if (it > 0 && (mu - mu_prev).cwiseAbs().maxCoeff() < 1e-8) {
      out.converged = true;
      break;
    }
    mu_prev = mu;
  }

  // Final read-out from the last iterate's cavities.
  Mat prec = a0;
  prec.diagonal() += lambda;
  sigma = prec.ldlt().solve(Mat::Identity(nv, nv));
  mu = sigma * (b0 + gamma);
  Mat post(nv, na);
  Vec xhat(nv), vhat(nv);
  for (int n = 0; n < nv; ++n) {
    double cav_prec = 1.0 / sigma(n, n) - lambda[n];
    double cav_var, cav_mean;
    if (cav_prec > 0.0) {
      cav_var = 1.0 / cav_prec;
      cav_mean = (mu[n] / sigma(n, n) - gamma[n]) * cav_var;
    } else {
      cav_var = sigma(n, n);
      cav_mean = mu[n];
    }
    double tm, tv;
    tilted(n, cav_mean, cav_var, tm, tv);
    post.row(n) = trow.transpose();
    xhat[n] = tm;
    vhat[n] = tv;
  }
  floor_normalize_rows(post);
  out.posterior = std::move(post);
  out.xhat = std::move(xhat);
  out.vhat = std::move(vhat);
  return out;
}

inline EpResult ep_detect(const CVec& y, const CMat& h, double sigma_w2,
                          const Constellation& qam, const Mat& priors,
                          int iterations = 10, double damping = 0.9) {
  const Mat h_re = to_real_model(h);
  const Vec y_re = to_real_vec(y);
  const Vec pam = Eigen::Map<const Vec>(qam.pam().data(), qam.pam_size());
  return ep_detect_real(h_re, y_re, sigma_w2 / 2.0, pam, priors, iterations, damping);
}

}  // namespace rxlab
