#pragma once

#include <cmath>

#include "rxlab/common.hpp"

namespace rxlab {

// QR of the regularized stack [A; sigma*I]. With A = Q1 R and Q2 = sigma * R^-1
// this turns MMSE filtering into back-substitution on an upper-triangular
// system, which is what the tree search consumes.
template <typename MatT>
struct MmseQrdT {
  MatT q1;  // rows(A) x cols(A), orthonormal together with q2
  MatT q2;  // cols(A) x cols(A)
  MatT r;   // cols(A) x cols(A), upper triangular, nonnegative real diagonal
  double sigma = 0.0;
};

using MmseQrd = MmseQrdT<Mat>;
using CMmseQrd = MmseQrdT<CMat>;

template <typename MatT>
MmseQrdT<MatT> mmse_qrd(const MatT& a, double sigma) {
  if (!(sigma >= 0.0)) throw ConfigError("mmse_qrd: sigma must be >= 0");
  const Eigen::Index n = a.rows();
  const Eigen::Index nv = a.cols();
  if (nv == 0) throw ConfigError("mmse_qrd: empty matrix");

  MatT aug(n + nv, nv);
  aug.topRows(n) = a;
  aug.bottomRows(nv) = sigma * MatT::Identity(nv, nv);

  Eigen::HouseholderQR<MatT> qr(aug);
  MatT q = qr.householderQ() * MatT::Identity(n + nv, nv);
  MatT r = MatT(qr.matrixQR().topRows(nv).template triangularView<Eigen::Upper>());

  // Householder leaves the diagonal phase arbitrary; rotate it onto the
  // positive real axis so R is unique and back-substitution metrics are
  // reproducible across backends.
  for (Eigen::Index k = 0; k < nv; ++k) {
    const auto d = r(k, k);
    const double mag = std::abs(d);
    if (mag > 0.0) {
      const auto s = d / mag;
      r.row(k) *= Eigen::numext::conj(s);
      q.col(k) *= s;
    }
  }

  MmseQrdT<MatT> out;
  out.q1 = q.topRows(n);
  out.q2 = q.bottomRows(nv);
  out.r = std::move(r);
  out.sigma = sigma;
  return out;
}

// r = Q1^H y, the triangular-domain observation.
template <typename MatT, typename VecT>
VecT transform_received(const MmseQrdT<MatT>& qrd, const VecT& y) {
  return qrd.q1.adjoint() * y;
}

// Real-valued equivalent of y = Hx + w: dims [0, n) carry real parts and
// [n, 2n) imaginary parts, so complex symbol j occupies dims (j, j + n_tx).
inline Mat to_real_model(const CMat& h) {
  Mat hr(2 * h.rows(), 2 * h.cols());
  hr.topLeftCorner(h.rows(), h.cols()) = h.real();
  hr.topRightCorner(h.rows(), h.cols()) = -h.imag();
  hr.bottomLeftCorner(h.rows(), h.cols()) = h.imag();
  hr.bottomRightCorner(h.rows(), h.cols()) = h.real();
  return hr;
}

inline Vec to_real_vec(const CVec& y) {
  Vec v(2 * y.size());
  v.head(y.size()) = y.real();
  v.tail(y.size()) = y.imag();
  return v;
}

inline CVec to_complex_vec(const Vec& v) {
  if (v.size() % 2 != 0) throw ConfigError("real vector length must be even");
  const Eigen::Index n = v.size() / 2;
  CVec y(n);
  for (Eigen::Index i = 0; i < n; ++i) y[i] = cplx(v[i], v[i + n]);
  return y;
}

}  // namespace rxlab
