#include <catch2/catch_amalgamated.hpp>

#include "rxlab/numerics.hpp"
#include "rxlab/rng.hpp"

using namespace rxlab;

namespace {

Mat random_mat(int rows, int cols, Rng& rng) {
  Mat a(rows, cols);
  for (Eigen::Index i = 0; i < a.size(); ++i) a(i) = rng.gaussian();
  return a;
}

CMat random_cmat(int rows, int cols, Rng& rng) {
  CMat a(rows, cols);
  for (Eigen::Index i = 0; i < a.size(); ++i)
    a(i) = cplx(rng.gaussian(), rng.gaussian());
  return a;
}

}  // namespace

TEST_CASE("regularized qr reproduces its defining identities") {
  Rng rng = Rng::derive(42, 0);
  for (int trial = 0; trial < 30; ++trial) {
    const int n = 2 + rng.uniform_int(5);
    const Mat a = random_mat(2 * n, n, rng);
    for (const double sigma : {0.0, 0.1, 1.0}) {
      const MmseQrd f = mmse_qrd(a, sigma);
      const Mat gram = f.q1.transpose() * f.q1 + f.q2.transpose() * f.q2;
      REQUIRE((gram - Mat::Identity(n, n)).cwiseAbs().maxCoeff() < 1e-10);
      REQUIRE((f.q1 * f.r - a).cwiseAbs().maxCoeff() < 1e-10);
      REQUIRE((f.q2 * f.r - sigma * Mat::Identity(n, n)).cwiseAbs().maxCoeff() < 1e-10);
    }
  }
}

TEST_CASE("qr r-factor has a positive diagonal and is upper triangular") {
  Rng rng = Rng::derive(43, 0);
  const Mat a = random_mat(8, 4, rng);
  const MmseQrd f = mmse_qrd(a, 0.25);
  for (int k = 0; k < 4; ++k) REQUIRE(f.r(k, k) > 0.0);
  for (int i = 1; i < 4; ++i)
    for (int j = 0; j < i; ++j) REQUIRE(f.r(i, j) == 0.0);
}

TEST_CASE("qr of an identity with no regularization is the identity") {
  const MmseQrd f = mmse_qrd(Mat(Mat::Identity(3, 3)), 0.0);
  REQUIRE((f.r - Mat::Identity(3, 3)).cwiseAbs().maxCoeff() < 1e-14);
  REQUIRE((f.q1 - Mat::Identity(3, 3)).cwiseAbs().maxCoeff() < 1e-14);
  REQUIRE(f.q2.cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("qr is deterministic") {
  Rng rng = Rng::derive(44, 0);
  const Mat a = random_mat(6, 3, rng);
  const MmseQrd f1 = mmse_qrd(a, 0.3);
  const MmseQrd f2 = mmse_qrd(a, 0.3);
  REQUIRE((f1.r - f2.r).cwiseAbs().maxCoeff() == 0.0);
  REQUIRE((f1.q1 - f2.q1).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("complex qr keeps a real positive diagonal") {
  Rng rng = Rng::derive(45, 0);
  const CMat a = random_cmat(4, 4, rng);
  const auto f = mmse_qrd(a, 0.5);
  for (int k = 0; k < 4; ++k) {
    REQUIRE(f.r(k, k).imag() == Catch::Approx(0.0).margin(1e-14));
    REQUIRE(f.r(k, k).real() > 0.0);
  }
  const CMat gram = f.q1.adjoint() * f.q1 + f.q2.adjoint() * f.q2;
  REQUIRE((gram - CMat::Identity(4, 4)).cwiseAbs().maxCoeff() < 1e-10);
  REQUIRE((f.q1 * f.r - a).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("real expansion preserves complex products") {
  Rng rng = Rng::derive(46, 0);
  const CMat h = random_cmat(3, 2, rng);
  CVec x(2);
  x << cplx(0.3, -0.7), cplx(-1.1, 0.4);
  const CVec y = h * x;
  const Vec y_re = to_real_model(h) * to_real_vec(x);
  REQUIRE((y_re - to_real_vec(y)).cwiseAbs().maxCoeff() < 1e-12);
  const CVec back = to_complex_vec(to_real_vec(y));
  REQUIRE((back - y).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("real expansion layout puts real parts first") {
  CMat h(1, 1);
  h(0, 0) = cplx(2.0, 3.0);
  const Mat hr = to_real_model(h);
  REQUIRE(hr.rows() == 2);
  REQUIRE(hr(0, 0) == 2.0);
  REQUIRE(hr(0, 1) == -3.0);
  REQUIRE(hr(1, 0) == 3.0);
  REQUIRE(hr(1, 1) == 2.0);
}

TEST_CASE("rotated observation matches the triangular model") {
  // Q1^T (H x + w) should equal R x + z with z = Q1^T w - sigma Q2^T x up to
  // exact algebra, so reconstructing it directly must agree.
  Rng rng = Rng::derive(47, 0);
  const Mat h = random_mat(4, 2, rng);
  const Vec x = random_mat(2, 1, rng).col(0);
  const Vec w = random_mat(4, 1, rng).col(0);
  const double sigma = 0.4;
  const MmseQrd f = mmse_qrd(h, sigma);
  const Vec y = h * x + w;
  const Vec r_obs = transform_received(f, y);
  const Vec z = f.q1.transpose() * w - sigma * f.q2.transpose() * x;
  REQUIRE((r_obs - (f.r * x + z)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("effective noise variance is preserved by the rotation") {
  // Per-component variance of z = Q1^T w - sigma Q2^T x stays sigma_w^2 when
  // E[w w^T] = sigma_w^2 I and E[x x^T] = sigma_x^2 I; empirical covariance
  // over many draws should approach sigma_w^2 I.
  Rng rng = Rng::derive(48, 0);
  const int n = 3;
  const Mat h = random_mat(2 * n, n, rng);
  const double sigma_w2 = 0.5, sigma_x2 = 1.0;
  const MmseQrd f = mmse_qrd(h, std::sqrt(sigma_w2 / sigma_x2));
  const int trials = 20000;
  Mat cov = Mat::Zero(n, n);
  for (int t = 0; t < trials; ++t) {
    Vec w(2 * n), x(n);
    for (int i = 0; i < 2 * n; ++i) w[i] = std::sqrt(sigma_w2) * rng.gaussian();
    for (int i = 0; i < n; ++i) x[i] = rng.gaussian();  // unit power
    const Vec z = f.q1.transpose() * w -
                  std::sqrt(sigma_w2 / sigma_x2) * f.q2.transpose() * x;
    cov += z * z.transpose();
  }
  cov /= trials;
  REQUIRE((cov - sigma_w2 * Mat::Identity(n, n)).cwiseAbs().maxCoeff() <
          0.05 * sigma_w2);
}
