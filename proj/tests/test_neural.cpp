#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <functional>

#include "rxlab/neural.hpp"
#include "rxlab/weights.hpp"

using namespace rxlab;

namespace {

Mat random_mat(int rows, int cols, Rng& rng) {
  Mat a(rows, cols);
  for (Eigen::Index i = 0; i < a.size(); ++i) a(i) = rng.gaussian();
  return a;
}

template <typename Module>
std::vector<ParamRef> params_of(Module& m) {
  std::vector<ParamRef> out;
  m.collect(out, "m");
  return out;
}

// Central-difference check of every parameter against the recorded gradient.
// loss() must run an unrecorded forward through the module and return the
// scalar; the grads must already hold the analytic result when called.
double worst_param_error(const std::vector<ParamRef>& params,
                         const std::function<double()>& loss) {
  const double h = 1e-6;
  double worst = 0.0;
  for (const auto& p : params) {
    for (Eigen::Index i = 0; i < p.value->size(); ++i) {
      const double keep = (*p.value)(i);
      (*p.value)(i) = keep + h;
      const double up = loss();
      (*p.value)(i) = keep - h;
      const double dn = loss();
      (*p.value)(i) = keep;
      const double num = (up - dn) / (2.0 * h);
      const double ana = (*p.grad)(i);
      worst = std::max(worst, std::abs(num - ana) /
                                  std::max(1.0, std::abs(num) + std::abs(ana)));
    }
  }
  return worst;
}

}  // namespace

TEST_CASE("dense layer gradients match central differences") {
  Rng rng = Rng::derive(21, 0);
  Dense d(3, 4);
  d.init(rng);
  const Mat x = random_mat(5, 3, rng);
  const Mat m = random_mat(5, 4, rng);  // fixed cotangent
  const auto params = params_of(d);

  const auto loss_only = [&] { return (d.forward(x, false).array() * m.array()).sum(); };
  zero_grads(params);
  (void)d.forward(x, true);
  const Mat dx = d.backward(m);
  REQUIRE(worst_param_error(params, loss_only) < 1e-6);

  // Input gradient.
  double worst = 0.0;
  Mat xx = x;
  const double h = 1e-6;
  for (Eigen::Index i = 0; i < xx.size(); ++i) {
    const double keep = xx(i);
    xx(i) = keep + h;
    const double up = (d.forward(xx, false).array() * m.array()).sum();
    xx(i) = keep - h;
    const double dn = (d.forward(xx, false).array() * m.array()).sum();
    xx(i) = keep;
    worst = std::max(worst, std::abs((up - dn) / (2 * h) - dx(i)));
  }
  REQUIRE(worst < 1e-6);
}

TEST_CASE("mlp gradients match central differences") {
  Rng rng = Rng::derive(22, 0);
  Mlp net({3, 8, 5, 2});
  net.init(rng);
  const Mat x = random_mat(4, 3, rng);
  const Mat m = random_mat(4, 2, rng);
  const auto params = params_of(net);

  const auto loss_only = [&] {
    return (net.forward(x, false).array() * m.array()).sum();
  };
  zero_grads(params);
  (void)net.forward(x, true);
  net.backward(m);
  REQUIRE(worst_param_error(params, loss_only) < 1e-6);
}

TEST_CASE("gru gradients match central differences") {
  Rng rng = Rng::derive(23, 0);
  GruCell gru(3, 4);
  gru.init(rng);
  const Mat h0 = random_mat(5, 4, rng);
  const Mat x = random_mat(5, 3, rng);
  const Mat m = random_mat(5, 4, rng);
  const auto params = params_of(gru);

  const auto loss_only = [&] {
    return (gru.forward(h0, x, false).array() * m.array()).sum();
  };
  zero_grads(params);
  (void)gru.forward(h0, x, true);
  const auto [dh, dx] = gru.backward(m);
  REQUIRE(worst_param_error(params, loss_only) < 1e-6);

  const double h = 1e-6;
  double worst = 0.0;
  Mat hh = h0;
  for (Eigen::Index i = 0; i < hh.size(); ++i) {
    const double keep = hh(i);
    hh(i) = keep + h;
    const double up = (gru.forward(hh, x, false).array() * m.array()).sum();
    hh(i) = keep - h;
    const double dn = (gru.forward(hh, x, false).array() * m.array()).sum();
    hh(i) = keep;
    worst = std::max(worst, std::abs((up - dn) / (2 * h) - dh(i)));
  }
  Mat xx = x;
  for (Eigen::Index i = 0; i < xx.size(); ++i) {
    const double keep = xx(i);
    xx(i) = keep + h;
    const double up = (gru.forward(h0, xx, false).array() * m.array()).sum();
    xx(i) = keep - h;
    const double dn = (gru.forward(h0, xx, false).array() * m.array()).sum();
    xx(i) = keep;
    worst = std::max(worst, std::abs((up - dn) / (2 * h) - dx(i)));
  }
  REQUIRE(worst < 1e-6);
}

TEST_CASE("conv gradients match central differences") {
  Rng rng = Rng::derive(24, 0);
  Conv2d conv(2, 3, 3, 1);
  conv.init(rng);
  Tensor4 in(2, 2, 5, 4);
  for (Eigen::Index i = 0; i < in.data.size(); ++i) in.data[i] = rng.gaussian();
  Tensor4 m = conv.forward(in, false);
  for (Eigen::Index i = 0; i < m.data.size(); ++i) m.data[i] = rng.gaussian();
  const auto params = params_of(conv);

  const auto loss_only = [&] {
    return conv.forward(in, false).data.cwiseProduct(m.data).sum();
  };
  zero_grads(params);
  (void)conv.forward(in, true);
  const Tensor4 din = conv.backward(m);
  REQUIRE(worst_param_error(params, loss_only) < 1e-6);

  const double h = 1e-6;
  double worst = 0.0;
  for (Eigen::Index i = 0; i < in.data.size(); ++i) {
    const double keep = in.data[i];
    in.data[i] = keep + h;
    const double up = conv.forward(in, false).data.cwiseProduct(m.data).sum();
    in.data[i] = keep - h;
    const double dn = conv.forward(in, false).data.cwiseProduct(m.data).sum();
    in.data[i] = keep;
    worst = std::max(worst, std::abs((up - dn) / (2 * h) - din.data[i]));
  }
  REQUIRE(worst < 1e-6);
}

TEST_CASE("repeated recorded forwards accumulate shared-weight gradients") {
  // Two recorded passes through the same layer, backwards popped in reverse:
  // the gradient equals the sum of the per-pass gradients.
  Rng rng = Rng::derive(25, 0);
  Dense d(2, 2);
  d.init(rng);
  const Mat x1 = random_mat(3, 2, rng), x2 = random_mat(3, 2, rng);
  const Mat m1 = random_mat(3, 2, rng), m2 = random_mat(3, 2, rng);
  const auto params = params_of(d);

  zero_grads(params);
  (void)d.forward(x1, true);
  (void)d.forward(x2, true);
  d.backward(m2);
  d.backward(m1);
  const Mat shared = *params[0].grad;

  zero_grads(params);
  (void)d.forward(x1, true);
  d.backward(m1);
  const Mat g1 = *params[0].grad;
  zero_grads(params);
  (void)d.forward(x2, true);
  d.backward(m2);
  const Mat g2 = *params[0].grad;
  REQUIRE((shared - g1 - g2).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("dropout is identity in eval mode and unbiased in train mode") {
  Rng rng = Rng::derive(26, 0);
  Dropout drop(0.3);
  Tensor4 in(1, 1, 20, 20);
  in.data.setConstant(1.0);
  const Tensor4 eval_out = drop.forward(in, false, rng, false);
  REQUIRE((eval_out.data - in.data).cwiseAbs().maxCoeff() == 0.0);

  double acc = 0.0;
  const int reps = 200;
  for (int r = 0; r < reps; ++r)
    acc += drop.forward(in, true, rng, false).data.sum();
  acc /= reps * in.data.size();
  REQUIRE(acc == Catch::Approx(1.0).margin(0.03));

  // Surviving entries are scaled by 1/(1-p); dropped ones are exactly zero.
  const Tensor4 one = drop.forward(in, true, rng, false);
  int kept = 0;
  for (Eigen::Index i = 0; i < one.data.size(); ++i) {
    if (one.data[i] != 0.0) {
      REQUIRE(one.data[i] == Catch::Approx(1.0 / 0.7));
      ++kept;
    }
  }
  REQUIRE(kept > 200);  // p = 0.3 keeps about 280 of 400
  REQUIRE(kept < 350);

  // Backward reuses the recorded mask.
  const Tensor4 rec = drop.forward(in, true, rng, true);
  Tensor4 ones(1, 1, 20, 20);
  ones.data.setConstant(1.0);
  const Tensor4 din = drop.backward(ones);
  REQUIRE((din.data - rec.data).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("softmax rows are normalized and backward matches differences") {
  Rng rng = Rng::derive(27, 0);
  const Mat logits = random_mat(3, 4, rng);
  const Mat p = softmax_rows(logits);
  for (int i = 0; i < 3; ++i) REQUIRE(p.row(i).sum() == Catch::Approx(1.0));
  REQUIRE(p.minCoeff() > 0.0);

  // Shift invariance.
  const Mat shifted = softmax_rows((logits.array() + 7.5).matrix());
  REQUIRE((p - shifted).cwiseAbs().maxCoeff() < 1e-14);

  const Mat m = random_mat(3, 4, rng);
  const Mat dlogits = softmax_backward(m, p);
  const double h = 1e-6;
  double worst = 0.0;
  Mat ll = logits;
  for (Eigen::Index i = 0; i < ll.size(); ++i) {
    const double keep = ll(i);
    ll(i) = keep + h;
    const double up = (softmax_rows(ll).array() * m.array()).sum();
    ll(i) = keep - h;
    const double dn = (softmax_rows(ll).array() * m.array()).sum();
    ll(i) = keep;
    worst = std::max(worst, std::abs((up - dn) / (2 * h) - dlogits(i)));
  }
  REQUIRE(worst < 1e-6);
}

TEST_CASE("cross entropy sums -log p over labels and counts clamps") {
  Mat p(2, 3);
  p << 0.7, 0.2, 0.1, 0.25, 0.25, 0.5;
  const double want = -std::log(0.7) - std::log(0.5);
  REQUIRE(cross_entropy_sum(p, {0, 2}) == Catch::Approx(want));

  const std::uint64_t before = cross_entropy_clamp_count();
  Mat q(1, 2);
  q << 0.0, 1.0;
  REQUIRE(cross_entropy_sum(q, {0}) == Catch::Approx(-std::log(1e-12)));
  REQUIRE(cross_entropy_clamp_count() == before + 1);

  REQUIRE_THROWS_AS(cross_entropy_sum(p, {0}), ConfigError);
}

TEST_CASE("adam first step moves by lr times the gradient sign") {
  Mat w = Mat::Zero(1, 2);
  Mat g(1, 2);
  g << 3.0, -0.5;
  std::vector<ParamRef> params{{"w", &w, &g}};
  Adam opt(0.01);
  opt.step(params);
  // mhat = g, vhat = g^2, update = lr * g / (|g| + eps)
  REQUIRE(w(0, 0) == Catch::Approx(-0.01).epsilon(1e-6));
  REQUIRE(w(0, 1) == Catch::Approx(0.01).epsilon(1e-6));
  REQUIRE(g.cwiseAbs().maxCoeff() == 0.0);  // grads cleared after the step
  REQUIRE(opt.steps_taken() == 1);
}

TEST_CASE("adam skips non-finite gradients and reports it") {
  Mat w = Mat::Zero(1, 2);
  Mat g(1, 2);
  g << 1.0, std::numeric_limits<double>::quiet_NaN();
  std::vector<ParamRef> params{{"w", &w, &g}};
  Adam opt(0.1);
  opt.step(params);
  REQUIRE(w.cwiseAbs().maxCoeff() == 0.0);
  REQUIRE(opt.steps_skipped() == 1);
  REQUIRE(opt.steps_taken() == 0);
  REQUIRE(g(0, 0) == 0.0);  // cleared even when skipped
}

TEST_CASE("a small mlp fits a smooth target") {
  Rng rng = Rng::derive(28, 0);
  Mlp net({1, 16, 16, 1});
  net.init(rng);
  const auto params = params_of(net);
  Adam opt(1e-2);

  Mat x(32, 1), y(32, 1);
  for (int i = 0; i < 32; ++i) {
    x(i, 0) = -1.0 + 2.0 * i / 31.0;
    y(i, 0) = std::sin(3.0 * x(i, 0));
  }
  double first = 0.0, last = 0.0;
  for (int step = 0; step < 400; ++step) {
    const Mat out = net.forward(x, true);
    const Mat diff = out - y;
    const double loss = diff.squaredNorm() / 32.0;
    if (step == 0) first = loss;
    last = loss;
    net.backward(2.0 / 32.0 * diff);
    opt.step(params);
  }
  REQUIRE(last < first / 20.0);
}

TEST_CASE("weights survive a save/load round trip exactly") {
  Rng rng = Rng::derive(29, 0);
  Mlp a({3, 5, 2}), b({3, 5, 2});
  a.init(rng);
  b.init(rng);  // different draws
  const auto pa = params_of(a);
  const auto pb = params_of(b);
  const std::string path = "/tmp/rxlab_test_weights.bin";
  save_weights(path, 0xabcdef, pa);
  load_weights(path, 0xabcdef, pb);
  for (std::size_t i = 0; i < pa.size(); ++i)
    REQUIRE((*pa[i].value - *pb[i].value).cwiseAbs().maxCoeff() == 0.0);

  REQUIRE_THROWS_AS(load_weights(path, 0x1234, pb), IoError);
  Mlp c({3, 6, 2});
  const auto pc = params_of(c);
  REQUIRE_THROWS_AS(load_weights(path, 0xabcdef, pc), IoError);
  std::remove(path.c_str());
}
