#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "rxlab/common.hpp"
#include "rxlab/rng.hpp"

namespace rxlab {

// Named view of one parameter tensor and its gradient accumulator. Modules
// register their parameters into a flat registry; the optimizer and the
// weight-file code work off that registry only.
struct ParamRef {
  std::string name;
  Mat* value;
  Mat* grad;
};

inline void zero_grads(const std::vector<ParamRef>& params) {
  for (const auto& p : params) p.grad->setZero();
}

inline double glorot_limit(int fan_in, int fan_out) {
  return std::sqrt(6.0 / (fan_in + fan_out));
}

inline void uniform_init(Mat& w, double limit, Rng& rng) {
  for (Eigen::Index i = 0; i < w.rows(); ++i)
    for (Eigen::Index j = 0; j < w.cols(); ++j)
      w(i, j) = (2.0 * rng.uniform() - 1.0) * limit;
}

// Rows of the input are independent samples. Forward pushes its input on a
// tape so weight-shared layers can be applied several times per pass and
// backpropagated in reverse order (backward pops).
class Dense {
 public:
  Dense() = default;
  Dense(int in_dim, int out_dim)
      : w_(Mat::Zero(out_dim, in_dim)),
        b_(Mat::Zero(1, out_dim)),
        gw_(Mat::Zero(out_dim, in_dim)),
        gb_(Mat::Zero(1, out_dim)) {}

  void init(Rng& rng) {
    uniform_init(w_, glorot_limit(static_cast<int>(w_.cols()),
                                  static_cast<int>(w_.rows())), rng);
    b_.setZero();
  }

  Mat forward(const Mat& x, bool record) {
    if (x.cols() != w_.cols()) throw ConfigError("dense: input width mismatch");
    if (record) tape_.push_back(x);
    return (x * w_.transpose()).rowwise() + b_.row(0);
  }

  Mat backward(const Mat& dy) {
    if (tape_.empty()) throw NumericError("dense: backward without forward");
    const Mat x = std::move(tape_.back());
    tape_.pop_back();
    gw_.noalias() += dy.transpose() * x;
    gb_.row(0) += dy.colwise().sum();
    return dy * w_;
  }

  void collect(std::vector<ParamRef>& out, const std::string& prefix) {
    out.push_back({prefix + ".w", &w_, &gw_});
    out.push_back({prefix + ".b", &b_, &gb_});
  }

  void clear_tape() { tape_.clear(); }
  int in_dim() const { return static_cast<int>(w_.cols()); }
  int out_dim() const { return static_cast<int>(w_.rows()); }
  Mat& weight() { return w_; }
  Mat& bias() { return b_; }

 private:
  Mat w_, b_, gw_, gb_;
  std::vector<Mat> tape_;
};

// Dense stack with ReLU between layers and a linear head.
class Mlp {
 public:
  Mlp() = default;
  explicit Mlp(const std::vector<int>& dims) {
    if (dims.size() < 2) throw ConfigError("mlp needs at least two dims");
    for (std::size_t i = 0; i + 1 < dims.size(); ++i)
      layers_.emplace_back(dims[i], dims[i + 1]);
  }

  void init(Rng& rng) {
    for (auto& l : layers_) l.init(rng);
  }

  Mat forward(const Mat& x, bool record) {
    Mat h = x;
    std::vector<Mat> masks;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      h = layers_[i].forward(h, record);
      if (i + 1 < layers_.size()) {
        if (record) masks.push_back((h.array() > 0.0).cast<double>());
        h = h.cwiseMax(0.0);
      }
    }
    if (record) mask_tape_.push_back(std::move(masks));
    return h;
  }

  Mat backward(Mat dy) {
    if (mask_tape_.empty()) throw NumericError("mlp: backward without forward");
    const std::vector<Mat> masks = std::move(mask_tape_.back());
    mask_tape_.pop_back();
    for (int i = static_cast<int>(layers_.size()) - 1; i >= 0; --i) {
      dy = layers_[i].backward(dy);
      if (i > 0) dy = dy.cwiseProduct(masks[i - 1]);
    }
    return dy;
  }

  void collect(std::vector<ParamRef>& out, const std::string& prefix) {
    for (std::size_t i = 0; i < layers_.size(); ++i)
      layers_[i].collect(out, prefix + ".l" + std::to_string(i));
  }

  void clear_tape() {
    for (auto& l : layers_) l.clear_tape();
    mask_tape_.clear();
  }

  int in_dim() const { return layers_.front().in_dim(); }
  int out_dim() const { return layers_.back().out_dim(); }

 private:
  std::vector<Dense> layers_;
  std::vector<std::vector<Mat>> mask_tape_;
};

// Gated recurrent unit over batched rows, gate order (reset, update,
// candidate):
//   r = sigm(Wr x + br + Ur h + cr)
//   z = sigm(Wz x + bz + Uz h + cz)
//   n = tanh(Wn x + bn + r .* (Un h + cn))
//   h' = (1 - z) .* n + z .* h
class GruCell {
 public:
  GruCell() = default;
  GruCell(int in_dim, int hidden)
      : in_(in_dim),
        hid_(hidden),
        wi_(Mat::Zero(3 * hidden, in_dim)),
        bi_(Mat::Zero(1, 3 * hidden)),
        uh_(Mat::Zero(3 * hidden, hidden)),
        bh_(Mat::Zero(1, 3 * hidden)),
        gwi_(Mat::Zero(3 * hidden, in_dim)),
        gbi_(Mat::Zero(1, 3 * hidden)),
        guh_(Mat::Zero(3 * hidden, hidden)),
        gbh_(Mat::Zero(1, 3 * hidden)) {}

  void init(Rng& rng) {
    uniform_init(wi_, glorot_limit(in_, hid_), rng);
    uniform_init(uh_, glorot_limit(hid_, hid_), rng);
    bi_.setZero();
    bh_.setZero();
  }

  Mat forward(const Mat& h, const Mat& x, bool record) {
    if (x.cols() != in_ || h.cols() != hid_ || x.rows() != h.rows())
      throw ConfigError("gru: input shape mismatch");
    const Mat gi = (x * wi_.transpose()).rowwise() + bi_.row(0);
    const Mat gh = (h * uh_.transpose()).rowwise() + bh_.row(0);
    Step s;
    s.x = x;
    s.h = h;
    s.r = sigm(gi.leftCols(hid_) + gh.leftCols(hid_));
    s.z = sigm(gi.middleCols(hid_, hid_) + gh.middleCols(hid_, hid_));
    s.hn = gh.rightCols(hid_);
    s.n = (gi.rightCols(hid_) + s.r.cwiseProduct(s.hn)).array().tanh().matrix();
    Mat hout = ((1.0 - s.z.array()) * s.n.array() + s.z.array() * s.h.array()).matrix();
    if (record) tape_.push_back(std::move(s));
    return hout;
  }

  // Returns (dh, dx) for one step, in reverse order of the forwards.
  std::pair<Mat, Mat> backward(const Mat& dhout) {
    if (tape_.empty()) throw NumericError("gru: backward without forward");
    const Step s = std::move(tape_.back());
    tape_.pop_back();

    const Mat one_minus_z = (1.0 - s.z.array()).matrix();
    const Mat dn = dhout.cwiseProduct(one_minus_z);
    const Mat dz = dhout.cwiseProduct(s.h - s.n);
    Mat dh = dhout.cwiseProduct(s.z);

    const Mat dan = dn.cwiseProduct((1.0 - s.n.array().square()).matrix());
    const Mat dr = dan.cwiseProduct(s.hn);
    const Mat dhn = dan.cwiseProduct(s.r);
    const Mat daz = dz.cwiseProduct(s.z.cwiseProduct(one_minus_z));
    const Mat dar = dr.cwiseProduct(s.r.cwiseProduct((1.0 - s.r.array()).matrix()));

    Mat dgi(dhout.rows(), 3 * hid_), dgh(dhout.rows(), 3 * hid_);
    dgi << dar, daz, dan;
    dgh << dar, daz, dhn;

    gwi_.noalias() += dgi.transpose() * s.x;
    gbi_.row(0) += dgi.colwise().sum();
    guh_.noalias() += dgh.transpose() * s.h;
    gbh_.row(0) += dgh.colwise().sum();

    Mat dx = dgi * wi_;
    dh += dgh * uh_;
    return {std::move(dh), std::move(dx)};
  }

  void collect(std::vector<ParamRef>& out, const std::string& prefix) {
    out.push_back({prefix + ".wi", &wi_, &gwi_});
    out.push_back({prefix + ".bi", &bi_, &gbi_});
    out.push_back({prefix + ".uh", &uh_, &guh_});
    out.push_back({prefix + ".bh", &bh_, &gbh_});
  }

  void clear_tape() { tape_.clear(); }
  int in_dim() const { return in_; }
  int hidden_dim() const { return hid_; }

 private:
  struct Step {
    Mat x, h, r, z, n, hn;
  };

  static Mat sigm(const Mat& a) {
    return (1.0 / (1.0 + (-a.array()).exp())).matrix();
  }

  int in_ = 0, hid_ = 0;
  Mat wi_, bi_, uh_, bh_;
  Mat gwi_, gbi_, guh_, gbh_;
  std::vector<Step> tape_;
};

// Batch of 2-D planes, laid out [batch][channel][row][col].
struct Tensor4 {
  int n = 0, c = 0, h = 0, w = 0;
  Vec data;

  Tensor4() = default;
  Tensor4(int n_, int c_, int h_, int w_)
      : n(n_), c(c_), h(h_), w(w_),
        data(Vec::Zero(static_cast<Eigen::Index>(n_) * c_ * h_ * w_)) {}

  double& at(int i, int j, int y, int x) {
    return data[((static_cast<Eigen::Index>(i) * c + j) * h + y) * w + x];
  }
  double at(int i, int j, int y, int x) const {
    return data[((static_cast<Eigen::Index>(i) * c + j) * h + y) * w + x];
  }
  bool same_shape(const Tensor4& o) const {
    return n == o.n && c == o.c && h == o.h && w == o.w;
  }
};

// Zero-padded 2-D convolution with square kernels, implemented as im2col plus
// one GEMM per batch item. Weight rows are output channels; columns run over
// (in_channel, kernel_row, kernel_col).
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(int in_ch, int out_ch, int ksize, int pad)
      : cin_(in_ch), cout_(out_ch), k_(ksize), pad_(pad),
        w_(Mat::Zero(out_ch, in_ch * ksize * ksize)),
        b_(Mat::Zero(1, out_ch)),
        gw_(Mat::Zero(out_ch, in_ch * ksize * ksize)),
        gb_(Mat::Zero(1, out_ch)) {}

  void init(Rng& rng) {
    uniform_init(w_, glorot_limit(cin_ * k_ * k_, cout_ * k_ * k_), rng);
    b_.setZero();
  }

  Tensor4 forward(const Tensor4& in, bool record) {
    if (in.c != cin_) throw ConfigError("conv2d: channel count mismatch");
    const int oh = in.h + 2 * pad_ - k_ + 1;
    const int ow = in.w + 2 * pad_ - k_ + 1;
    if (oh <= 0 || ow <= 0) throw ConfigError("conv2d: kernel larger than padded input");
    Tensor4 out(in.n, cout_, oh, ow);
    Cache cache;
    cache.in_h = in.h;
    cache.in_w = in.w;
    for (int i = 0; i < in.n; ++i) {
      Mat col = im2col(in, i, oh, ow);
      Mat o = w_ * col;
      o.colwise() += b_.row(0).transpose();
      for (int j = 0; j < cout_; ++j)
        for (int y = 0; y < oh; ++y)
          for (int x = 0; x < ow; ++x) out.at(i, j, y, x) = o(j, y * ow + x);
      if (record) cache.cols.push_back(std::move(col));
    }
    if (record) tape_.push_back(std::move(cache));
    return out;
  }

  Tensor4 backward(const Tensor4& dout) {
    if (tape_.empty()) throw NumericError("conv2d: backward without forward");
    const Cache cache = std::move(tape_.back());
    tape_.pop_back();
    const int oh = dout.h, ow = dout.w;
    Tensor4 din(dout.n, cin_, cache.in_h, cache.in_w);
    Mat dmat(cout_, oh * ow);
    for (int i = 0; i < dout.n; ++i) {
      for (int j = 0; j < cout_; ++j)
        for (int y = 0; y < oh; ++y)
          for (int x = 0; x < ow; ++x) dmat(j, y * ow + x) = dout.at(i, j, y, x);
      gw_.noalias() += dmat * cache.cols[i].transpose();
      gb_.row(0) += dmat.rowwise().sum().transpose();
      const Mat dcol = w_.transpose() * dmat;
      col2im_add(dcol, din, i, oh, ow);
    }
    return din;
  }

  void collect(std::vector<ParamRef>& out, const std::string& prefix) {
    out.push_back({prefix + ".w", &w_, &gw_});
    out.push_back({prefix + ".b", &b_, &gb_});
  }

  void clear_tape() { tape_.clear(); }
  int in_channels() const { return cin_; }
  int out_channels() const { return cout_; }
  int kernel() const { return k_; }

 private:
  struct Cache {
    std::vector<Mat> cols;
    int in_h = 0, in_w = 0;
  };

  Mat im2col(const Tensor4& in, int item, int oh, int ow) const {
    Mat col = Mat::Zero(cin_ * k_ * k_, oh * ow);
    for (int ci = 0; ci < cin_; ++ci)
      for (int u = 0; u < k_; ++u)
        for (int v = 0; v < k_; ++v) {
          const int row = (ci * k_ + u) * k_ + v;
          for (int y = 0; y < oh; ++y) {
            const int sy = y + u - pad_;
            if (sy < 0 || sy >= in.h) continue;
            for (int x = 0; x < ow; ++x) {
              const int sx = x + v - pad_;
              if (sx < 0 || sx >= in.w) continue;
              col(row, y * ow + x) = in.at(item, ci, sy, sx);
            }
          }
        }
    return col;
  }

  void col2im_add(const Mat& dcol, Tensor4& din, int item, int oh, int ow) const {
    for (int ci = 0; ci < cin_; ++ci)
      for (int u = 0; u < k_; ++u)
        for (int v = 0; v < k_; ++v) {
          const int row = (ci * k_ + u) * k_ + v;
          for (int y = 0; y < oh; ++y) {
            const int sy = y + u - pad_;
            if (sy < 0 || sy >= din.h) continue;
            for (int x = 0; x < ow; ++x) {
              const int sx = x + v - pad_;
              if (sx < 0 || sx >= din.w) continue;
              din.at(item, ci, sy, sx) += dcol(row, y * ow + x);
            }
          }
        }
  }

  int cin_ = 0, cout_ = 0, k_ = 0, pad_ = 0;
  Mat w_, b_, gw_, gb_;
  std::vector<Cache> tape_;
};

// Inverted dropout: scales kept activations by 1/(1-p) in training so
// evaluation mode is the identity.
class Dropout {
 public:
  Dropout() = default;
  explicit Dropout(double p) : p_(p) {
    if (!(p >= 0.0 && p < 1.0)) throw ConfigError("dropout rate must be in [0,1)");
  }

  Tensor4 forward(const Tensor4& in, bool training, Rng& rng, bool record) {
    if (!training || p_ == 0.0) {
      if (record) tape_.push_back(Vec());
      return in;
    }
    Tensor4 out = in;
    Vec mask(in.data.size());
    const double keep_scale = 1.0 / (1.0 - p_);
    for (Eigen::Index i = 0; i < mask.size(); ++i)
      mask[i] = rng.uniform() >= p_ ? keep_scale : 0.0;
    out.data = out.data.cwiseProduct(mask);
    if (record) tape_.push_back(std::move(mask));
    return out;
  }

  Tensor4 backward(const Tensor4& dout) {
    if (tape_.empty()) throw NumericError("dropout: backward without forward");
    const Vec mask = std::move(tape_.back());
    tape_.pop_back();
    if (mask.size() == 0) return dout;
    Tensor4 din = dout;
    din.data = din.data.cwiseProduct(mask);
    return din;
  }

  void clear_tape() { tape_.clear(); }
  double rate() const { return p_; }

 private:
  double p_ = 0.0;
  std::vector<Vec> tape_;
};

inline Mat softmax_rows(const Mat& logits) {
  Mat p(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const Vec row = logits.row(i).transpose();
    const double m = row.maxCoeff();
    const Vec e = (row.array() - m).exp().matrix();
    p.row(i) = (e / e.sum()).transpose();
  }
  return p;
}

// d(loss)/d(logits) given d(loss)/d(softmax output), both row-batched.
inline Mat softmax_backward(const Mat& dp, const Mat& p) {
  Mat dl(p.rows(), p.cols());
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    const double dot = dp.row(i).dot(p.row(i));
    dl.row(i) = (p.row(i).array() * (dp.row(i).array() - dot)).matrix();
  }
  return dl;
}

// Counts how often a label probability had to be clamped away from zero;
// persistent so long trainings can report it once.
inline std::uint64_t& cross_entropy_clamp_count() {
  static std::uint64_t count = 0;
  return count;
}

// Sum over rows of -log p(label). Pair with softmax_rows; the gradient with
// respect to the logits is (p - onehot).
inline double cross_entropy_sum(const Mat& probs, const std::vector<int>& labels) {
  if (static_cast<Eigen::Index>(labels.size()) != probs.rows())
    throw ConfigError("cross_entropy: label count mismatch");
  double loss = 0.0;
  for (Eigen::Index i = 0; i < probs.rows(); ++i) {
    double p = probs(i, labels[i]);
    if (p < 1e-12) {
      p = 1e-12;
      ++cross_entropy_clamp_count();
    }
    loss -= std::log(p);
  }
  return loss;
}

inline double mse(const Vec& pred, const Vec& label) {
  if (pred.size() != label.size()) throw ConfigError("mse: size mismatch");
  return (pred - label).squaredNorm() / static_cast<double>(pred.size());
}

// Standard Adam on a parameter registry. Steps with any non-finite gradient
// entry are skipped (gradients still cleared) and counted.
class Adam {
 public:
  explicit Adam(double lr = 1e-3, double beta1 = 0.9, double beta2 = 0.999,
                double eps = 1e-8)
      : lr_(lr), b1_(beta1), b2_(beta2), eps_(eps) {}

  void step(const std::vector<ParamRef>& params) {
    if (m_.empty()) {
      for (const auto& p : params) {
        m_.push_back(Mat::Zero(p.value->rows(), p.value->cols()));
        v_.push_back(Mat::Zero(p.value->rows(), p.value->cols()));
      }
    }
    if (m_.size() != params.size()) throw ConfigError("adam: registry size changed");

    bool finite = true;
    for (const auto& p : params)
      if (!p.grad->allFinite()) {
        finite = false;
        break;
      }
    if (!finite) {
      ++skipped_;
      zero_grads(params);
      return;
    }

    ++t_;
    const double c1 = 1.0 - std::pow(b1_, t_);
    const double c2 = 1.0 - std::pow(b2_, t_);
    for (std::size_t i = 0; i < params.size(); ++i) {
      const Mat& g = *params[i].grad;
      m_[i] = b1_ * m_[i] + (1.0 - b1_) * g;
      v_[i] = b2_ * v_[i] + (1.0 - b2_) * g.cwiseProduct(g);
      params[i].value->array() -=
          lr_ * (m_[i] / c1).array() / ((v_[i] / c2).array().sqrt() + eps_);
    }
    zero_grads(params);
  }

  int steps_taken() const { return t_; }
  int steps_skipped() const { return skipped_; }
  double learning_rate() const { return lr_; }
  void set_learning_rate(double lr) { lr_ = lr; }

 private:
  double lr_, b1_, b2_, eps_;
  int t_ = 0;
  int skipped_ = 0;
  std::vector<Mat> m_, v_;
};

}  // namespace rxlab
