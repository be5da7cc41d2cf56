#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <ostream>
#include <string>
#include <vector>

#include "rxlab/chanest.hpp"
#include "rxlab/config.hpp"
#include "rxlab/dataset.hpp"
#include "rxlab/detect_gnn.hpp"
#include "rxlab/metrics.hpp"

namespace rxlab {

struct TrainRow {
  int epoch = 0;
  double loss = 0.0;
  double val = 0.0;  // NMSE dB for the estimator, SER for the detector
};

inline std::string telemetry_header() { return "epoch, loss, val"; }

inline std::string telemetry_line(const TrainRow& r) {
  char buf[128];
  std::snprintf(buf, sizeof(buf), "%d, %.9g, %.9g", r.epoch, r.loss, r.val);
  return buf;
}

inline void check_finite_loss(double loss, int epoch, const char* what) {
  if (!std::isfinite(loss)) {
    char buf[128];
    std::snprintf(buf, sizeof(buf), "%s loss became non-finite at epoch %d", what,
                  epoch);
    throw DivergenceError(buf);
  }
}

// Hold out the tail of the dataset for validation; small sets validate on
// the training records rather than starving the optimizer.
inline int validation_count(int n_records) {
  if (n_records >= 10) return n_records / 10;
  return n_records >= 4 ? 1 : 0;
}

// Refiner training. Each step batches the eight planes of one TTI: input is
// the Gaussian-interpolated grid, target the true channel, loss the mean
// squared error over the full grid. Validation reports pooled NMSE (dB) over
// payload REs. Dropout keeps the late-training trajectory bouncing around a
// flat valley, so the last epoch is not reliably the best one; training
// returns whichever validates better of (a) the best single epoch and (b)
// the average of the trailing half of the per-epoch weights, whose noise
// largely cancels.
inline std::vector<TrainRow> train_srcnn(Srcnn& net, const ExperimentConfig& cfg,
                                         const Dataset& ds, std::ostream* log) {
  const GridLayout layout = build_grid(cfg.grid_config());
  const InterpKernel kernel = gaussian_kernel(layout, cfg.kernel_sf, cfg.kernel_st);
  const int n = static_cast<int>(ds.records.size());
  if (n < 1) throw ConfigError("empty dataset");

  std::vector<Tensor4> inputs, targets;
  std::vector<ChannelGrid> interp_grids, labels;
  inputs.reserve(n);
  targets.reserve(n);
  for (const auto& rec : ds.records) {
    const Channel ch = channel_of(cfg, rec);
    ChannelGrid label = channel_label(ch, cfg.n_symbols, cfg.n_subcarriers);
    ChannelGrid interp = interpolate(ls_estimate(rec.rx, layout), kernel, layout);
    inputs.push_back(pack_planes(interp));
    targets.push_back(pack_planes(label));
    interp_grids.push_back(std::move(interp));
    labels.push_back(std::move(label));
  }

  const int n_val = validation_count(n);
  const int n_train = n - n_val;
  std::vector<int> val_idx;
  for (int i = n_train; i < n; ++i) val_idx.push_back(i);
  if (val_idx.empty())
    for (int i = 0; i < n; ++i) val_idx.push_back(i);

  const auto params = net.params();
  Adam opt(cfg.lr);
  std::vector<int> order(n_train);
  std::iota(order.begin(), order.end(), 0);

  const auto validate = [&]() {
    double err = 0.0, ref = 0.0;
    Rng dummy(0);
    for (const int i : val_idx) {
      const ChannelGrid refined = srcnn_refine(interp_grids[i], net, dummy);
      for (const auto& re : layout.payload)
        for (int m = 0; m < cfg.n_rx; ++m)
          for (int t = 0; t < cfg.n_tx; ++t) {
            err += std::norm(refined.h[m][t](re.sym, re.sc) -
                             labels[i].h[m][t](re.sym, re.sc));
            ref += std::norm(labels[i].h[m][t](re.sym, re.sc));
          }
    }
    const double ratio = ref > 0.0 ? err / ref : 0.0;
    return ratio <= 1e-10 ? kNmseFloorDb : 10.0 * std::log10(ratio);
  };

  double best_val = std::numeric_limits<double>::infinity();
  std::vector<Mat> best_weights, avg_weights;
  int n_avg = 0;
  std::vector<TrainRow> rows;
  if (log) *log << telemetry_header() << "\n";
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng rng = Rng::derive(cfg.seed ^ 0x63652d747261696eull, epoch);
    for (int i = n_train - 1; i > 0; --i)
      std::swap(order[i], order[rng.uniform_int(i + 1)]);

    double loss_sum = 0.0;
    for (const int i : order) {
      Tensor4 out = net.forward(inputs[i], true, rng, true);
      const Eigen::Index sz = out.data.size();
      Vec diff = out.data - targets[i].data;
      loss_sum += diff.squaredNorm() / sz;
      Tensor4 dout = out;
      dout.data = diff * (2.0 / sz);
      net.backward(dout);
      opt.step(params);
    }
    const double loss = loss_sum / std::max(n_train, 1);
    check_finite_loss(loss, epoch, "srcnn");

    TrainRow row{epoch, loss, validate()};
    if (log) *log << telemetry_line(row) << "\n";
    rows.push_back(row);
    if (row.val < best_val) {
      best_val = row.val;
      best_weights.clear();
      for (const auto& p : params) best_weights.push_back(*p.value);
    }
    if (epoch >= cfg.epochs / 2) {
      if (avg_weights.empty())
        for (const auto& p : params) avg_weights.push_back(Mat::Zero(p.value->rows(), p.value->cols()));
      for (std::size_t i = 0; i < params.size(); ++i) avg_weights[i] += *params[i].value;
      ++n_avg;
    }
  }
  if (n_avg > 0) {
    for (std::size_t i = 0; i < params.size(); ++i)
      *params[i].value = avg_weights[i] / n_avg;
    if (best_val < validate())
      for (std::size_t i = 0; i < params.size(); ++i) *params[i].value = best_weights[i];
  }
  return rows;
}

// Everything about one payload RE that stays constant across epochs: the
// detection context, the truth labels, and the uniform-prior detector pass
// that seeds outer iteration one (it does not depend on the weights, so it
// is paid once, not once per epoch).
struct DetSample {
  DetectionContext ctx;
  std::vector<int> labels;  // level index per real dimension
  Mat first_pass;           // nv x n_amp
};

inline std::vector<DetSample> prepare_det_samples(const ExperimentConfig& cfg,
                                                  const Dataset& ds, Srcnn* srcnn) {
  const GridLayout layout = build_grid(cfg.grid_config());
  const Constellation qam(cfg.qam_order);
  const InterpKernel kernel = gaussian_kernel(layout, cfg.kernel_sf, cfg.kernel_st);
  const Vec pdp = power_delay_profile(cfg.n_taps, cfg.tap_decay_db);
  const GnnConfig gc = cfg.gnn_config();
  const int bps = qam.bits_per_symbol();

  std::vector<DetSample> samples;
  samples.reserve(ds.records.size() * layout.n_payload());
  for (const auto& rec : ds.records) {
    const double sigma_w2 = noise_var_for_snr_db(rec.snr_db);
    const Channel ch = channel_of(cfg, rec);
    ChannelGrid hest;
    switch (cfg.estimator) {
      case EstimatorKind::kPerfect:
        hest = channel_label(ch, cfg.n_symbols, cfg.n_subcarriers);
        break;
      case EstimatorKind::kInterp:
        hest = interpolate(ls_estimate(rec.rx, layout), kernel, layout);
        break;
      case EstimatorKind::kLmmse:
        hest = lmmse_estimate(ls_estimate(rec.rx, layout), layout, pdp, cfg.fft_size,
                              sigma_w2);
        break;
      case EstimatorKind::kSrcnn: {
        if (!srcnn) throw ConfigError("srcnn estimator selected without weights");
        Rng dummy(0);
        hest = srcnn_refine(interpolate(ls_estimate(rec.rx, layout), kernel, layout),
                            *srcnn, dummy);
        break;
      }
    }
    for (int p = 0; p < layout.n_payload(); ++p) {
      const auto& re = layout.payload[p];
      CVec y(cfg.n_rx);
      for (int r = 0; r < cfg.n_rx; ++r) y[r] = rec.rx.at(r, re.sym, re.sc);
      DetSample s;
      s.ctx = build_context(y, hest.matrix_at(re.sym, re.sc), sigma_w2, qam);
      const Eigen::VectorXi lv = true_levels_of(
          &rec.bits[static_cast<std::size_t>(p) * cfg.n_tx * bps], qam, cfg.n_tx);
      s.labels.assign(lv.data(), lv.data() + lv.size());
      s.first_pass = first_pass_posterior(make_gnn_batch({&s.ctx}), gc);
      samples.push_back(std::move(s));
    }
  }
  return samples;
}

// Detector training: shuffled minibatches of payload REs, summed per-outer
// cross-entropy, Adam. Validation reports SER on the held-out TTI tail.
inline std::vector<TrainRow> train_qrmnet(GnnNet& net, const ExperimentConfig& cfg,
                                          const Dataset& ds, Srcnn* srcnn,
                                          std::ostream* log) {
  const GnnConfig gc = cfg.gnn_config();
  if (gc.debug_passthrough) throw ConfigError("passthrough mode has no trainable path");
  const Constellation qam(cfg.qam_order);
  const int n_tti = static_cast<int>(ds.records.size());
  if (n_tti < 1) throw ConfigError("empty dataset");
  const GridLayout layout = build_grid(cfg.grid_config());
  const int per_tti = layout.n_payload();

  const std::vector<DetSample> samples = prepare_det_samples(cfg, ds, srcnn);
  const int n_val_tti = validation_count(n_tti);
  const int n_train = (n_tti - n_val_tti) * per_tti;
  const int val_begin = n_val_tti > 0 ? n_train : 0;
  const int val_end = static_cast<int>(samples.size());

  const auto params = net.params();
  Adam opt(cfg.lr);
  std::vector<int> order(n_train);
  std::iota(order.begin(), order.end(), 0);

  const auto run_batch = [&](const std::vector<int>& idx, bool train) {
    std::vector<const DetectionContext*> ctxs(idx.size());
    std::vector<int> labels;
    labels.reserve(idx.size() * samples[0].ctx.n_vars);
    Mat first_pass(static_cast<Eigen::Index>(idx.size()) * samples[0].ctx.n_vars,
                   gc.n_amp);
    for (std::size_t i = 0; i < idx.size(); ++i) {
      const DetSample& s = samples[idx[i]];
      ctxs[i] = &s.ctx;
      labels.insert(labels.end(), s.labels.begin(), s.labels.end());
      first_pass.middleRows(static_cast<Eigen::Index>(i) * s.ctx.n_vars,
                            s.ctx.n_vars) = s.first_pass;
    }
    if (train) {
      const GnnBatch batch = make_gnn_batch(ctxs);
      return qrmnet_loss_and_grad(net, gc, batch, labels, &first_pass);
    }
    const Mat post = qrmnet_detect_batch(ctxs, net, gc, &first_pass);
    ErrorCounter counter;
    const int nv = samples[0].ctx.n_vars;
    for (std::size_t i = 0; i < idx.size(); ++i) {
      Eigen::VectorXi truth(nv);
      for (int n = 0; n < nv; ++n) truth[n] = samples[idx[i]].labels[n];
      counter.merge(count_errors(post.middleRows(static_cast<Eigen::Index>(i) * nv, nv),
                                 truth, qam, cfg.n_tx));
    }
    return counter.ser();
  };

  std::vector<TrainRow> rows;
  if (log) *log << telemetry_header() << "\n";
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng rng = Rng::derive(cfg.seed ^ 0x6465742d747261ull, epoch);
    for (int i = n_train - 1; i > 0; --i)
      std::swap(order[i], order[rng.uniform_int(i + 1)]);

    double loss_sum = 0.0;
    int n_batches = 0;
    for (int start = 0; start < n_train; start += cfg.batch_re) {
      const int stop = std::min(start + cfg.batch_re, n_train);
      const std::vector<int> idx(order.begin() + start, order.begin() + stop);
      loss_sum += run_batch(idx, true);
      opt.step(params);
      ++n_batches;
      if (cfg.log_every > 0 && log && n_batches % cfg.log_every == 0)
        *log << "# epoch " << epoch << " batch " << n_batches << " loss "
             << loss_sum / n_batches << "\n";
    }
    const double loss = loss_sum / std::max(n_batches, 1);
    check_finite_loss(loss, epoch, "qrmnet");

    ErrorCounter val;
    for (int start = val_begin; start < val_end; start += cfg.batch_re) {
      const int stop = std::min(start + cfg.batch_re, val_end);
      std::vector<int> idx(stop - start);
      std::iota(idx.begin(), idx.end(), start);
      std::vector<const DetectionContext*> ctxs(idx.size());
      std::vector<int> flat;
      Mat fp(static_cast<Eigen::Index>(idx.size()) * samples[0].ctx.n_vars, gc.n_amp);
      for (std::size_t i = 0; i < idx.size(); ++i) {
        const DetSample& s = samples[idx[i]];
        ctxs[i] = &s.ctx;
        flat.insert(flat.end(), s.labels.begin(), s.labels.end());
        fp.middleRows(static_cast<Eigen::Index>(i) * s.ctx.n_vars, s.ctx.n_vars) =
            s.first_pass;
      }
      const Mat post = qrmnet_detect_batch(ctxs, net, gc, &fp);
      const int nv = samples[0].ctx.n_vars;
      for (std::size_t i = 0; i < idx.size(); ++i) {
        Eigen::VectorXi truth(nv);
        for (int n = 0; n < nv; ++n) truth[n] = flat[i * nv + n];
        val.merge(count_errors(post.middleRows(static_cast<Eigen::Index>(i) * nv, nv),
                               truth, qam, cfg.n_tx));
      }
    }

    TrainRow row{epoch, loss, val.ser()};
    if (log) *log << telemetry_line(row) << "\n";
    rows.push_back(row);
  }
  return rows;
}

}  // namespace rxlab
