#pragma once

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <exception>
#include <string>
#include <thread>
#include <vector>

#include "rxlab/baselines.hpp"
#include "rxlab/chanest.hpp"
#include "rxlab/config.hpp"
#include "rxlab/dataset.hpp"
#include "rxlab/detect_gnn.hpp"
#include "rxlab/detect_qrm.hpp"
#include "rxlab/metrics.hpp"

namespace rxlab {

struct SweepRow {
  double snr_db = 0.0;
  std::string detector;
  std::string estimator;
  int k = 0, t = 0, l = 0;
  double ser = 0.0, ber = 0.0;
  double nmse = 0.0;
  std::uint64_t n_re = 0;
  double ci = 0.0;
  double seconds = 0.0;
};

inline std::string csv_header() {
  return "snr_db, detector, estimator, K, T, L, ser, ber, nmse_db, n_re, "
         "ci_halfwidth, seconds";
}

inline std::string csv_line(const SweepRow& r) {
  char buf[512];
  std::snprintf(buf, sizeof(buf),
                "%.6g, %s, %s, %d, %d, %d, %.9g, %.9g, %.6g, %llu, %.6g, %.6g",
                r.snr_db, r.detector.c_str(), r.estimator.c_str(), r.k, r.t, r.l, r.ser,
                r.ber, r.nmse, static_cast<unsigned long long>(r.n_re), r.ci, r.seconds);
  return buf;
}

// Optional trained models for the learned detector/estimator variants.
struct EvalModels {
  GnnNet* gnn = nullptr;
  Srcnn* srcnn = nullptr;
};

inline ChannelGrid estimate_channel(EstimatorKind est, const ChannelGrid& label,
                                    const ChannelGrid& interp, const PilotTensor& pilots,
                                    const GridLayout& layout, const Vec& pdp,
                                    int fft_size, double sigma_w2, Srcnn* srcnn) {
  switch (est) {
    case EstimatorKind::kPerfect:
      return label;
    case EstimatorKind::kInterp:
      return interp;
    case EstimatorKind::kLmmse:
      return lmmse_estimate(pilots, layout, pdp, fft_size, sigma_w2);
    case EstimatorKind::kSrcnn: {
      if (!srcnn) throw ConfigError("srcnn estimator selected without weights");
      Rng dummy(0);
      return srcnn_refine(interp, *srcnn, dummy);
    }
  }
  throw ConfigError("unhandled estimator");
}

// Error counts and channel-error energy from one TTI, self-contained so TTIs
// can run on any worker and still merge identically.
struct TtiOutcome {
  ErrorCounter counter;
  double err_acc = 0.0;
  double ref_acc = 0.0;
};

inline TtiOutcome evaluate_tti(const ExperimentConfig& cfg, const GridLayout& layout,
                               const Constellation& qam, const InterpKernel& kernel,
                               const Vec& pdp, DetectorKind det, EstimatorKind est,
                               double snr, int tti_index, EvalModels models) {
  const double sigma_w2 = noise_var_for_snr_db(snr);
  const TtiRecord rec =
      generate_tti(cfg, layout, qam, static_cast<std::uint32_t>(tti_index), snr);
  const Channel ch = channel_of(cfg, rec);
  const ChannelGrid label = channel_label(ch, cfg.n_symbols, cfg.n_subcarriers);
  const PilotTensor pilots = ls_estimate(rec.rx, layout);
  const ChannelGrid interp = interpolate(pilots, kernel, layout);
  const ChannelGrid hest = estimate_channel(est, label, interp, pilots, layout, pdp,
                                            cfg.fft_size, sigma_w2, models.srcnn);

  TtiOutcome out;
  for (const auto& re : layout.payload)
    for (int m = 0; m < cfg.n_rx; ++m)
      for (int n = 0; n < cfg.n_tx; ++n) {
        out.err_acc += std::norm(hest.h[m][n](re.sym, re.sc) -
                                 label.h[m][n](re.sym, re.sc));
        out.ref_acc += std::norm(label.h[m][n](re.sym, re.sc));
      }

  const int n_payload = layout.n_payload();
  const int bps = qam.bits_per_symbol();
  std::vector<DetectionContext> ctxs;
  ctxs.reserve(n_payload);
  for (int p = 0; p < n_payload; ++p) {
    const auto& re = layout.payload[p];
    CVec y(cfg.n_rx);
    for (int r = 0; r < cfg.n_rx; ++r) y[r] = rec.rx.at(r, re.sym, re.sc);
    ctxs.push_back(build_context(y, hest.matrix_at(re.sym, re.sc), sigma_w2, qam));
  }
  std::vector<Eigen::VectorXi> truth(n_payload);
  for (int p = 0; p < n_payload; ++p)
    truth[p] = true_levels_of(&rec.bits[static_cast<std::size_t>(p) * cfg.n_tx * bps],
                              qam, cfg.n_tx);

  const int na = qam.pam_size();
  if (det == DetectorKind::kQrmnet || det == DetectorKind::kGnnEp) {
    if (!models.gnn) throw ConfigError("learned detector selected without weights");
    GnnConfig gc = cfg.gnn_config();
    gc.prior_source = det == DetectorKind::kGnnEp ? GnnConfig::PriorSource::kEp
                                                  : GnnConfig::PriorSource::kQrm;
    std::vector<const DetectionContext*> ptrs(ctxs.size());
    for (std::size_t i = 0; i < ctxs.size(); ++i) ptrs[i] = &ctxs[i];
    const Mat post = qrmnet_detect_batch(ptrs, *models.gnn, gc);
    const int nv = ctxs[0].n_vars;
    for (int p = 0; p < n_payload; ++p)
      out.counter.merge(
          count_errors(post.middleRows(p * nv, nv), truth[p], qam, cfg.n_tx));
    return out;
  }

  for (int p = 0; p < n_payload; ++p) {
    const DetectionContext& ctx = ctxs[p];
    const Mat uni = uniform_priors(ctx.n_vars, na);
    Mat post;
    switch (det) {
      case DetectorKind::kQrm:
        post = qrm_detect(ctx, uni, cfg.k_best, cfg.max_log).posterior;
        break;
      case DetectorKind::kMl:
        post = ml_marginals(ctx, uni).posterior;
        break;
      case DetectorKind::kEp:
        post = ep_detect_real(ctx.h_re, ctx.y_re, ctx.sigma_z2 / 2.0, ctx.pam, uni,
                              cfg.ep_iterations, cfg.ep_damping)
                   .posterior;
        break;
      default:
        throw ConfigError("unhandled detector");
    }
    out.counter.merge(count_errors(post, truth[p], qam, cfg.n_tx));
  }
  return out;
}

// Monte-Carlo sweep over the config's SNR list for each requested detector
// and estimator pair. TTIs regenerate from (seed, index), so every cell sees
// the same channels, payloads, and noise. TTIs fan out to a small worker
// pool; outcomes merge in TTI order and the early-stop decision (>= min_errors
// symbol errors) is taken during that ordered merge, so results are identical
// for any worker count.
inline std::vector<SweepRow> evaluate_sweep(const ExperimentConfig& cfg,
                                            const std::vector<DetectorKind>& dets,
                                            const std::vector<EstimatorKind>& ests,
                                            EvalModels models) {
  const GridLayout layout = build_grid(cfg.grid_config());
  const Constellation qam(cfg.qam_order);
  const InterpKernel kernel = gaussian_kernel(layout, cfg.kernel_sf, cfg.kernel_st);
  const Vec pdp = power_delay_profile(cfg.n_taps, cfg.tap_decay_db);
  const int tti_budget = cfg.max_tti > 0 ? cfg.max_tti : cfg.n_tti;
  const int n_workers = std::max(1, cfg.workers);
  for (const auto det : dets)
    if ((det == DetectorKind::kQrmnet || det == DetectorKind::kGnnEp) && !models.gnn)
      throw ConfigError("learned detector selected without weights");
  for (const auto est : ests)
    if (est == EstimatorKind::kSrcnn && !models.srcnn)
      throw ConfigError("srcnn estimator selected without weights");

  // Workers get private model copies; forward passes without recording do
  // not touch the tapes, but sharing mutable nets across threads is not
  // worth reasoning about.
  std::vector<GnnNet> gnn_copies;
  std::vector<Srcnn> srcnn_copies;
  if (models.gnn)
    gnn_copies.assign(static_cast<std::size_t>(n_workers), *models.gnn);
  if (models.srcnn)
    srcnn_copies.assign(static_cast<std::size_t>(n_workers), *models.srcnn);
  const auto worker_models = [&](int w) {
    EvalModels m;
    m.gnn = models.gnn ? &gnn_copies[w] : nullptr;
    m.srcnn = models.srcnn ? &srcnn_copies[w] : nullptr;
    return m;
  };

  std::vector<SweepRow> rows;
  for (double snr : cfg.snr_db) {
    for (const auto est : ests) {
      for (const auto det : dets) {
        const auto t0 = std::chrono::steady_clock::now();
        ErrorCounter counter;
        double err_acc = 0.0, ref_acc = 0.0;
        bool stopped = false;
        for (int base = 0; base < tti_budget && !stopped; base += n_workers) {
          const int chunk = std::min(n_workers, tti_budget - base);
          std::vector<TtiOutcome> outs(chunk);
          if (chunk == 1) {
            outs[0] = evaluate_tti(cfg, layout, qam, kernel, pdp, det, est, snr, base,
                                   worker_models(0));
          } else {
            std::vector<std::exception_ptr> errs(chunk);
            std::vector<std::thread> pool;
            pool.reserve(chunk);
            for (int w = 0; w < chunk; ++w)
              pool.emplace_back([&, w] {
                try {
                  outs[w] = evaluate_tti(cfg, layout, qam, kernel, pdp, det, est, snr,
                                         base + w, worker_models(w));
                } catch (...) {
                  errs[w] = std::current_exception();
                }
              });
            for (auto& th : pool) th.join();
            for (const auto& e : errs)
              if (e) std::rethrow_exception(e);
          }
          for (int w = 0; w < chunk && !stopped; ++w) {
            counter.merge(outs[w].counter);
            err_acc += outs[w].err_acc;
            ref_acc += outs[w].ref_acc;
            if (counter.symbol_errors >= static_cast<std::uint64_t>(cfg.min_errors))
              stopped = true;
          }
        }

        SweepRow row;
        row.snr_db = snr;
        row.detector = to_string(det);
        row.estimator = to_string(est);
        row.k = cfg.k_best;
        row.t = cfg.t_outer;
        row.l = cfg.l_inner;
        row.ser = counter.ser();
        row.ber = counter.ber();
        const double ratio = ref_acc > 0.0 ? err_acc / ref_acc : 0.0;
        row.nmse = ratio <= 1e-10 ? kNmseFloorDb : 10.0 * std::log10(ratio);
        row.n_re = counter.symbols / static_cast<std::uint64_t>(cfg.n_tx);
        row.ci = wilson_halfwidth(counter.symbol_errors, counter.symbols);
        if (cfg.emit_timing) {
          const auto t1 = std::chrono::steady_clock::now();
          row.seconds = std::chrono::duration<double>(t1 - t0).count();
        }
        rows.push_back(std::move(row));
      }
    }
  }
  return rows;
}

}  // namespace rxlab
