// Command-line front end: dataset generation, the two training stages,
// Monte-Carlo evaluation sweeps, the multiplication-count table, and a fast
// selftest battery. Configuration comes from an optional key=value file plus
// repeatable --set overrides; exit codes are 0 success, 1 unexpected error,
// 2 configuration or I/O error, 3 training divergence, 4 guard refusal.

#include <fstream>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "rxlab/config.hpp"
#include "rxlab/dataset.hpp"
#include "rxlab/flops.hpp"
#include "rxlab/selftest.hpp"
#include "rxlab/sweep.hpp"
#include "rxlab/train.hpp"
#include "rxlab/weights.hpp"

namespace {

struct CommonOpts {
  std::string config_path;
  std::vector<std::string> sets;
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
  cmd->add_option("-c,--config", opts.config_path, "key = value config file");
  cmd->add_option("-s,--set", opts.sets, "override, key=value (repeatable)");
}

rxlab::ExperimentConfig make_config(const CommonOpts& opts) {
  return rxlab::load_config(opts.config_path, opts.sets);
}

rxlab::Srcnn load_srcnn(const rxlab::ExperimentConfig& cfg, const std::string& path) {
  rxlab::Srcnn net(cfg.n_h1, cfg.n_h2);
  rxlab::load_weights(path, cfg.compat_hash(), net.params());
  return net;
}

rxlab::GnnNet load_gnn(const rxlab::ExperimentConfig& cfg, const std::string& path) {
  rxlab::GnnNet net(cfg.gnn_config());
  rxlab::load_weights(path, cfg.compat_hash(), net.params());
  return net;
}

// Telemetry goes to a file when requested, otherwise to stdout.
struct LogSink {
  std::ofstream file;
  std::ostream* os = &std::cout;

  explicit LogSink(const std::string& path) {
    if (!path.empty()) {
      file.open(path, std::ios::trunc);
      if (!file) throw rxlab::IoError("cannot open for writing: " + path);
      os = &file;
    }
  }
};

int run(int argc, char** argv) {
  CLI::App app{"MIMO-OFDM receiver lab"};
  app.require_subcommand(1);

  CommonOpts gen_opts, ce_opts, det_opts, eval_opts, flops_opts;
  std::string gen_out;
  auto* gen = app.add_subcommand("gen-dataset", "generate and persist TTIs");
  add_common(gen, gen_opts);
  gen->add_option("-o,--out", gen_out, "output dataset path")->required();

  std::string ce_data, ce_out, ce_telemetry;
  auto* ce = app.add_subcommand("train-ce", "train the channel-estimate refiner");
  add_common(ce, ce_opts);
  ce->add_option("-d,--data", ce_data, "training dataset")->required();
  ce->add_option("-o,--out", ce_out, "output weight file")->required();
  ce->add_option("--telemetry", ce_telemetry, "telemetry CSV path");

  std::string det_data, det_out, det_ce_weights, det_telemetry;
  bool det_perfect_csi = false;
  auto* det = app.add_subcommand("train-det", "train the detector network");
  add_common(det, det_opts);
  det->add_option("-d,--data", det_data, "training dataset")->required();
  det->add_option("-o,--out", det_out, "output weight file")->required();
  det->add_option("--ce-weights", det_ce_weights, "refiner weights for srcnn contexts");
  det->add_flag("--perfect-csi", det_perfect_csi, "build contexts from the true channel");
  det->add_option("--telemetry", det_telemetry, "telemetry CSV path");

  std::string eval_out, eval_det_weights, eval_ce_weights;
  std::vector<std::string> eval_dets, eval_ests;
  auto* ev = app.add_subcommand("evaluate", "Monte-Carlo SER/BER/NMSE sweep");
  add_common(ev, eval_opts);
  ev->add_option("-o,--out", eval_out, "output CSV path (default stdout)");
  ev->add_option("--det-weights", eval_det_weights, "detector weight file");
  ev->add_option("--ce-weights", eval_ce_weights, "refiner weight file");
  ev->add_option("--detector", eval_dets, "detector (repeatable)");
  ev->add_option("--estimator", eval_ests, "estimator (repeatable)");

  auto* fl = app.add_subcommand("flops", "per-stage multiplication counts");
  add_common(fl, flops_opts);

  auto* st = app.add_subcommand("selftest", "oracle and invariant battery");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  if (gen->parsed()) {
    const auto cfg = make_config(gen_opts);
    const rxlab::Dataset ds = rxlab::generate_dataset(cfg);
    rxlab::save_dataset(gen_out, ds);
    std::cout << "wrote " << ds.records.size() << " TTIs to " << gen_out << " (hash 0x"
              << std::hex << ds.config_hash << std::dec << ")\n";
    return 0;
  }

  if (ce->parsed()) {
    const auto cfg = make_config(ce_opts);
    const rxlab::Dataset ds = rxlab::load_dataset(ce_data, cfg.compat_hash());
    rxlab::Srcnn net(cfg.n_h1, cfg.n_h2);
    rxlab::Rng rng = rxlab::Rng::derive(cfg.seed ^ 0x73726e6eull, 0);
    net.init(rng);
    LogSink sink(ce_telemetry);
    const auto rows = rxlab::train_srcnn(net, cfg, ds, sink.os);
    rxlab::save_weights(ce_out, cfg.compat_hash(), net.params());
    std::cout << "saved refiner weights to " << ce_out << " (final val nmse "
              << rows.back().val << " dB)\n";
    return 0;
  }

  if (det->parsed()) {
    auto cfg = make_config(det_opts);
    if (det_perfect_csi) cfg.estimator = rxlab::EstimatorKind::kPerfect;
    if (cfg.estimator == rxlab::EstimatorKind::kSrcnn && det_ce_weights.empty())
      throw rxlab::ConfigError(
          "train-det with the srcnn estimator needs --ce-weights (or --perfect-csi)");
    std::unique_ptr<rxlab::Srcnn> srcnn;
    if (!det_ce_weights.empty())
      srcnn = std::make_unique<rxlab::Srcnn>(load_srcnn(cfg, det_ce_weights));
    const rxlab::Dataset ds = rxlab::load_dataset(det_data, cfg.compat_hash());
    rxlab::GnnNet net(cfg.gnn_config());
    rxlab::Rng rng = rxlab::Rng::derive(cfg.seed ^ 0x676e6eull, 0);
    net.init(rng);
    LogSink sink(det_telemetry);
    const auto rows = rxlab::train_qrmnet(net, cfg, ds, srcnn.get(), sink.os);
    rxlab::save_weights(det_out, cfg.compat_hash(), net.params());
    std::cout << "saved detector weights to " << det_out << " (final val ser "
              << rows.back().val << ")\n";
    return 0;
  }

  if (ev->parsed()) {
    const auto cfg = make_config(eval_opts);
    std::vector<rxlab::DetectorKind> dets;
    for (const auto& d : eval_dets) dets.push_back(rxlab::detector_from_string(d));
    if (dets.empty()) dets.push_back(cfg.detector);
    std::vector<rxlab::EstimatorKind> ests;
    for (const auto& e : eval_ests) ests.push_back(rxlab::estimator_from_string(e));
    if (ests.empty()) ests.push_back(cfg.estimator);

    std::unique_ptr<rxlab::GnnNet> gnn;
    if (!eval_det_weights.empty())
      gnn = std::make_unique<rxlab::GnnNet>(load_gnn(cfg, eval_det_weights));
    std::unique_ptr<rxlab::Srcnn> srcnn;
    if (!eval_ce_weights.empty())
      srcnn = std::make_unique<rxlab::Srcnn>(load_srcnn(cfg, eval_ce_weights));

    rxlab::EvalModels models;
    models.gnn = gnn.get();
    models.srcnn = srcnn.get();
    const auto rows = rxlab::evaluate_sweep(cfg, dets, ests, models);

    LogSink sink(eval_out);
    *sink.os << rxlab::csv_header() << "\n";
    for (const auto& r : rows) *sink.os << rxlab::csv_line(r) << "\n";
    return 0;
  }

  if (fl->parsed()) {
    const auto cfg = make_config(flops_opts);
    std::cout << rxlab::render_flop_table(rxlab::flop_table(cfg));
    return 0;
  }

  if (st->parsed()) {
    const auto rep = rxlab::run_selftest(std::cout);
    return rep.failed == 0 ? 0 : 1;
  }

  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const rxlab::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const rxlab::IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return 2;
  } catch (const rxlab::DivergenceError& e) {
    std::cerr << "divergence: " << e.what() << "\n";
    return 3;
  } catch (const rxlab::GuardError& e) {
    std::cerr << "guard refusal: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
