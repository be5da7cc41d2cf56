#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <fstream>

#include "rxlab/flops.hpp"
#include "rxlab/sweep.hpp"
#include "rxlab/train.hpp"

using namespace rxlab;

namespace {

std::string write_temp(const std::string& name, const std::string& body) {
  const std::string path = "/tmp/" + name;
  std::ofstream os(path, std::ios::trunc);
  os << body;
  return path;
}

}  // namespace

TEST_CASE("config files parse keys, comments, and overrides") {
  const std::string path = write_temp("rxlab_cfg_basic.cfg",
                                      "# run setup\n"
                                      "qam_order = 4\n"
                                      "k_best = 32   # wide beam\n"
                                      "snr_db = 0, 5, 10\n"
                                      "alpha = 0.3\n"
                                      "emit_timing = yes\n"
                                      "\n");
  const ExperimentConfig c = load_config(path);
  REQUIRE(c.qam_order == 4);
  REQUIRE(c.k_best == 32);
  REQUIRE(c.snr_db == std::vector<double>{0.0, 5.0, 10.0});
  REQUIRE(c.alpha == 0.3);
  REQUIRE(c.emit_timing);
  REQUIRE(c.n_subcarriers == 48);  // untouched defaults

  const ExperimentConfig o = load_config(path, {"k_best=7", "detector=ep"});
  REQUIRE(o.k_best == 7);
  REQUIRE(o.detector == DetectorKind::kEp);
  std::remove(path.c_str());
}

TEST_CASE("config loader rejects malformed input") {
  const std::string bad_key = write_temp("rxlab_cfg_badkey.cfg", "no_such_knob = 1\n");
  REQUIRE_THROWS_AS(load_config(bad_key), ConfigError);
  std::remove(bad_key.c_str());

  const std::string no_eq = write_temp("rxlab_cfg_noeq.cfg", "k_best 4\n");
  REQUIRE_THROWS_AS(load_config(no_eq), ConfigError);
  std::remove(no_eq.c_str());

  const std::string bad_bool = write_temp("rxlab_cfg_badbool.cfg", "max_log = maybe\n");
  REQUIRE_THROWS_AS(load_config(bad_bool), ConfigError);
  std::remove(bad_bool.c_str());

  const std::string bad_int = write_temp("rxlab_cfg_badint.cfg", "k_best = 4x\n");
  REQUIRE_THROWS_AS(load_config(bad_int), ConfigError);
  std::remove(bad_int.c_str());

  REQUIRE_NOTHROW(load_config(""));  // defaults validate cleanly
  REQUIRE_THROWS_AS(load_config("", {"k_best=0"}), ConfigError);
  REQUIRE_THROWS_AS(load_config("", {"workers=0"}), ConfigError);
  REQUIRE_THROWS_AS(load_config("", {"alpha=1.5"}), ConfigError);
  REQUIRE_THROWS_AS(load_config("", {"snr_db="}), ConfigError);
  REQUIRE_THROWS_AS(load_config("", {"n_pilots=33"}), ConfigError);
  REQUIRE_THROWS_AS(load_config("/tmp/rxlab_does_not_exist.cfg"), IoError);
}

TEST_CASE("compat hash tracks the physics and shapes, not runtime knobs") {
  ExperimentConfig base;
  const std::uint64_t h = base.compat_hash();

  ExperimentConfig runtime = base;
  runtime.k_best = 64;
  runtime.t_outer = 5;
  runtime.l_inner = 3;
  runtime.snr_db = {0.0, 30.0};
  runtime.seed = 999;
  runtime.workers = 8;
  runtime.min_errors = 1;
  runtime.epochs = 2;
  runtime.lr = 0.5;
  runtime.batch_re = 7;
  runtime.max_log = true;
  REQUIRE(runtime.compat_hash() == h);

  for (const std::string& knob :
       {std::string("n_h1=128"), std::string("alpha=0.5"), std::string("qam_order=4"),
        std::string("n_tx=3"), std::string("kernel_sf=2.0"),
        std::string("prior_feature=distribution"), std::string("n_taps=6")}) {
    ExperimentConfig c = load_config("", {knob});
    REQUIRE(c.compat_hash() != h);
  }
}

TEST_CASE("datasets regenerate deterministically and round trip exactly") {
  ExperimentConfig cfg;
  cfg.n_tti = 3;
  cfg.snr_db = {5.0, 10.0};
  cfg.seed = 77;

  const Dataset a = generate_dataset(cfg);
  const Dataset b = generate_dataset(cfg);
  REQUIRE(a.records.size() == 3);
  // SNR list round-robins over TTIs.
  REQUIRE(a.records[0].snr_db == 5.0);
  REQUIRE(a.records[1].snr_db == 10.0);
  REQUIRE(a.records[2].snr_db == 5.0);
  for (int i = 0; i < 3; ++i) {
    REQUIRE(a.records[i].bits == b.records[i].bits);
    for (std::size_t l = 0; l < a.records[i].taps.size(); ++l)
      REQUIRE((a.records[i].taps[l] - b.records[i].taps[l]).cwiseAbs().maxCoeff() == 0.0);
  }

  // Per-TTI generation is order independent.
  const GridLayout layout = build_grid(cfg.grid_config());
  const Constellation qam(cfg.qam_order);
  const TtiRecord solo = generate_tti(cfg, layout, qam, 1, 10.0);
  REQUIRE(solo.bits == a.records[1].bits);
  REQUIRE((solo.rx.per_rx[0] - a.records[1].rx.per_rx[0]).cwiseAbs().maxCoeff() == 0.0);

  const std::string path = "/tmp/rxlab_test_dataset.bin";
  save_dataset(path, a);
  const Dataset c = load_dataset(path, cfg.compat_hash());
  REQUIRE(c.seed == a.seed);
  REQUIRE(c.records.size() == a.records.size());
  for (int i = 0; i < 3; ++i) {
    REQUIRE(c.records[i].index == a.records[i].index);
    REQUIRE(c.records[i].snr_db == a.records[i].snr_db);
    REQUIRE(c.records[i].bits == a.records[i].bits);
    for (std::size_t l = 0; l < a.records[i].taps.size(); ++l)
      REQUIRE((c.records[i].taps[l] - a.records[i].taps[l]).cwiseAbs().maxCoeff() == 0.0);
    for (std::size_t r = 0; r < a.records[i].rx.per_rx.size(); ++r)
      REQUIRE((c.records[i].rx.per_rx[r] - a.records[i].rx.per_rx[r])
                  .cwiseAbs()
                  .maxCoeff() == 0.0);
  }
  REQUIRE_THROWS_AS(load_dataset(path, 0xdeadbeef), IoError);
  REQUIRE_NOTHROW(load_dataset(path));  // hash check skipped when expected is 0

  // Channel replay from the stored taps.
  const Channel ch = channel_of(cfg, a.records[0]);
  for (std::size_t l = 0; l < a.records[0].taps.size(); ++l)
    REQUIRE((ch.taps()[l] - a.records[0].taps[l]).cwiseAbs().maxCoeff() == 0.0);
  std::remove(path.c_str());
}

TEST_CASE("csv rows follow the pinned format") {
  REQUIRE(csv_header() ==
          "snr_db, detector, estimator, K, T, L, ser, ber, nmse_db, n_re, "
          "ci_halfwidth, seconds");
  SweepRow r;
  r.snr_db = 21.0;
  r.detector = "qrm";
  r.estimator = "perfect";
  r.k = 16;
  r.t = 2;
  r.l = 10;
  r.ser = 0.25;
  r.ber = 0.125;
  r.nmse = -20.5;
  r.n_re = 480;
  r.ci = 0.03125;
  r.seconds = 0.0;
  REQUIRE(csv_line(r) == "21, qrm, perfect, 16, 2, 10, 0.25, 0.125, -20.5, 480, 0.03125, 0");

  REQUIRE(telemetry_header() == "epoch, loss, val");
  TrainRow tr;
  tr.epoch = 3;
  tr.loss = 0.5;
  tr.val = -18.25;
  REQUIRE(telemetry_line(tr) == "3, 0.5, -18.25");
}

TEST_CASE("wilson interval matches a hand computation") {
  const double z = 1.96, n = 100.0, p = 0.05;
  const double z2 = z * z;
  const double want =
      (z / (1.0 + z2 / n)) * std::sqrt(p * (1.0 - p) / n + z2 / (4.0 * n * n));
  REQUIRE(wilson_halfwidth(5, 100) == Catch::Approx(want).margin(1e-15));
  REQUIRE(wilson_halfwidth(0, 0) == 0.0);
  // More trials shrink the interval.
  REQUIRE(wilson_halfwidth(50, 1000) < wilson_halfwidth(5, 100));
}

TEST_CASE("error counting follows the real-model dimension layout") {
  const Constellation qpsk(4);
  // One antenna, bits (1, 0). Bit 0 maps to amplitude +1 (level 1) and bit 1
  // to -1 (level 0), so the I rail lands on level 0 and Q on level 1.
  const std::uint8_t bits[2] = {1, 0};
  const Eigen::VectorXi lev = true_levels_of(bits, qpsk, 1);
  REQUIRE(lev[0] == 0);
  REQUIRE(lev[1] == 1);

  Mat post(2, 2);
  post << 0.1, 0.9,   // dim 0 decided as level 1: wrong
          0.2, 0.8;   // dim 1 decided as level 1: correct
  const ErrorCounter c = count_errors(post, lev, qpsk, 1);
  REQUIRE(c.symbols == 1);
  REQUIRE(c.symbol_errors == 1);  // either rail wrong flags the symbol
  REQUIRE(c.bits == 2);
  REQUIRE(c.bit_errors == 1);

  // 16QAM, two antennas: flip only antenna 0's I rail.
  const Constellation qam(16);
  std::vector<std::uint8_t> b16(8);
  Rng rng = Rng::derive(300, 0);
  for (auto& bit : b16) bit = static_cast<std::uint8_t>(rng.bit());
  const Eigen::VectorXi t16 = true_levels_of(b16.data(), qam, 2);
  Mat p16 = Mat::Zero(4, 4);
  for (int n = 0; n < 4; ++n) p16(n, t16[n]) = 1.0;
  p16.row(0).setZero();
  p16(0, (t16[0] + 1) % 4) = 1.0;
  const ErrorCounter c16 = count_errors(p16, t16, qam, 2);
  REQUIRE(c16.symbols == 2);
  REQUIRE(c16.symbol_errors == 1);  // only antenna 0 is wrong
  REQUIRE(c16.bits == 8);
  // Gray labels of adjacent levels differ by exactly one bit.
  REQUIRE(c16.bit_errors == 1);
}

TEST_CASE("training helpers validate and guard") {
  REQUIRE(validation_count(3) == 0);
  REQUIRE(validation_count(4) == 1);
  REQUIRE(validation_count(9) == 1);
  REQUIRE(validation_count(10) == 1);
  REQUIRE(validation_count(25) == 2);
  REQUIRE_NOTHROW(check_finite_loss(0.5, 1, "test"));
  REQUIRE_THROWS_AS(check_finite_loss(std::nan(""), 1, "test"), DivergenceError);
  REQUIRE_THROWS_AS(check_finite_loss(std::numeric_limits<double>::infinity(), 1, "test"),
                    DivergenceError);
}

TEST_CASE("flop table reproduces the published counts") {
  ExperimentConfig cfg;  // defaults: 48x14, 2x2, 16QAM, (8, 64, 32, 64), L=10
  const FlopTable t = flop_table(cfg);

  REQUIRE(t.srcnn[0] == 1368576);
  REQUIRE(t.srcnn[3] == 983040);
  REQUIRE(t.srcnn[6] == 15360);
  REQUIRE(t.fn[0] == 2304);
  REQUIRE(t.fn[2] == 4096);
  REQUIRE(t.fn[4] == 512);
  REQUIRE(t.vn[0] == 4096);
  REQUIRE(t.vn[2] == 4096);
  REQUIRE(t.vn[4] == 1024);
  REQUIRE(t.gnn[0] == 1024);
  REQUIRE(t.gnn[2] == 4096);
  REQUIRE(t.gnn[4] == 1024);
  REQUIRE(t.gru[0] == 11264);
  REQUIRE(t.total_order == 1500160);

  // Cells without a multiplying layer are marked absent.
  REQUIRE(t.srcnn[1] == FlopTable::kAbsent);
  REQUIRE(t.fn[1] == FlopTable::kAbsent);
  REQUIRE(t.gru[3] == FlopTable::kAbsent);

  REQUIRE(t.column_sum(t.srcnn) == 2366976);
  REQUIRE(t.column_sum(t.fn) == 6912);
  REQUIRE(t.column_sum(t.vn) == 9216);
  REQUIRE(t.column_sum(t.gnn) == 6144);
  REQUIRE(t.column_sum(t.gru) == 11264);

  const std::string rendered = render_flop_table(t);
  REQUIRE(rendered.find("1368576") != std::string::npos);
  REQUIRE(rendered.find("order evaluated: 1500160") != std::string::npos);
}

TEST_CASE("sweeps are reproducible and worker-count invariant") {
  ExperimentConfig cfg;
  cfg.n_tti = 3;
  cfg.snr_db = {10.0};
  cfg.seed = 5;
  cfg.qam_order = 16;
  cfg.k_best = 4;
  cfg.min_errors = 1000000;  // never stop early in this scenario

  const std::vector<DetectorKind> dets{DetectorKind::kQrm, DetectorKind::kEp};
  const std::vector<EstimatorKind> ests{EstimatorKind::kInterp};

  const auto rows_a = evaluate_sweep(cfg, dets, ests, EvalModels{});
  const auto rows_b = evaluate_sweep(cfg, dets, ests, EvalModels{});
  REQUIRE(rows_a.size() == 2);
  for (std::size_t i = 0; i < rows_a.size(); ++i)
    REQUIRE(csv_line(rows_a[i]) == csv_line(rows_b[i]));

  ExperimentConfig threaded = cfg;
  threaded.workers = 2;
  const auto rows_t = evaluate_sweep(threaded, dets, ests, EvalModels{});
  for (std::size_t i = 0; i < rows_a.size(); ++i)
    REQUIRE(csv_line(rows_a[i]) == csv_line(rows_t[i]));

  // Early stop decided during the ordered merge: still worker invariant.
  ExperimentConfig early = cfg;
  early.min_errors = 1;
  ExperimentConfig early_threaded = early;
  early_threaded.workers = 3;
  const auto rows_e1 = evaluate_sweep(early, dets, ests, EvalModels{});
  const auto rows_e3 = evaluate_sweep(early_threaded, dets, ests, EvalModels{});
  for (std::size_t i = 0; i < rows_e1.size(); ++i)
    REQUIRE(csv_line(rows_e1[i]) == csv_line(rows_e3[i]));
  // Early stop processed fewer resource elements.
  REQUIRE(rows_e1[0].n_re < rows_a[0].n_re);

  // Learned model selections require weights.
  REQUIRE_THROWS_AS(
      evaluate_sweep(cfg, {DetectorKind::kQrmnet}, ests, EvalModels{}), ConfigError);
  REQUIRE_THROWS_AS(
      evaluate_sweep(cfg, dets, {EstimatorKind::kSrcnn}, EvalModels{}), ConfigError);
}

TEST_CASE("sweep rows carry the run geometry") {
  ExperimentConfig cfg;
  cfg.n_tti = 1;
  cfg.snr_db = {15.0};
  cfg.seed = 6;
  cfg.k_best = 4;
  cfg.min_errors = 1 << 30;
  const auto rows = evaluate_sweep(cfg, {DetectorKind::kQrm}, {EstimatorKind::kPerfect},
                                   EvalModels{});
  REQUIRE(rows.size() == 1);
  REQUIRE(rows[0].snr_db == 15.0);
  REQUIRE(rows[0].detector == "qrm");
  REQUIRE(rows[0].estimator == "perfect");
  REQUIRE(rows[0].k == 4);
  REQUIRE(rows[0].n_re == 480);  // one TTI of payload REs
  REQUIRE(rows[0].nmse == kNmseFloorDb);  // perfect CSI
  REQUIRE(rows[0].seconds == 0.0);        // timing off by default
  REQUIRE(rows[0].ser >= 0.0);
  REQUIRE(rows[0].ci >= 0.0);
}
