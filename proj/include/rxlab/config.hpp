#pragma once

#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "rxlab/channel.hpp"
#include "rxlab/common.hpp"
#include "rxlab/constellation.hpp"
#include "rxlab/detect_gnn.hpp"
#include "rxlab/grid.hpp"

namespace rxlab {

enum class DetectorKind { kQrm, kQrmnet, kEp, kMl, kGnnEp };
enum class EstimatorKind { kPerfect, kInterp, kLmmse, kSrcnn };

inline std::string to_string(DetectorKind d) {
  switch (d) {
    case DetectorKind::kQrm: return "qrm";
    case DetectorKind::kQrmnet: return "qrmnet";
    case DetectorKind::kEp: return "ep";
    case DetectorKind::kMl: return "ml";
    case DetectorKind::kGnnEp: return "gnn_ep";
  }
  return "?";
}

inline std::string to_string(EstimatorKind e) {
  switch (e) {
    case EstimatorKind::kPerfect: return "perfect";
    case EstimatorKind::kInterp: return "interp";
    case EstimatorKind::kLmmse: return "lmmse";
    case EstimatorKind::kSrcnn: return "srcnn";
  }
  return "?";
}

inline DetectorKind detector_from_string(const std::string& s) {
  if (s == "qrm") return DetectorKind::kQrm;
  if (s == "qrmnet") return DetectorKind::kQrmnet;
  if (s == "ep") return DetectorKind::kEp;
  if (s == "ml") return DetectorKind::kMl;
  if (s == "gnn_ep") return DetectorKind::kGnnEp;
  throw ConfigError("unknown detector: " + s);
}

inline EstimatorKind estimator_from_string(const std::string& s) {
  if (s == "perfect") return EstimatorKind::kPerfect;
  if (s == "interp") return EstimatorKind::kInterp;
  if (s == "lmmse") return EstimatorKind::kLmmse;
  if (s == "srcnn") return EstimatorKind::kSrcnn;
  throw ConfigError("unknown estimator: " + s);
}

// Everything one run needs. Defaults are the standard system configuration:
// 48 subcarriers x 14 symbols, 32 pilots, 2x2 with 16QAM, T=2 outer and L=10
// inner iterations, network widths (N_u, N_h1, N_h2, N_h3) = (8, 64, 32, 64).
struct ExperimentConfig {
  // grid
  int n_subcarriers = 48;
  int n_symbols = 14;
  int n_pilots = 32;
  int fft_size = 64;
  std::uint64_t pilot_seed = 0x70696c6f74ull;
  // mimo + constellation
  int n_tx = 2;
  int n_rx = 2;
  int qam_order = 16;
  // channel
  double alpha = 0.0;
  double beta = 0.0;
  int n_taps = 4;
  double tap_decay_db = 3.0;
  // detector
  DetectorKind detector = DetectorKind::kQrmnet;
  int k_best = 16;
  int t_outer = 2;
  int l_inner = 10;
  bool max_log = false;
  bool debug_passthrough = false;
  std::string prior_feature = "moments";  // moments | distribution
  int ep_iterations = 10;
  double ep_damping = 0.9;
  // channel estimation
  EstimatorKind estimator = EstimatorKind::kPerfect;
  double kernel_sf = 4.0;
  double kernel_st = 4.0;
  // network widths
  int n_u = 8;
  int n_h1 = 64;
  int n_h2 = 32;
  int n_h3 = 64;
  // sweep / training
  std::vector<double> snr_db = {10.0};
  std::uint64_t seed = 1;
  int n_tti = 50;
  int epochs = 20;
  double lr = 1e-3;
  int batch_re = 128;
  int min_errors = 200;
  int max_tti = 0;  // 0: use all dataset TTIs
  bool emit_timing = false;
  int log_every = 0;
  int workers = 1;

  GridConfig grid_config() const {
    GridConfig g;
    g.n_subcarriers = n_subcarriers;
    g.n_symbols = n_symbols;
    g.n_pilots = n_pilots;
    g.fft_size = fft_size;
    g.n_tx = n_tx;
    g.pilot_seed = pilot_seed;
    return g;
  }

  ChannelConfig channel_config() const {
    ChannelConfig c;
    c.n_rx = n_rx;
    c.n_tx = n_tx;
    c.alpha = alpha;
    c.beta = beta;
    c.n_taps = n_taps;
    c.tap_decay_db = tap_decay_db;
    c.fft_size = fft_size;
    return c;
  }

  GnnConfig gnn_config() const {
    GnnConfig g;
    g.n_u = n_u;
    g.n_h1 = n_h1;
    g.n_h2 = n_h2;
    g.n_h3 = n_h3;
    g.n_amp = Constellation(qam_order).pam_size();
    g.t_outer = t_outer;
    g.l_inner = l_inner;
    g.k_best = k_best;
    g.prior_feature = prior_feature == "distribution"
                          ? GnnConfig::PriorFeature::kDistribution
                          : GnnConfig::PriorFeature::kMoments;
    g.prior_source = detector == DetectorKind::kGnnEp ? GnnConfig::PriorSource::kEp
                                                      : GnnConfig::PriorSource::kQrm;
    g.ep_iterations = ep_iterations;
    g.ep_damping = ep_damping;
    g.debug_passthrough = debug_passthrough;
    return g;
  }

  void validate() const {
    build_grid(grid_config());          // throws with a layout-specific message
    Constellation qam(qam_order);       // throws on bad order
    (void)qam;
    if (n_rx < 1) throw ConfigError("need at least one rx antenna");
    if (!(alpha >= 0.0 && alpha < 1.0) || !(beta >= 0.0 && beta < 1.0))
      throw ConfigError("correlation levels must be in [0,1)");
    if (n_taps < 1) throw ConfigError("need at least one channel tap");
    if (k_best < 1) throw ConfigError("k_best must be >= 1");
    if (t_outer < 1 || l_inner < 1) throw ConfigError("iteration counts must be >= 1");
    if (prior_feature != "moments" && prior_feature != "distribution")
      throw ConfigError("prior_feature must be moments or distribution");
    if (!(ep_damping > 0.0 && ep_damping <= 1.0))
      throw ConfigError("ep_damping must be in (0,1]");
    if (n_u < 1 || n_h1 < 1 || n_h2 < 1 || n_h3 < 1)
      throw ConfigError("network widths must be positive");
    if (snr_db.empty()) throw ConfigError("snr_db list is empty");
    if (n_tti < 1) throw ConfigError("n_tti must be >= 1");
    if (epochs < 1) throw ConfigError("epochs must be >= 1");
    if (batch_re < 1) throw ConfigError("batch_re must be >= 1");
    if (!(lr > 0.0)) throw ConfigError("learning rate must be positive");
    if (workers < 1) throw ConfigError("workers must be >= 1");
  }

  // Canonical text of the fields that define data and weight compatibility:
  // the physical problem plus the network shapes. Runtime knobs (K, T, L,
  // SNR list, seeds, batch sizes) stay out so one weight file serves a
  // family of runs.
  std::string compat_canonical() const {
    std::ostringstream os;
    os << "grid:" << n_subcarriers << "," << n_symbols << "," << n_pilots << ","
       << fft_size << "," << pilot_seed << ";mimo:" << n_tx << "," << n_rx
       << ";qam:" << qam_order << ";chan:" << fmt(alpha) << "," << fmt(beta) << ","
       << n_taps << "," << fmt(tap_decay_db) << ";net:" << n_u << "," << n_h1 << ","
       << n_h2 << "," << n_h3 << "," << prior_feature << ";kernel:" << fmt(kernel_sf)
       << "," << fmt(kernel_st);
    return os.str();
  }

  std::uint64_t compat_hash() const { return fnv1a64(compat_canonical()); }

 private:
  static std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
  }
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline bool parse_bool(const std::string& v, const std::string& key) {
  if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
  if (v == "0" || v == "false" || v == "no" || v == "off") return false;
  throw ConfigError("bad boolean for " + key + ": " + v);
}

inline std::vector<double> parse_double_list(const std::string& v) {
  std::vector<double> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    std::size_t used = 0;
    const double d = std::stod(item, &used);
    if (used != item.size()) throw ConfigError("bad number in list: " + item);
    out.push_back(d);
  }
  return out;
}

}  // namespace detail

inline void apply_config_entry(ExperimentConfig& c, const std::string& key,
                               const std::string& value) {
  using detail::parse_bool;
  const auto as_int = [&](void) {
    std::size_t used = 0;
    const long v = std::stol(value, &used);
    if (used != value.size()) throw ConfigError("bad integer for " + key + ": " + value);
    return static_cast<int>(v);
  };
  const auto as_u64 = [&](void) {
    std::size_t used = 0;
    const unsigned long long v = std::stoull(value, &used, 0);
    if (used != value.size()) throw ConfigError("bad integer for " + key + ": " + value);
    return static_cast<std::uint64_t>(v);
  };
  const auto as_double = [&](void) {
    std::size_t used = 0;
    const double v = std::stod(value, &used);
    if (used != value.size()) throw ConfigError("bad number for " + key + ": " + value);
    return v;
  };

  if (key == "n_subcarriers") c.n_subcarriers = as_int();
  else if (key == "n_symbols") c.n_symbols = as_int();
  else if (key == "n_pilots") c.n_pilots = as_int();
  else if (key == "fft_size") c.fft_size = as_int();
  else if (key == "pilot_seed") c.pilot_seed = as_u64();
  else if (key == "n_tx") c.n_tx = as_int();
  else if (key == "n_rx") c.n_rx = as_int();
  else if (key == "qam_order") c.qam_order = as_int();
  else if (key == "alpha") c.alpha = as_double();
  else if (key == "beta") c.beta = as_double();
  else if (key == "n_taps") c.n_taps = as_int();
  else if (key == "tap_decay_db") c.tap_decay_db = as_double();
  else if (key == "detector") c.detector = detector_from_string(value);
  else if (key == "k_best") c.k_best = as_int();
  else if (key == "t_outer") c.t_outer = as_int();
  else if (key == "l_inner") c.l_inner = as_int();
  else if (key == "max_log") c.max_log = parse_bool(value, key);
  else if (key == "debug_passthrough") c.debug_passthrough = parse_bool(value, key);
  else if (key == "prior_feature") c.prior_feature = value;
  else if (key == "ep_iterations") c.ep_iterations = as_int();
  else if (key == "ep_damping") c.ep_damping = as_double();
  else if (key == "estimator") c.estimator = estimator_from_string(value);
  else if (key == "kernel_sf") c.kernel_sf = as_double();
  else if (key == "kernel_st") c.kernel_st = as_double();
  else if (key == "n_u") c.n_u = as_int();
  else if (key == "n_h1") c.n_h1 = as_int();
  else if (key == "n_h2") c.n_h2 = as_int();
  else if (key == "n_h3") c.n_h3 = as_int();
  else if (key == "snr_db") c.snr_db = detail::parse_double_list(value);
  else if (key == "seed") c.seed = as_u64();
  else if (key == "n_tti") c.n_tti = as_int();
  else if (key == "epochs") c.epochs = as_int();
  else if (key == "lr") c.lr = as_double();
  else if (key == "batch_re") c.batch_re = as_int();
  else if (key == "min_errors") c.min_errors = as_int();
  else if (key == "max_tti") c.max_tti = as_int();
  else if (key == "emit_timing") c.emit_timing = parse_bool(value, key);
  else if (key == "log_every") c.log_every = as_int();
  else if (key == "workers") c.workers = as_int();
  else throw ConfigError("unknown config key: " + key);
}

// key = value lines; '#' starts a comment; blank lines ignored.
inline ExperimentConfig load_config(const std::string& path,
                                    const std::vector<std::string>& overrides = {}) {
  ExperimentConfig c;
  if (!path.empty()) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open config: " + path);
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
      ++lineno;
      const auto hash = line.find('#');
      if (hash != std::string::npos) line = line.substr(0, hash);
      line = detail::trim(line);
      if (line.empty()) continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos)
        throw ConfigError(path + ":" + std::to_string(lineno) + ": expected key = value");
      apply_config_entry(c, detail::trim(line.substr(0, eq)),
                         detail::trim(line.substr(eq + 1)));
    }
  }
  for (const auto& ov : overrides) {
    const auto eq = ov.find('=');
    if (eq == std::string::npos)
      throw ConfigError("override must be key=value: " + ov);
    apply_config_entry(c, detail::trim(ov.substr(0, eq)), detail::trim(ov.substr(eq + 1)));
  }
  c.validate();
  return c;
}

}  // namespace rxlab
