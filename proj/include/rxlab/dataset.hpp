#pragma once

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "rxlab/channel.hpp"
#include "rxlab/config.hpp"
#include "rxlab/grid.hpp"
#include "rxlab/weights.hpp"

namespace rxlab {

// One simulated TTI: the channel taps (exact replay of H), the payload bits,
// the received grid, and the SNR it was drawn at.
struct TtiRecord {
  std::uint32_t index = 0;
  double snr_db = 0.0;
  std::vector<CMat> taps;          // [n_taps], each n_rx x n_tx
  std::vector<std::uint8_t> bits;  // payload bits, grid order
  RxGrid rx;
};

struct Dataset {
  std::uint64_t config_hash = 0;
  std::uint64_t seed = 0;
  std::vector<TtiRecord> records;
};

// Deterministic per-TTI generation: every TTI derives its own stream from
// (seed, index), so records are independent of generation order and worker
// count. Draw order within a TTI: channel taps, payload bits, noise.
inline TtiRecord generate_tti(const ExperimentConfig& cfg, const GridLayout& layout,
                              const Constellation& qam, std::uint32_t index,
                              double snr_db) {
  Rng rng = Rng::derive(cfg.seed, index);
  TtiRecord rec;
  rec.index = index;
  rec.snr_db = snr_db;
  Channel ch(cfg.channel_config(), rng);
  rec.taps = ch.taps();
  rec.bits = random_payload_bits(layout, qam, rng);
  const TxGrid tx = fill_grid(layout, qam, rec.bits);
  rec.rx = apply_channel(ch, tx, noise_var_for_snr_db(snr_db), rng);
  return rec;
}

inline Dataset generate_dataset(const ExperimentConfig& cfg) {
  const GridLayout layout = build_grid(cfg.grid_config());
  const Constellation qam(cfg.qam_order);
  Dataset ds;
  ds.config_hash = cfg.compat_hash();
  ds.seed = cfg.seed;
  ds.records.reserve(cfg.n_tti);
  for (int i = 0; i < cfg.n_tti; ++i) {
    const double snr = cfg.snr_db[i % cfg.snr_db.size()];
    ds.records.push_back(generate_tti(cfg, layout, qam, static_cast<std::uint32_t>(i), snr));
  }
  return ds;
}

// Dataset container: "RXDS" magic, u32 version, u64 config hash, u64 seed,
// u32 record count, then per record: u32 TTI index, f64 snr_db, tap matrices,
// payload bits (u8), received grid. Complex values as re,im float64 pairs,
// everything little-endian.
inline constexpr char kDatasetMagic[4] = {'R', 'X', 'D', 'S'};
inline constexpr std::uint32_t kDatasetVersion = 1;

namespace detail {

inline void write_cmat(std::ostream& os, const CMat& m) {
  write_le<std::uint32_t>(os, static_cast<std::uint32_t>(m.rows()));
  write_le<std::uint32_t>(os, static_cast<std::uint32_t>(m.cols()));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      write_le<double>(os, m(i, j).real());
      write_le<double>(os, m(i, j).imag());
    }
}

inline CMat read_cmat(std::istream& is) {
  const auto rows = read_le<std::uint32_t>(is);
  const auto cols = read_le<std::uint32_t>(is);
  if (rows > (1u << 20) || cols > (1u << 20)) throw IoError("implausible matrix shape");
  CMat m(rows, cols);
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      const double re = read_le<double>(is);
      const double im = read_le<double>(is);
      m(i, j) = cplx(re, im);
    }
  return m;
}

}  // namespace detail

inline void save_dataset(const std::string& path, const Dataset& ds) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open for writing: " + path);
  os.write(kDatasetMagic, 4);
  detail::write_le<std::uint32_t>(os, kDatasetVersion);
  detail::write_le<std::uint64_t>(os, ds.config_hash);
  detail::write_le<std::uint64_t>(os, ds.seed);
  detail::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(ds.records.size()));
  for (const auto& rec : ds.records) {
    detail::write_le<std::uint32_t>(os, rec.index);
    detail::write_le<double>(os, rec.snr_db);
    detail::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(rec.taps.size()));
    for (const auto& t : rec.taps) detail::write_cmat(os, t);
    detail::write_le<std::uint64_t>(os, rec.bits.size());
    os.write(reinterpret_cast<const char*>(rec.bits.data()),
             static_cast<std::streamsize>(rec.bits.size()));
    detail::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(rec.rx.per_rx.size()));
    for (const auto& g : rec.rx.per_rx) detail::write_cmat(os, g);
  }
  if (!os) throw IoError("write failed: " + path);
}

inline Dataset load_dataset(const std::string& path, std::uint64_t expected_hash = 0) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open: " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kDatasetMagic, 4) != 0)
    throw IoError("not a dataset file: " + path);
  const auto version = detail::read_le<std::uint32_t>(is);
  if (version != kDatasetVersion)
    throw IoError("unsupported dataset version " + std::to_string(version));
  Dataset ds;
  ds.config_hash = detail::read_le<std::uint64_t>(is);
  if (expected_hash != 0 && ds.config_hash != expected_hash)
    throw IoError("dataset " + path + " was generated under a different config " +
                  "(hash mismatch)");
  ds.seed = detail::read_le<std::uint64_t>(is);
  const auto count = detail::read_le<std::uint32_t>(is);
  ds.records.resize(count);
  for (auto& rec : ds.records) {
    rec.index = detail::read_le<std::uint32_t>(is);
    rec.snr_db = detail::read_le<double>(is);
    const auto n_taps = detail::read_le<std::uint32_t>(is);
    if (n_taps > 64) throw IoError("implausible tap count");
    rec.taps.resize(n_taps);
    for (auto& t : rec.taps) t = detail::read_cmat(is);
    const auto n_bits = detail::read_le<std::uint64_t>(is);
    if (n_bits > (1ull << 24)) throw IoError("implausible bit count");
    rec.bits.resize(n_bits);
    is.read(reinterpret_cast<char*>(rec.bits.data()),
            static_cast<std::streamsize>(n_bits));
    if (!is) throw IoError("unexpected end of file");
    const auto n_rx = detail::read_le<std::uint32_t>(is);
    if (n_rx > 64) throw IoError("implausible antenna count");
    rec.rx.per_rx.resize(n_rx);
    for (auto& g : rec.rx.per_rx) g = detail::read_cmat(is);
  }
  return ds;
}

inline Channel channel_of(const ExperimentConfig& cfg, const TtiRecord& rec) {
  return Channel(cfg.channel_config(), rec.taps);
}

}  // namespace rxlab
