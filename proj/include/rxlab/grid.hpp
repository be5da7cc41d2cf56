#pragma once

#include <algorithm>
#include <vector>

#include "rxlab/common.hpp"
#include "rxlab/constellation.hpp"
#include "rxlab/rng.hpp"

namespace rxlab {

struct RePos {
  int sym;
  int sc;
  bool operator==(const RePos&) const = default;
};

struct GridConfig {
  int n_subcarriers = 48;
  int n_symbols = 14;
  int n_pilots = 32;  // per antenna, split evenly across the pilot symbols
  int fft_size = 64;
  int n_tx = 2;
  std::vector<int> pilot_symbols = {2, 11};
  std::vector<int> guard_symbols = {0, 13};
  std::uint64_t pilot_seed = 0x70696c6f74ull;  // DMRS values are fixed, not per-TTI
};

// Static TTI layout: pilot positions per tx antenna (mutually disjoint comb),
// shared payload positions, and the predefined unit-modulus pilot values.
class GridLayout {
 public:
  GridConfig cfg;
  std::vector<std::vector<RePos>> pilots;  // [tx][p]
  std::vector<CVec> pilot_values;          // [tx], aligned with pilots[tx]
  std::vector<RePos> payload;

  int n_payload() const { return static_cast<int>(payload.size()); }
  int n_pilots() const { return cfg.n_pilots; }

  bool is_pilot_of(int tx, int sym, int sc) const {
    for (const auto& p : pilots[tx])
      if (p.sym == sym && p.sc == sc) return true;
    return false;
  }

  // Per-antenna partition: own pilots + payload + guard covers the grid.
  int n_guard_per_antenna() const {
    return cfg.n_symbols * cfg.n_subcarriers - cfg.n_pilots - n_payload();
  }
};

inline GridLayout build_grid(const GridConfig& cfg) {
  if (cfg.n_subcarriers <= 0 || cfg.n_symbols <= 0 || cfg.n_tx <= 0)
    throw ConfigError("grid dimensions must be positive");
  if (cfg.pilot_symbols.empty()) throw ConfigError("no pilot symbols configured");
  const int n_psym = static_cast<int>(cfg.pilot_symbols.size());
  if (cfg.n_pilots % n_psym != 0)
    throw ConfigError("pilot count not divisible by number of pilot symbols");
  const int per_sym = cfg.n_pilots / n_psym;
  if (per_sym * cfg.n_tx > cfg.n_subcarriers)
    throw ConfigError("pilot layout infeasible: " + std::to_string(per_sym) +
                      " tones/symbol x " + std::to_string(cfg.n_tx) +
                      " antennas exceeds " + std::to_string(cfg.n_subcarriers) +
                      " subcarriers");
  const int comb_slots = cfg.n_subcarriers / cfg.n_tx;
  if (per_sym > comb_slots)
    throw ConfigError("pilot layout infeasible: comb has too few slots");

  for (int s : cfg.pilot_symbols)
    if (s < 0 || s >= cfg.n_symbols) throw ConfigError("pilot symbol out of range");

  GridLayout g;
  g.cfg = cfg;
  g.pilots.resize(cfg.n_tx);
  g.pilot_values.resize(cfg.n_tx);

  // Antenna n rides comb offset n with stride n_tx; the per_sym tones used are
  // spread evenly over the comb slots so pilots span the whole band.
  for (int tx = 0; tx < cfg.n_tx; ++tx) {
    for (int sym : cfg.pilot_symbols) {
      for (int j = 0; j < per_sym; ++j) {
        const int slot = static_cast<int>((static_cast<long>(j) * comb_slots) / per_sym);
        g.pilots[tx].push_back({sym, slot * cfg.n_tx + tx});
      }
    }
  }

  // Predefined QPSK pilot values from the layout seed.
  for (int tx = 0; tx < cfg.n_tx; ++tx) {
    Rng rng = Rng::derive(cfg.pilot_seed, static_cast<std::uint64_t>(tx));
    CVec v(cfg.n_pilots);
    const double s = 1.0 / std::sqrt(2.0);
    for (int p = 0; p < cfg.n_pilots; ++p)
      v[p] = cplx((rng.bit() ? s : -s), (rng.bit() ? s : -s));
    g.pilot_values[tx] = v;
  }

  // Payload: every subcarrier of every symbol that is neither pilot nor guard.
  for (int sym = 0; sym < cfg.n_symbols; ++sym) {
    const bool is_pilot_sym =
        std::find(cfg.pilot_symbols.begin(), cfg.pilot_symbols.end(), sym) !=
        cfg.pilot_symbols.end();
    const bool is_guard_sym =
        std::find(cfg.guard_symbols.begin(), cfg.guard_symbols.end(), sym) !=
        cfg.guard_symbols.end();
    if (is_pilot_sym || is_guard_sym) continue;
    for (int sc = 0; sc < cfg.n_subcarriers; ++sc) g.payload.push_back({sym, sc});
  }
  return g;
}

// Per-antenna complex tx grids for one TTI: payload symbols at payload REs,
// pilots on own pilot REs, zero elsewhere (guard and other antennas' pilots).
struct TxGrid {
  std::vector<CMat> per_tx;  // n_symbols x n_subcarriers each

  const cplx& at(int tx, int sym, int sc) const { return per_tx[tx](sym, sc); }
};

// Payload bit order: payload REs in layout order, antennas innermost, then the
// bits_per_symbol() bits of each QAM symbol.
inline TxGrid fill_grid(const GridLayout& g, const Constellation& qam,
                        const std::vector<std::uint8_t>& bits) {
  const int n_tx = g.cfg.n_tx;
  const int bps = qam.bits_per_symbol();
  const std::size_t need =
      static_cast<std::size_t>(g.n_payload()) * n_tx * bps;
  if (bits.size() != need)
    throw ConfigError("payload bit count mismatch: need " + std::to_string(need) +
                      ", got " + std::to_string(bits.size()));

  TxGrid tx;
  tx.per_tx.assign(n_tx, CMat::Zero(g.cfg.n_symbols, g.cfg.n_subcarriers));
  std::size_t off = 0;
  for (const auto& re : g.payload) {
    for (int a = 0; a < n_tx; ++a) {
      tx.per_tx[a](re.sym, re.sc) = qam.map_symbol(&bits[off]);
      off += bps;
    }
  }
  for (int a = 0; a < n_tx; ++a)
    for (std::size_t p = 0; p < g.pilots[a].size(); ++p)
      tx.per_tx[a](g.pilots[a][p].sym, g.pilots[a][p].sc) = g.pilot_values[a][p];
  return tx;
}

inline std::vector<std::uint8_t> random_payload_bits(const GridLayout& g,
                                                     const Constellation& qam,
                                                     Rng& rng) {
  std::vector<std::uint8_t> bits(
      static_cast<std::size_t>(g.n_payload()) * g.cfg.n_tx * qam.bits_per_symbol());
  for (auto& b : bits) b = static_cast<std::uint8_t>(rng.bit());
  return bits;
}

}  // namespace rxlab
