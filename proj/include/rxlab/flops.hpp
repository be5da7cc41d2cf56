#pragma once

#include <cstdio>
#include <string>

#include "rxlab/config.hpp"

namespace rxlab {

// Multiplication counts per network and stage, following the published
// accounting conventions: N_t counts complex antennas and N_A is the full
// QAM order. Stage indices are 0-based I..VII; kAbsent marks cells without a
// multiplying layer.
struct FlopTable {
  static constexpr int kStages = 7;
  static constexpr long long kAbsent = -1;

  long long srcnn[kStages];
  long long fn[kStages];
  long long vn[kStages];
  long long gnn[kStages];
  long long gru[kStages];
  long long total_order = 0;  // evaluated summed order expression
  std::string order_expr;

  long long column_sum(const long long* col) const {
    long long s = 0;
    for (int i = 0; i < kStages; ++i)
      if (col[i] != kAbsent) s += col[i];
    return s;
  }
};

inline FlopTable flop_table(int n_c, int n_s, int n_t, int qam_order, int n_u, int n_h1,
                            int n_h2, int n_h3, int l_inner) {
  const long long nc = n_c, ns = n_s, nt = n_t, na = qam_order;
  const long long nu = n_u, h1 = n_h1, h2 = n_h2, h3 = n_h3, li = l_inner;
  FlopTable t;
  for (int i = 0; i < FlopTable::kStages; ++i)
    t.srcnn[i] = t.fn[i] = t.vn[i] = t.gnn[i] = t.gru[i] = FlopTable::kAbsent;

  t.srcnn[0] = 81 * h1 * (ns - 8) * (nc - 4);
  t.srcnn[3] = h1 * h2 * nc * (ns - 4);
  t.srcnn[6] = h2 * nc * (ns - 4);

  t.fn[0] = 2 * (nu + 1) * (nt - 1) * h1 * nt;
  t.fn[2] = nt * (nt - 1) * h1 * h2;
  t.fn[4] = nt * (nt - 1) * h2 * nu;

  t.vn[0] = nt * h1 * h2;
  t.vn[2] = nt * h2 * h3;
  t.vn[4] = nt * h3 * nu;

  t.gnn[0] = nt * nu * h1;
  t.gnn[2] = nt * h1 * h2;
  t.gnn[4] = nt * h2 * na;

  t.gru[0] = nt * (nu + na + h1) * h1;

  t.total_order = h1 * h2 * nc * ns + li * nt * nt * (nu * h1 + nu * h2 + h1 * h2) +
                  nt * h1 * (nu + na + h1);
  t.order_expr =
      "N_h1*N_h2*N_c*N_s + L*N_t^2*(N_u*N_h1 + N_u*N_h2 + N_h1*N_h2) + "
      "N_t*N_h1*(N_u + N_A + N_h1)";
  return t;
}

inline FlopTable flop_table(const ExperimentConfig& cfg) {
  return flop_table(cfg.n_subcarriers, cfg.n_symbols, cfg.n_tx, cfg.qam_order, cfg.n_u,
                    cfg.n_h1, cfg.n_h2, cfg.n_h3, cfg.l_inner);
}

inline std::string render_flop_table(const FlopTable& t) {
  static const char* stage_names[FlopTable::kStages] = {"I",  "II", "III", "IV",
                                                        "V",  "VI", "VII"};
  const auto cell = [](long long v) {
    char buf[32];
    if (v == FlopTable::kAbsent) return std::string("x");
    std::snprintf(buf, sizeof(buf), "%lld", v);
    return std::string(buf);
  };
  std::string out;
  char line[256];
  std::snprintf(line, sizeof(line), "%-6s %12s %12s %12s %12s %12s\n", "stage", "SRCNN",
                "FN", "VN", "GNN", "GRU");
  out += line;
  for (int i = 0; i < FlopTable::kStages; ++i) {
    std::snprintf(line, sizeof(line), "%-6s %12s %12s %12s %12s %12s\n", stage_names[i],
                  cell(t.srcnn[i]).c_str(), cell(t.fn[i]).c_str(), cell(t.vn[i]).c_str(),
                  cell(t.gnn[i]).c_str(), cell(t.gru[i]).c_str());
    out += line;
  }
  std::snprintf(line, sizeof(line), "%-6s %12lld %12lld %12lld %12lld %12lld\n", "sum",
                t.column_sum(t.srcnn), t.column_sum(t.fn), t.column_sum(t.vn),
                t.column_sum(t.gnn), t.column_sum(t.gru));
  out += line;
  out += "order: " + t.order_expr + "\n";
  std::snprintf(line, sizeof(line), "order evaluated: %lld\n", t.total_order);
  out += line;
  return out;
}

}  // namespace rxlab
