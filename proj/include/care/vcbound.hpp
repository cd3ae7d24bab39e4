#pragma once

// Parameter and multiplication counts of a d-layer GCN and its class-aware
// counterpart, the VC-dimension upper bound alpha (d q)^2, and the
// parameter-matched comparison of the two bounds.

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"

namespace care::vc {

using Count = std::uint64_t;

/// Widths of one layer.
struct LayerDims {
  Count gcn_in = 0;
  Count gcn_out = 0;
  Count set_in = 0;
  Count set_out = 0;
  Count trans_in = 0;
  Count trans_out = 0;
};

struct VcProfile {
  Count n = 0;                   ///< node count
  std::vector<LayerDims> layers; ///< one entry per layer; d = layers.size()

  /// Throws ConfigError for n = 0, no layers, a zero width, or
  /// trans_in != set_out + gcn_out.
  void validate() const;
  Count depth() const { return layers.size(); }
};

/// Every layer with gcn_in = gcn_out = h1 (GCN) and the CARE widths
/// set_in = set_out = h2, trans_in = 2 h2, trans_out = h2, gcn_in = gcn_out = h2.
VcProfile base_width_gcn(Count n, Count h1, Count d);
VcProfile base_width_care(Count n, Count h2, Count d);

/// Sum over layers of n^2 gcn_in + n gcn_in gcn_out.
Count mults_gcn(const VcProfile& p);
/// Adds n^2 gcn_out + n gcn_out (scoring), n set_in set_out and
/// n trans_in trans_out per layer.
Count mults_care(const VcProfile& p);

struct ParamCounts {
  Count t_gcn = 0;
  Count t_care = 0;
};

/// t_gcn = sum gcn_in gcn_out; t_care adds gcn_out + set_in set_out +
/// trans_in trans_out per layer.
ParamCounts param_counts(const VcProfile& p);

/// Closed forms for one base-width layer.
Count t1_base(Count h1);             ///< h1^2
Count t2_base(Count h2);             ///< 4 h2^2 + h2
Count q1_base(Count n, Count h1);    ///< n h1^2 + n^2 h1
Count q2_base(Count n, Count h2);    ///< 4 n h2^2 + (2 n^2 + n) h2

/// sqrt(4 h2^2 + h2), the real GCN width with as many parameters as CARE.
double match_parameters(Count h2);

/// (d q)^2; the bound is alpha times this value.
long double vc_bound_factor(long double q, Count d);

/// bound(a) / bound(b) at equal depth: (q_a / q_b)^2, alpha-free.
long double bound_ratio(long double q_a, long double q_b);

struct Theorem1Report {
  Count n = 0;
  Count h2 = 0;
  Count d = 0;
  Count t1 = 0;              ///< equals t2: h1 is chosen to match
  Count t2 = 0;
  double h1 = 0.0;
  double q1 = 0.0;           ///< d (n h1^2 + n^2 h1), real h1
  double q2 = 0.0;           ///< d q2_base(n, h2), exact integer as double
  double difference = 0.0;   ///< q1 - q2 = d n^2 (h1 - 2 h2)
  double bound_ratio = 0.0;  ///< (q1 / q2)^2
  bool verdict = false;      ///< q1 > q2
};

Theorem1Report theorem1_check(Count n, Count h2, Count d);

nlohmann::json to_json(const Theorem1Report& r);
/// Aligned table: n h2 d t1 t2 q1 q2 diff verdict.
std::string format_table(const std::vector<Theorem1Report>& rows);

struct SweepSummary {
  std::size_t cells = 0;        ///< (n, h2) grid cells
  std::size_t evaluations = 0;  ///< cells x depths
  std::size_t failures = 0;
  double min_difference = 0.0;
  std::vector<Count> depths;
};

/// n in [1, n_max], h2 in [1, h2_max], for each depth.
SweepSummary sweep(Count n_max, Count h2_max, const std::vector<Count>& depths);

}  // namespace care::vc
