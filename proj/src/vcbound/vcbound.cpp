#include "care/vcbound.hpp"

#include "care/error.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

namespace care::vc {

namespace {

Count checked_mul(Count a, Count b) {
  if (a != 0 && b > std::numeric_limits<Count>::max() / a) throw NumericError("count overflows 64 bits");
  return a * b;
}

Count checked_add(Count a, Count b) {
  if (b > std::numeric_limits<Count>::max() - a) throw NumericError("count overflows 64 bits");
  return a + b;
}

Count mul3(Count a, Count b, Count c) { return checked_mul(checked_mul(a, b), c); }

}  // namespace

void VcProfile::validate() const {
  if (n == 0) throw ConfigError("vc profile: n must be >= 1");
  if (layers.empty()) throw ConfigError("vc profile: at least one layer is required");
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const LayerDims& L = layers[l];
    if (L.gcn_in == 0 || L.gcn_out == 0 || L.set_in == 0 || L.set_out == 0 || L.trans_in == 0 ||
        L.trans_out == 0) {
      throw ConfigError("vc profile: layer " + std::to_string(l) + " has a zero width");
    }
    if (L.trans_in != L.set_out + L.gcn_out) {
      throw ConfigError("vc profile: layer " + std::to_string(l) + " needs trans_in = set_out + gcn_out");
    }
  }
}

VcProfile base_width_gcn(Count n, Count h1, Count d) {
  VcProfile p{n, {}};
  for (Count l = 0; l < d; ++l) p.layers.push_back({h1, h1, h1, h1, 2 * h1, h1});
  return p;
}

VcProfile base_width_care(Count n, Count h2, Count d) {
  VcProfile p{n, {}};
  for (Count l = 0; l < d; ++l) p.layers.push_back({h2, h2, h2, h2, 2 * h2, h2});
  return p;
}

Count mults_gcn(const VcProfile& p) {
  p.validate();
  const Count n2 = checked_mul(p.n, p.n);
  Count total = 0;
  for (const LayerDims& L : p.layers) {
    total = checked_add(total, checked_add(checked_mul(n2, L.gcn_in), mul3(p.n, L.gcn_in, L.gcn_out)));
  }
  return total;
}

Count mults_care(const VcProfile& p) {
  Count total = mults_gcn(p);
  const Count n2 = checked_mul(p.n, p.n);
  for (const LayerDims& L : p.layers) {
    const Count subgraph = checked_add(checked_mul(n2, L.gcn_out), checked_mul(p.n, L.gcn_out));
    const Count set = mul3(p.n, L.set_in, L.set_out);
    const Count trans = mul3(p.n, L.trans_in, L.trans_out);
    total = checked_add(total, checked_add(subgraph, checked_add(set, trans)));
  }
  return total;
}

ParamCounts param_counts(const VcProfile& p) {
  p.validate();
  ParamCounts c;
  for (const LayerDims& L : p.layers) {
    const Count gcn = checked_mul(L.gcn_in, L.gcn_out);
    c.t_gcn = checked_add(c.t_gcn, gcn);
    c.t_care = checked_add(c.t_care, checked_add(checked_add(gcn, L.gcn_out),
                                                 checked_add(checked_mul(L.set_in, L.set_out),
                                                             checked_mul(L.trans_in, L.trans_out))));
  }
  return c;
}

Count t1_base(Count h1) { return checked_mul(h1, h1); }

Count t2_base(Count h2) { return checked_add(checked_mul(4, checked_mul(h2, h2)), h2); }

Count q1_base(Count n, Count h1) { return checked_add(mul3(n, h1, h1), mul3(n, n, h1)); }

Count q2_base(Count n, Count h2) {
  return checked_add(checked_mul(4, mul3(n, h2, h2)), checked_mul(checked_add(checked_mul(2, checked_mul(n, n)), n), h2));
}

double match_parameters(Count h2) {
  if (h2 == 0) throw ConfigError("h2 must be >= 1");
  return std::sqrt(static_cast<double>(t2_base(h2)));
}

long double vc_bound_factor(long double q, Count d) {
  if (!(q >= 1.0L) || d == 0) throw ConfigError("vc bound needs q >= 1 and d >= 1");
  const long double dq = static_cast<long double>(d) * q;
  return dq * dq;
}

long double bound_ratio(long double q_a, long double q_b) {
  if (!(q_a > 0.0L) || !(q_b > 0.0L)) throw DomainError("bound ratio needs positive complexities");
  const long double r = q_a / q_b;
  return r * r;
}

Theorem1Report theorem1_check(Count n, Count h2, Count d) {
  if (n == 0 || h2 == 0 || d == 0) throw ConfigError("theorem check needs n, h2, d >= 1");
  Theorem1Report r;
  r.n = n;
  r.h2 = h2;
  r.d = d;
  r.t2 = t2_base(h2);
  r.h1 = match_parameters(h2);
  r.t1 = r.t2;
  const auto nd = static_cast<double>(n);
  const auto dd = static_cast<double>(d);
  const auto h2d = static_cast<double>(h2);
  r.q1 = dd * (nd * static_cast<double>(r.t2) + nd * nd * r.h1);
  r.q2 = dd * static_cast<double>(q2_base(n, h2));
  // h1 - 2 h2 = h2 / (h1 + 2 h2) avoids cancellation for large h2.
  r.difference = dd * nd * nd * h2d / (r.h1 + 2.0 * h2d);
  r.bound_ratio = static_cast<double>(bound_ratio(r.q1, r.q2));
  r.verdict = r.difference > 0.0 && r.q1 > r.q2;
  return r;
}

nlohmann::json to_json(const Theorem1Report& r) {
  return {{"n", r.n},       {"h2", r.h2}, {"d", r.d},   {"h1", r.h1},
          {"t1", r.t1},     {"t2", r.t2}, {"q1", r.q1}, {"q2", r.q2},
          {"difference", r.difference},   {"bound_ratio", r.bound_ratio},
          {"bound_gcn", "alpha*" + std::to_string(static_cast<double>(vc_bound_factor(r.q1, r.d)))},
          {"bound_care", "alpha*" + std::to_string(static_cast<double>(vc_bound_factor(r.q2, r.d)))},
          {"verdict", r.verdict}};
}

std::string format_table(const std::vector<Theorem1Report>& rows) {
  std::ostringstream os;
  char line[256];
  std::snprintf(line, sizeof(line), "%6s %6s %4s %12s %12s %18s %18s %16s %8s\n", "n", "h2", "d", "t1", "t2",
                "q1", "q2", "diff", "verdict");
  os << line;
  for (const auto& r : rows) {
    std::snprintf(line, sizeof(line), "%6llu %6llu %4llu %12llu %12llu %18.6f %18.1f %16.6f %8s\n",
                  static_cast<unsigned long long>(r.n), static_cast<unsigned long long>(r.h2),
                  static_cast<unsigned long long>(r.d), static_cast<unsigned long long>(r.t1),
                  static_cast<unsigned long long>(r.t2), r.q1, r.q2, r.difference, r.verdict ? "true" : "false");
    os << line;
  }
  return os.str();
}

SweepSummary sweep(Count n_max, Count h2_max, const std::vector<Count>& depths) {
  if (n_max == 0 || h2_max == 0 || depths.empty()) throw ConfigError("sweep needs a non-empty grid");
  SweepSummary s;
  s.depths = depths;
  s.cells = static_cast<std::size_t>(n_max * h2_max);
  s.min_difference = std::numeric_limits<double>::infinity();
  for (Count d : depths) {
    for (Count n = 1; n <= n_max; ++n) {
      for (Count h2 = 1; h2 <= h2_max; ++h2) {
        const Theorem1Report r = theorem1_check(n, h2, d);
        ++s.evaluations;
        if (!r.verdict) ++s.failures;
        s.min_difference = std::min(s.min_difference, r.difference);
      }
    }
  }
  return s;
}

}  // namespace care::vc
