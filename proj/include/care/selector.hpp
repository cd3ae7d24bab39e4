#pragma once

// Subgraph selection: SAGPool-style top-k scoring and the pass-through
// ("none") variant.

#include "care/diffcore.hpp"

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace care::sel {

using diff::Index;
using diff::Matrix;
using diff::Tensor;

enum class SelectorKind { SagPool, None };

std::string to_string(SelectorKind kind);
SelectorKind parse_selector_kind(std::string_view name);

struct SelectorConfig {
  SelectorKind kind = SelectorKind::SagPool;
  double pooling_ratio = 0.5;

  /// Throws ConfigError unless the ratio lies in (0, 1].
  void validate() const;
};

/// max(1, ceil(ratio * n)). A 1e-9 slack keeps ratio * n products such as
/// 0.3 * 10 from rounding up past the exact integer.
Index keep_count(Index n, double ratio);

/// Indices of the k largest scores, ties to the lower index, returned in
/// ascending index order.
std::vector<Index> top_k(const Matrix& scores, Index k);

struct Selection {
  Matrix adjacency;             ///< k x k raw induced adjacency
  Tensor features;              ///< k x h
  std::vector<Index> kept;      ///< strictly increasing
  Tensor scores;                ///< n x 1 (invalid for the pass-through)
};

/// s = A_hat H w; keeps top-k nodes and gates their rows by tanh(s).
/// `fixed_kept` replaces the top-k choice (finite-difference checks hold the
/// index set at its forward value).
Selection sagpool_select(const Matrix& adjacency, const Tensor& a_hat, const Tensor& h,
                         const Tensor& score_weights, double ratio,
                         const std::optional<std::vector<Index>>& fixed_kept = std::nullopt);

Selection none_select(const Matrix& adjacency, const Tensor& h);

/// A[kept][kept].
Matrix induced_submatrix(const Matrix& adjacency, const std::vector<Index>& kept);

}  // namespace care::sel
