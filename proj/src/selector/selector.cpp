#include "care/selector.hpp"

#include "care/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace care::sel {

std::string to_string(SelectorKind kind) {
  return kind == SelectorKind::SagPool ? "sagpool" : "none";
}

SelectorKind parse_selector_kind(std::string_view name) {
  if (name == "sagpool") return SelectorKind::SagPool;
  if (name == "none") return SelectorKind::None;
  throw ConfigError("unknown selector '" + std::string(name) + "' (expected sagpool or none)");
}

void SelectorConfig::validate() const {
  if (!(pooling_ratio > 0.0 && pooling_ratio <= 1.0)) {
    throw ConfigError("pooling_ratio must lie in (0, 1], got " + std::to_string(pooling_ratio));
  }
}

Index keep_count(Index n, double ratio) {
  if (n < 1) throw DomainError("keep_count: graph has no nodes");
  const auto k = static_cast<Index>(std::ceil(ratio * static_cast<double>(n) - 1e-9));
  return std::clamp<Index>(k, 1, n);
}

std::vector<Index> top_k(const Matrix& scores, Index k) {
  const Index n = scores.rows();
  if (scores.cols() != 1) throw ShapeError("top_k: scores must be n x 1, got " + diff::shape_string(scores));
  if (k < 0 || k > n) throw DomainError("top_k: k out of range");
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](Index a, Index b) { return scores(a, 0) > scores(b, 0); });
  order.resize(static_cast<std::size_t>(k));
  std::sort(order.begin(), order.end());
  return order;
}

Matrix induced_submatrix(const Matrix& adjacency, const std::vector<Index>& kept) {
  const auto k = static_cast<Index>(kept.size());
  Matrix sub(k, k);
  for (Index i = 0; i < k; ++i) {
    for (Index j = 0; j < k; ++j) sub(i, j) = adjacency(kept[i], kept[j]);
  }
  return sub;
}

Selection sagpool_select(const Matrix& adjacency, const Tensor& a_hat, const Tensor& h,
                         const Tensor& score_weights, double ratio,
                         const std::optional<std::vector<Index>>& fixed_kept) {
  const Index n = h.rows();
  if (n < 1) throw DomainError("sagpool_select: graph has no nodes");
  if (a_hat.rows() != n || a_hat.cols() != n || adjacency.rows() != n || adjacency.cols() != n) {
    throw ShapeError("sagpool_select: adjacency " + diff::shape_string(a_hat.value()) +
                     " does not fit features " + diff::shape_string(h.value()));
  }
  if (score_weights.rows() != h.cols() || score_weights.cols() != 1) {
    throw ShapeError("sagpool_select: score weights must be " + diff::shape_string(h.cols(), 1) +
                     ", got " + diff::shape_string(score_weights.value()));
  }
  Tensor scores = diff::matmul(diff::matmul(a_hat, h), score_weights);
  std::vector<Index> kept;
  if (fixed_kept) {
    kept = *fixed_kept;
    for (std::size_t i = 0; i < kept.size(); ++i) {
      if (kept[i] < 0 || kept[i] >= n || (i > 0 && kept[i] <= kept[i - 1])) {
        throw ContractError("sagpool_select: fixed indices must be strictly increasing and in range");
      }
    }
  } else {
    kept = top_k(scores.value(), keep_count(n, ratio));
  }
  Tensor gate = diff::tanh(diff::gather_rows(scores, kept));
  Tensor features = diff::scale_rows(diff::gather_rows(h, kept), gate);
  return Selection{induced_submatrix(adjacency, kept), features, std::move(kept), scores};
}

Selection none_select(const Matrix& adjacency, const Tensor& h) {
  if (adjacency.rows() != h.rows()) {
    throw ShapeError("none_select: adjacency " + diff::shape_string(adjacency) +
                     " does not fit features " + diff::shape_string(h.value()));
  }
  std::vector<Index> all(static_cast<std::size_t>(h.rows()));
  std::iota(all.begin(), all.end(), Index{0});
  return Selection{adjacency, h, std::move(all), Tensor{}};
}

}  // namespace care::sel
