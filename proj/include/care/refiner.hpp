#pragma once

// Class-aware refinement: per-class bags of detached subgraph representations,
// DeepSets class representations hc_i = rho(mean(bag)), refinement
// Trans([hg | hc]) and cosine pseudo-labelling at evaluation time.

#include "care/diffcore.hpp"

#include <cstdint>
#include <deque>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "json.hpp"

namespace care::ref {

using diff::Index;
using diff::Matrix;
using diff::Parameter;
using diff::ParameterBinding;
using diff::Tensor;

inline constexpr std::size_t kDefaultBagCapacity = 64;

/// Linear -> ReLU -> Linear, biases on both affine maps.
class Mlp {
 public:
  Mlp() = default;
  Mlp(const std::string& name, Index in_dim, Index hidden, Index out_dim, std::mt19937_64& rng);

  Tensor forward(ParameterBinding& bind, const Tensor& x);

  Index in_dim() const { return w1.rows(); }
  Index out_dim() const { return w2.cols(); }
  std::vector<Parameter*> parameters() { return {&w1, &b1, &w2, &b2}; }
  void set_trainable(bool on);

  /// Test hooks. identity: W1 = W2 = I (needs in = hidden = out), so the map
  /// is ReLU(x). left_projection: W1 selects the first out_dim inputs, W2 = I,
  /// so the map is ReLU(x[:, :out]). zero: every weight and bias 0.
  void set_identity();
  void set_left_projection();
  void set_zero();

  Parameter w1, b1, w2, b2;
};

struct RefinerWeights {
  Mlp rho;    ///< set encoder, m -> m -> m
  Mlp trans;  ///< 2m -> m -> m

  RefinerWeights() = default;
  RefinerWeights(const std::string& prefix, Index m, std::mt19937_64& rng);

  std::vector<Parameter*> parameters();
  void set_trainable(bool on);
};

enum class StateMode { Train, Eval };

class ClassState {
 public:
  ClassState() = default;
  ClassState(Index class_count, Index dim, std::size_t capacity = kDefaultBagCapacity);

  Index class_count() const { return static_cast<Index>(bags_.size()); }
  Index dim() const { return dim_; }
  std::size_t capacity() const { return capacity_; }
  StateMode mode() const { return mode_; }
  void set_mode(StateMode mode) { mode_ = mode; }

  /// Appends a detached 1 x m copy to bag i, evicting the oldest entry when
  /// full. ContractError in eval mode.
  void update_bag(Index i, const Matrix& rep);

  const std::deque<Matrix>& bag(Index i) const;
  /// Replaces bag i (used by checkpoint restore and property tests).
  void set_bag(Index i, std::deque<Matrix> bag);

  bool has_hc(Index i) const;
  const Matrix& hc(Index i) const;
  void set_hc(Index i, Matrix value);
  std::uint64_t staleness(Index i) const;

  /// Mean of bag i (DomainError if empty).
  Matrix bag_mean(Index i) const;

  /// Throws ConfigError naming the first class with no representation.
  void require_all_hc() const;

  /// FNV-1a over bags, representations and counters.
  std::uint64_t hash() const;

  /// {"classes": [{"class", "bag_size", "staleness", "hc"}...], ...}
  nlohmann::json summary_json() const;
  /// Full state including bag contents, for checkpoints.
  nlohmann::json to_json() const;
  static ClassState from_json(const nlohmann::json& j);

 private:
  void check_class(Index i) const;

  Index dim_ = 0;
  std::size_t capacity_ = kDefaultBagCapacity;
  StateMode mode_ = StateMode::Train;
  std::vector<std::deque<Matrix>> bags_;
  std::vector<std::optional<Matrix>> hc_;
  std::vector<std::uint64_t> staleness_;
};

/// hc_i = rho(mean of bag i). With `live`, the newest bag entry (the detached
/// copy of the current sample) is replaced by the live tensor so gradients
/// reach rho and the encoder; an empty bag with `live` forms a singleton.
/// The value is cached in the state.
Tensor class_representation(ClassState& state, Index i, RefinerWeights& weights,
                            ParameterBinding& bind, const std::optional<Tensor>& live);

/// Trans([hg | hc]).
Tensor refine(const Tensor& hg, const Tensor& hc, RefinerWeights& weights, ParameterBinding& bind);

/// argmax_i cos(hg_sub, hc_i), ties to the lower class.
Index pseudo_label(const Matrix& hg_sub, const ClassState& state);

/// Recomputes every cached hc_i = rho(mean bag) with the current weights.
void refresh_class_representations(ClassState& state, RefinerWeights& weights);

struct RefineOutput {
  Tensor refined;   ///< hg' (1 x m)
  Tensor hg_sub;
  Tensor hc;        ///< live in training, constant in evaluation
  Index chosen = 0; ///< ground truth in training, pseudo label in evaluation
};

/// Train mode (label given): update_bag -> class_representation(live) -> refine.
/// Eval mode: pseudo_label -> cached hc -> refine; the state is not touched.
RefineOutput refiner_step(const Tensor& hg, const Tensor& hg_sub, std::optional<Index> label,
                          ClassState& state, RefinerWeights& weights, ParameterBinding& bind);

}  // namespace care::ref
