#pragma once

// Message-passing layers (GCN, GraphSAGE-mean, GIN), READOUT and the stacked
// graph encoder.

#include "care/diffcore.hpp"

#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace care::enc {

using diff::Index;
using diff::Matrix;
using diff::Parameter;
using diff::ParameterBinding;
using diff::Tensor;

enum class LayerKind { Gcn, Sage, Gin };
enum class ReadoutMode { Mean, Sum };
/// Identity exists for tests that check the linear part of a layer.
enum class Activation { Relu, Identity };

std::string to_string(LayerKind kind);
LayerKind parse_layer_kind(std::string_view name);

/// Mean for GCN/GraphSAGE, sum for GIN.
ReadoutMode default_readout(LayerKind kind);

/// Per-graph constant matrices every layer kind may need.
struct GraphOperators {
  Matrix adjacency;       ///< raw A
  Matrix normalized;      ///< D^-1/2 (A+I) D^-1/2
  Matrix neighbor_mean;   ///< D^-1 A, zero rows for isolated nodes
  Matrix features;        ///< X

  static GraphOperators from(const Matrix& adjacency, const Matrix& features);
};

/// D^-1 A with zero rows for isolated nodes.
Matrix neighbor_mean_operator(const Matrix& adjacency);

/// act(A_hat H W)
Tensor gcn_layer(const Tensor& a_hat, const Tensor& h, const Tensor& w,
                 Activation act = Activation::Relu);

/// act(H W_self + meanNeigh(H) W_neigh); `neighbor_mean` is D^-1 A.
Tensor sage_layer(const Tensor& neighbor_mean, const Tensor& h, const Tensor& w_self,
                  const Tensor& w_neigh, Activation act = Activation::Relu);

struct GinMlpTensors {
  Tensor w1, b1, w2, b2;
};

/// act(MLP((1 + eps) H + A H)), MLP = affine, ReLU, affine.
Tensor gin_layer(const Tensor& adjacency, const Tensor& h, const GinMlpTensors& mlp,
                 const Tensor& eps, Activation act = Activation::Relu);

/// Row-mean or row-sum of H, a 1 x m tensor. Throws DomainError for n = 0.
Tensor readout(const Tensor& h, ReadoutMode mode);

/// Graph constants bound to one tape.
struct GraphTensors {
  Tensor adjacency;
  Tensor normalized;
  Tensor neighbor_mean;
  Tensor features;
};

GraphTensors bind(diff::Tape& tape, const GraphOperators& ops);

class EncoderStack {
 public:
  struct Layer {
    Parameter w;        ///< GCN weight, SAGE W_self, GIN first affine
    Parameter w_neigh;  ///< SAGE only
    Parameter b1;       ///< GIN only
    Parameter w2;       ///< GIN only
    Parameter b2;       ///< GIN only
    Parameter eps;      ///< GIN only, 1x1
    Index in_dim = 0;
    Index out_dim = 0;
  };

  EncoderStack(LayerKind kind, Index in_dim, Index hidden, int depth, std::mt19937_64& rng);

  LayerKind kind() const { return kind_; }
  int depth() const { return static_cast<int>(layers_.size()); }
  Index out_dim() const { return layers_.back().out_dim; }
  ReadoutMode readout_mode() const { return default_readout(kind_); }
  std::vector<Layer>& layers() { return layers_; }
  const std::vector<Layer>& layers() const { return layers_; }

  /// Node representations after every layer (entry l is H^(l+1)).
  std::vector<Tensor> forward(ParameterBinding& bind, const GraphTensors& graph,
                              Activation act = Activation::Relu);

  std::vector<Parameter*> parameters();

 private:
  LayerKind kind_;
  std::vector<Layer> layers_;
};

}  // namespace care::enc
