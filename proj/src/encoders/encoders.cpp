#include "care/encoders.hpp"

#include "care/error.hpp"
#include "care/graphio.hpp"

namespace care::enc {

std::string to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::Gcn: return "gcn";
    case LayerKind::Sage: return "sage";
    case LayerKind::Gin: return "gin";
  }
  return "unknown";
}

LayerKind parse_layer_kind(std::string_view name) {
  if (name == "gcn") return LayerKind::Gcn;
  if (name == "sage") return LayerKind::Sage;
  if (name == "gin") return LayerKind::Gin;
  throw ConfigError("unknown backbone '" + std::string(name) + "' (expected gcn, sage or gin)");
}

ReadoutMode default_readout(LayerKind kind) {
  return kind == LayerKind::Gin ? ReadoutMode::Sum : ReadoutMode::Mean;
}

Matrix neighbor_mean_operator(const Matrix& adjacency) {
  Matrix m = adjacency;
  for (Index v = 0; v < m.rows(); ++v) {
    const double degree = m.row(v).sum();
    if (degree > 0.0) m.row(v) /= degree;
  }
  return m;
}

GraphOperators GraphOperators::from(const Matrix& adjacency, const Matrix& features) {
  return GraphOperators{adjacency, graph::normalize_adjacency(adjacency),
                        neighbor_mean_operator(adjacency), features};
}

GraphTensors bind(diff::Tape& tape, const GraphOperators& ops) {
  return GraphTensors{tape.constant(ops.adjacency), tape.constant(ops.normalized),
                      tape.constant(ops.neighbor_mean), tape.constant(ops.features)};
}

namespace {

Tensor activate(const Tensor& x, Activation act) {
  return act == Activation::Relu ? diff::relu(x) : x;
}

void check_rows(const char* layer, const Tensor& op, const Tensor& h) {
  if (op.rows() != op.cols() || op.cols() != h.rows()) {
    throw ShapeError(std::string(layer) + ": operator " + diff::shape_string(op.value()) +
                     " does not fit node matrix " + diff::shape_string(h.value()));
  }
}

}  // namespace

Tensor gcn_layer(const Tensor& a_hat, const Tensor& h, const Tensor& w, Activation act) {
  check_rows("gcn_layer", a_hat, h);
  return activate(diff::matmul(diff::matmul(a_hat, h), w), act);
}

Tensor sage_layer(const Tensor& neighbor_mean, const Tensor& h, const Tensor& w_self,
                  const Tensor& w_neigh, Activation act) {
  check_rows("sage_layer", neighbor_mean, h);
  Tensor self_term = diff::matmul(h, w_self);
  Tensor neigh_term = diff::matmul(diff::matmul(neighbor_mean, h), w_neigh);
  return activate(diff::add(self_term, neigh_term), act);
}

Tensor gin_layer(const Tensor& adjacency, const Tensor& h, const GinMlpTensors& mlp,
                 const Tensor& eps, Activation act) {
  check_rows("gin_layer", adjacency, h);
  Tensor center = diff::mul_scalar(h, diff::add_constant(eps, 1.0));
  Tensor z = diff::add(center, diff::matmul(adjacency, h));
  Tensor hidden = diff::relu(diff::add_row_bias(diff::matmul(z, mlp.w1), mlp.b1));
  return activate(diff::add_row_bias(diff::matmul(hidden, mlp.w2), mlp.b2), act);
}

Tensor readout(const Tensor& h, ReadoutMode mode) {
  if (h.rows() == 0) throw DomainError("readout: graph has no nodes");
  return mode == ReadoutMode::Mean ? diff::mean_rows(h) : diff::sum_rows(h);
}

EncoderStack::EncoderStack(LayerKind kind, Index in_dim, Index hidden, int depth, std::mt19937_64& rng)
    : kind_(kind) {
  if (depth < 1) throw ConfigError("encoder depth must be >= 1");
  if (in_dim < 1 || hidden < 1) throw ConfigError("encoder widths must be positive");
  Index width = in_dim;
  for (int l = 0; l < depth; ++l) {
    const std::string prefix = "encoder." + std::to_string(l) + ".";
    Layer layer;
    layer.in_dim = width;
    layer.out_dim = hidden;
    layer.w = Parameter(prefix + "w", diff::uniform_init(width, hidden, width, rng));
    if (kind == LayerKind::Sage) {
      layer.w_neigh = Parameter(prefix + "w_neigh", diff::uniform_init(width, hidden, width, rng));
    }
    if (kind == LayerKind::Gin) {
      layer.b1 = Parameter(prefix + "b1", diff::uniform_init(1, hidden, width, rng));
      layer.w2 = Parameter(prefix + "w2", diff::uniform_init(hidden, hidden, hidden, rng));
      layer.b2 = Parameter(prefix + "b2", diff::uniform_init(1, hidden, hidden, rng));
      layer.eps = Parameter(prefix + "eps", Matrix::Zero(1, 1));
    }
    layers_.push_back(std::move(layer));
    width = hidden;
  }
}

std::vector<Tensor> EncoderStack::forward(ParameterBinding& bind, const GraphTensors& graph, Activation act) {
  std::vector<Tensor> outputs;
  outputs.reserve(layers_.size());
  Tensor h = graph.features;
  for (Layer& layer : layers_) {
    if (h.cols() != layer.in_dim) {
      throw ShapeError("encoder: layer expects width " + std::to_string(layer.in_dim) + ", got " +
                       diff::shape_string(h.value()));
    }
    switch (kind_) {
      case LayerKind::Gcn:
        h = gcn_layer(graph.normalized, h, bind(layer.w), act);
        break;
      case LayerKind::Sage:
        h = sage_layer(graph.neighbor_mean, h, bind(layer.w), bind(layer.w_neigh), act);
        break;
      case LayerKind::Gin:
        h = gin_layer(graph.adjacency, h,
                      GinMlpTensors{bind(layer.w), bind(layer.b1), bind(layer.w2), bind(layer.b2)},
                      bind(layer.eps), act);
        break;
    }
    outputs.push_back(h);
  }
  return outputs;
}

std::vector<Parameter*> EncoderStack::parameters() {
  std::vector<Parameter*> out;
  for (Layer& layer : layers_) {
    out.push_back(&layer.w);
    if (kind_ == LayerKind::Sage) out.push_back(&layer.w_neigh);
    if (kind_ == LayerKind::Gin) {
      out.push_back(&layer.b1);
      out.push_back(&layer.w2);
      out.push_back(&layer.b2);
      out.push_back(&layer.eps);
    }
  }
  return out;
}

}  // namespace care::enc
