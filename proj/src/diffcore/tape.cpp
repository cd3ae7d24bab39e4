#include "care/diffcore.hpp"

#include "care/error.hpp"

#include <cmath>
#include <sstream>

namespace care::diff {

std::string shape_string(Index rows, Index cols) {
  std::ostringstream os;
  os << rows << "x" << cols;
  return os.str();
}

std::string shape_string(const Matrix& m) { return shape_string(m.rows(), m.cols()); }

Matrix uniform_init(Index rows, Index cols, Index fan_in, std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(std::max<Index>(fan_in, 1)));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Matrix m(rows, cols);
  for (Index i = 0; i < rows; ++i) {
    for (Index j = 0; j < cols; ++j) m(i, j) = dist(rng);
  }
  return m;
}

Parameter::Parameter(std::string name, Matrix value, bool trainable)
    : name_(std::move(name)), value_(std::move(value)), trainable_(trainable) {
  grad_.setZero(value_.rows(), value_.cols());
}

Index Tensor::rows() const { return tape_->nodes_[id_].value.rows(); }
Index Tensor::cols() const { return tape_->nodes_[id_].value.cols(); }
const Matrix& Tensor::value() const { return tape_->nodes_[id_].value; }
bool Tensor::requires_grad() const { return tape_->nodes_[id_].requires_grad; }

Matrix Tensor::grad() const {
  const auto& node = tape_->nodes_[id_];
  if (node.grad.size() == node.value.size()) return node.grad;
  return Matrix::Zero(node.value.rows(), node.value.cols());
}

double Tensor::scalar() const {
  const Matrix& v = value();
  if (v.rows() != 1 || v.cols() != 1) {
    throw ShapeError("scalar() on a " + shape_string(v) + " tensor");
  }
  return v(0, 0);
}

Tensor Tape::push(Matrix value, bool requires_grad, BackwardFn backward, Parameter* p) {
  nodes_.push_back(Node{std::move(value), Matrix(), requires_grad, std::move(backward), p});
  return Tensor(this, nodes_.size() - 1);
}

Tensor Tape::constant(Matrix value) { return push(std::move(value), false, nullptr, nullptr); }

Tensor Tape::variable(Matrix value) { return push(std::move(value), grad_enabled_, nullptr, nullptr); }

Tensor Tape::parameter(Parameter& p) {
  const bool needs = grad_enabled_ && p.trainable();
  return push(p.value(), needs, nullptr, needs ? &p : nullptr);
}

Tensor Tape::record(Matrix value, std::initializer_list<Tensor> inputs, BackwardFn backward) {
  bool needs = false;
  for (const Tensor& t : inputs) {
    if (t.tape_ != this) throw ContractError("operation mixes tensors from different tapes");
    needs = needs || nodes_[t.id_].requires_grad;
  }
  needs = needs && grad_enabled_;
  return push(std::move(value), needs, needs ? std::move(backward) : BackwardFn{}, nullptr);
}

Tensor ParameterBinding::operator()(Parameter& p) {
  for (const auto& [param, tensor] : bound_) {
    if (param == &p) return tensor;
  }
  Tensor t = tape_->parameter(p);
  bound_.emplace_back(&p, t);
  return t;
}

void Tape::backward(const Tensor& loss) {
  if (loss.tape_ != this) throw ContractError("backward() on a tensor from another tape");
  const Matrix& lv = nodes_[loss.id_].value;
  if (lv.rows() != 1 || lv.cols() != 1) {
    throw ContractError("backward() needs a scalar loss, got " + shape_string(lv));
  }
  for (auto& node : nodes_) {
    if (node.requires_grad) {
      node.grad.setZero(node.value.rows(), node.value.cols());
    } else {
      node.grad.resize(0, 0);
    }
  }
  if (!nodes_[loss.id_].requires_grad) return;
  nodes_[loss.id_].grad(0, 0) = 1.0;
  for (NodeId id = loss.id_ + 1; id-- > 0;) {
    Node& node = nodes_[id];
    if (!node.requires_grad) continue;
    if (node.backward) node.backward(*this, id);
    if (node.parameter != nullptr) node.parameter->grad() += node.grad;
  }
}

}  // namespace care::diff
