#pragma once

// Dense reverse-mode automatic differentiation over 64-bit matrices.
//
// A Tape records every operation of one forward pass. Tensors are light
// handles (tape pointer + node id); their values live in the tape and stay
// valid until the tape is cleared or destroyed. Trainable state lives in
// Parameter objects outside the tape and is bound to a pass with
// Tape::parameter(); backward() accumulates into Parameter::grad().

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <initializer_list>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace care::diff {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Index = Eigen::Index;
using NodeId = std::size_t;

std::string shape_string(const Matrix& m);
std::string shape_string(Index rows, Index cols);

/// Uniform in [-1/sqrt(fan_in), +1/sqrt(fan_in)].
Matrix uniform_init(Index rows, Index cols, Index fan_in, std::mt19937_64& rng);

/// Persistent trainable matrix. Frozen parameters still take part in forward
/// passes but receive no gradient and are skipped by the optimizer.
class Parameter {
 public:
  Parameter() = default;
  Parameter(std::string name, Matrix value, bool trainable = true);

  const std::string& name() const { return name_; }
  const Matrix& value() const { return value_; }
  Matrix& value() { return value_; }
  const Matrix& grad() const { return grad_; }
  Matrix& grad() { return grad_; }
  Index rows() const { return value_.rows(); }
  Index cols() const { return value_.cols(); }
  bool trainable() const { return trainable_; }
  void set_trainable(bool on) { trainable_ = on; }
  void zero_grad() { grad_.setZero(value_.rows(), value_.cols()); }

 private:
  std::string name_;
  Matrix value_;
  Matrix grad_;
  bool trainable_ = true;
};

class Tape;

class Tensor {
 public:
  Tensor() = default;

  Index rows() const;
  Index cols() const;
  Index size() const { return rows() * cols(); }
  const Matrix& value() const;
  /// Gradient after Tape::backward; all zeros when the node was not reached.
  Matrix grad() const;
  bool requires_grad() const;
  /// Value of a 1x1 tensor.
  double scalar() const;

  NodeId id() const { return id_; }
  Tape* tape() const { return tape_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Tensor(Tape* tape, NodeId id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  NodeId id_ = 0;
};

class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, NodeId self)>;

  /// With grad_enabled == false nothing requires a gradient and no backward
  /// closures are stored (evaluation passes).
  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Tensor constant(Matrix value);
  Tensor variable(Matrix value);
  Tensor parameter(Parameter& p);

  /// Records an operation. `value` is the forward result; `backward` must
  /// accumulate grad(self) into the grads of the inputs that require it.
  Tensor record(Matrix value, std::initializer_list<Tensor> inputs, BackwardFn backward);

  /// Populates gradients of every node reachable from `loss` (a 1x1 tensor)
  /// and accumulates parameter gradients into the bound Parameter objects.
  void backward(const Tensor& loss);

  const Matrix& value(NodeId id) const { return nodes_[id].value; }
  Matrix& grad(NodeId id) { return nodes_[id].grad; }
  bool requires_grad(NodeId id) const { return nodes_[id].requires_grad; }
  bool grad_enabled() const { return grad_enabled_; }
  std::size_t size() const { return nodes_.size(); }
  void clear() { nodes_.clear(); }

 private:
  friend class Tensor;
  struct Node {
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    BackwardFn backward;
    Parameter* parameter = nullptr;
  };

  Tensor push(Matrix value, bool requires_grad, BackwardFn backward, Parameter* p);

  std::deque<Node> nodes_;
  bool grad_enabled_;
};

/// Binds each Parameter to the tape at most once per pass.
class ParameterBinding {
 public:
  explicit ParameterBinding(Tape& tape) : tape_(&tape) {}
  Tensor operator()(Parameter& p);
  Tape& tape() const { return *tape_; }

 private:
  Tape* tape_;
  std::vector<std::pair<const Parameter*, Tensor>> bound_;
};

enum class Reduce { Mean, Sum };
enum class Axis { Rows, All };

/// Copy of the value as a constant on the same tape (gradient stops here).
Tensor detach(const Tensor& t);

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor hadamard(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor add_constant(const Tensor& a, double offset);
Tensor relu(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor exp(const Tensor& a);
/// Elementwise 1/a; throws NumericError on an exact zero.
Tensor reciprocal(const Tensor& a);

/// a (r x c) + bias (1 x c) broadcast over rows; the only broadcasting op.
Tensor add_row_bias(const Tensor& a, const Tensor& bias);
/// Row i of a multiplied by factors(i, 0); factors is r x 1.
Tensor scale_rows(const Tensor& a, const Tensor& factors);
/// a multiplied by the 1x1 tensor s.
Tensor mul_scalar(const Tensor& a, const Tensor& s);

Tensor concat_cols(const Tensor& a, const Tensor& b);
/// Rows of a at the given indices, in order.
Tensor gather_rows(const Tensor& a, std::span<const Index> rows);

Tensor reduce(const Tensor& a, Reduce mode, Axis axis);
inline Tensor mean_rows(const Tensor& a) { return reduce(a, Reduce::Mean, Axis::Rows); }
inline Tensor sum_rows(const Tensor& a) { return reduce(a, Reduce::Sum, Axis::Rows); }
inline Tensor sum_all(const Tensor& a) { return reduce(a, Reduce::Sum, Axis::All); }
inline Tensor mean_all(const Tensor& a) { return reduce(a, Reduce::Mean, Axis::All); }

inline constexpr double kCosineEpsilon = 1e-12;

/// u.v / (|u||v| + 1e-12) for two 1 x m tensors. Two zero vectors give 0.
Tensor cosine_similarity(const Tensor& u, const Tensor& v);
/// Euclidean norm of all entries, as a 1x1 tensor. Gradient at 0 is 0.
Tensor norm2(const Tensor& a);
/// -log softmax(logits)[label] for a 1 x |Y| row.
Tensor softmax_cross_entropy(const Tensor& logits, Index label);

}  // namespace care::diff
