#include "care/diffcore.hpp"

#include "care/error.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace care::diff {
namespace {

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_string(a.value()) + " vs " +
                     shape_string(b.value()));
  }
}

template <class Fn>
Tensor unary(const Tensor& a, Matrix value, Fn local_grad) {
  Tape& tape = *a.tape();
  const NodeId ia = a.id();
  return tape.record(std::move(value), {a}, [ia, local_grad](Tape& t, NodeId self) {
    t.grad(ia).array() += t.grad(self).array() * local_grad(t.value(ia), t.value(self)).array();
  });
}

}  // namespace

Tensor detach(const Tensor& t) { return t.tape()->constant(t.value()); }

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: inner dimensions differ, " + shape_string(a.value()) + " x " +
                     shape_string(b.value()));
  }
  Matrix out(a.rows(), b.cols());
  out.noalias() = a.value() * b.value();
  const NodeId ia = a.id(), ib = b.id();
  return a.tape()->record(std::move(out), {a, b}, [ia, ib](Tape& t, NodeId self) {
    const Matrix& g = t.grad(self);
    if (t.requires_grad(ia)) t.grad(ia).noalias() += g * t.value(ib).transpose();
    if (t.requires_grad(ib)) t.grad(ib).noalias() += t.value(ia).transpose() * g;
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape("add", a, b);
  const NodeId ia = a.id(), ib = b.id();
  return a.tape()->record(a.value() + b.value(), {a, b}, [ia, ib](Tape& t, NodeId self) {
    if (t.requires_grad(ia)) t.grad(ia) += t.grad(self);
    if (t.requires_grad(ib)) t.grad(ib) += t.grad(self);
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape("sub", a, b);
  const NodeId ia = a.id(), ib = b.id();
  return a.tape()->record(a.value() - b.value(), {a, b}, [ia, ib](Tape& t, NodeId self) {
    if (t.requires_grad(ia)) t.grad(ia) += t.grad(self);
    if (t.requires_grad(ib)) t.grad(ib) -= t.grad(self);
  });
}

Tensor hadamard(const Tensor& a, const Tensor& b) {
  require_same_shape("hadamard", a, b);
  const NodeId ia = a.id(), ib = b.id();
  Matrix out = a.value().cwiseProduct(b.value());
  return a.tape()->record(std::move(out), {a, b}, [ia, ib](Tape& t, NodeId self) {
    const Matrix& g = t.grad(self);
    if (t.requires_grad(ia)) t.grad(ia) += g.cwiseProduct(t.value(ib));
    if (t.requires_grad(ib)) t.grad(ib) += g.cwiseProduct(t.value(ia));
  });
}

Tensor scale(const Tensor& a, double factor) {
  const NodeId ia = a.id();
  return a.tape()->record(a.value() * factor, {a}, [ia, factor](Tape& t, NodeId self) {
    t.grad(ia) += t.grad(self) * factor;
  });
}

Tensor add_constant(const Tensor& a, double offset) {
  const NodeId ia = a.id();
  Matrix out = a.value().array() + offset;
  return a.tape()->record(std::move(out), {a}, [ia](Tape& t, NodeId self) {
    t.grad(ia) += t.grad(self);
  });
}

Tensor relu(const Tensor& a) {
  Matrix out = a.value().cwiseMax(0.0);
  return unary(a, std::move(out), [](const Matrix& in, const Matrix&) -> Matrix {
    return (in.array() > 0.0).cast<double>().matrix();
  });
}

Tensor tanh(const Tensor& a) {
  Matrix out = a.value().array().tanh().matrix();
  return unary(a, std::move(out), [](const Matrix&, const Matrix& out) -> Matrix {
    return (1.0 - out.array().square()).matrix();
  });
}

Tensor exp(const Tensor& a) {
  Matrix out = a.value().array().exp().matrix();
  return unary(a, std::move(out), [](const Matrix&, const Matrix& out) -> Matrix { return out; });
}

Tensor reciprocal(const Tensor& a) {
  if ((a.value().array() == 0.0).any()) throw NumericError("reciprocal of zero in " + shape_string(a.value()));
  Matrix out = a.value().cwiseInverse();
  return unary(a, std::move(out), [](const Matrix&, const Matrix& out) -> Matrix {
    return (-out.array().square()).matrix();
  });
}

Tensor add_row_bias(const Tensor& a, const Tensor& bias) {
  if (bias.rows() != 1 || bias.cols() != a.cols()) {
    throw ShapeError("add_row_bias: bias " + shape_string(bias.value()) + " does not fit " +
                     shape_string(a.value()));
  }
  Matrix out = a.value();
  out.rowwise() += bias.value().row(0);
  const NodeId ia = a.id(), ib = bias.id();
  return a.tape()->record(std::move(out), {a, bias}, [ia, ib](Tape& t, NodeId self) {
    const Matrix& g = t.grad(self);
    if (t.requires_grad(ia)) t.grad(ia) += g;
    if (t.requires_grad(ib)) t.grad(ib) += g.colwise().sum();
  });
}

Tensor scale_rows(const Tensor& a, const Tensor& factors) {
  if (factors.cols() != 1 || factors.rows() != a.rows()) {
    throw ShapeError("scale_rows: factors " + shape_string(factors.value()) + " do not fit " +
                     shape_string(a.value()));
  }
  Matrix out = a.value().array().colwise() * factors.value().col(0).array();
  const NodeId ia = a.id(), ifac = factors.id();
  return a.tape()->record(std::move(out), {a, factors}, [ia, ifac](Tape& t, NodeId self) {
    const Matrix& g = t.grad(self);
    if (t.requires_grad(ia)) {
      t.grad(ia).array() += g.array().colwise() * t.value(ifac).col(0).array();
    }
    if (t.requires_grad(ifac)) {
      t.grad(ifac).col(0) += g.cwiseProduct(t.value(ia)).rowwise().sum();
    }
  });
}

Tensor mul_scalar(const Tensor& a, const Tensor& s) {
  if (s.rows() != 1 || s.cols() != 1) {
    throw ShapeError("mul_scalar: expected a 1x1 factor, got " + shape_string(s.value()));
  }
  const NodeId ia = a.id(), is = s.id();
  return a.tape()->record(a.value() * s.value()(0, 0), {a, s}, [ia, is](Tape& t, NodeId self) {
    const Matrix& g = t.grad(self);
    if (t.requires_grad(ia)) t.grad(ia) += g * t.value(is)(0, 0);
    if (t.requires_grad(is)) t.grad(is)(0, 0) += g.cwiseProduct(t.value(ia)).sum();
  });
}

Tensor concat_cols(const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows()) {
    throw ShapeError("concat_cols: row counts differ, " + shape_string(a.value()) + " | " +
                     shape_string(b.value()));
  }
  const Index left = a.cols();
  Matrix out(a.rows(), a.cols() + b.cols());
  out.leftCols(left) = a.value();
  out.rightCols(b.cols()) = b.value();
  const NodeId ia = a.id(), ib = b.id();
  return a.tape()->record(std::move(out), {a, b}, [ia, ib, left](Tape& t, NodeId self) {
    const Matrix& g = t.grad(self);
    if (t.requires_grad(ia)) t.grad(ia) += g.leftCols(left);
    if (t.requires_grad(ib)) t.grad(ib) += g.rightCols(g.cols() - left);
  });
}

Tensor gather_rows(const Tensor& a, std::span<const Index> rows) {
  Matrix out(static_cast<Index>(rows.size()), a.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] < 0 || rows[i] >= a.rows()) {
      throw ShapeError("gather_rows: row " + std::to_string(rows[i]) + " outside " +
                       shape_string(a.value()));
    }
    out.row(static_cast<Index>(i)) = a.value().row(rows[i]);
  }
  const NodeId ia = a.id();
  std::vector<Index> idx(rows.begin(), rows.end());
  return a.tape()->record(std::move(out), {a}, [ia, idx = std::move(idx)](Tape& t, NodeId self) {
    const Matrix& g = t.grad(self);
    Matrix& ga = t.grad(ia);
    for (std::size_t i = 0; i < idx.size(); ++i) ga.row(idx[i]) += g.row(static_cast<Index>(i));
  });
}

Tensor reduce(const Tensor& a, Reduce mode, Axis axis) {
  if (a.size() == 0) throw DomainError("reduce: empty tensor " + shape_string(a.value()));
  const NodeId ia = a.id();
  if (axis == Axis::Rows) {
    const double div = mode == Reduce::Mean ? static_cast<double>(a.rows()) : 1.0;
    Matrix out = a.value().colwise().sum() / div;
    return a.tape()->record(std::move(out), {a}, [ia, div](Tape& t, NodeId self) {
      t.grad(ia).rowwise() += t.grad(self).row(0) / div;
    });
  }
  const double div = mode == Reduce::Mean ? static_cast<double>(a.size()) : 1.0;
  Matrix out(1, 1);
  out(0, 0) = a.value().sum() / div;
  return a.tape()->record(std::move(out), {a}, [ia, div](Tape& t, NodeId self) {
    t.grad(ia).array() += t.grad(self)(0, 0) / div;
  });
}

Tensor cosine_similarity(const Tensor& u, const Tensor& v) {
  if (u.rows() != 1 || v.rows() != 1 || u.cols() != v.cols() || u.cols() < 1) {
    throw ShapeError("cosine_similarity: expected two 1xm rows, got " + shape_string(u.value()) +
                     " and " + shape_string(v.value()));
  }
  const double dot = u.value().cwiseProduct(v.value()).sum();
  const double nu = u.value().norm();
  const double nv = v.value().norm();
  const double denom = nu * nv + kCosineEpsilon;
  Matrix out(1, 1);
  out(0, 0) = dot / denom;
  const NodeId iu = u.id(), iv = v.id();
  return u.tape()->record(std::move(out), {u, v}, [iu, iv, dot, nu, nv, denom](Tape& t, NodeId self) {
    const double g = t.grad(self)(0, 0);
    const Matrix& uv = t.value(iu);
    const Matrix& vv = t.value(iv);
    const double k = dot / (denom * denom);
    if (t.requires_grad(iu)) {
      t.grad(iu) += g * (vv / denom);
      if (nu > 0.0) t.grad(iu) -= (g * k * nv / nu) * uv;
    }
    if (t.requires_grad(iv)) {
      t.grad(iv) += g * (uv / denom);
      if (nv > 0.0) t.grad(iv) -= (g * k * nu / nv) * vv;
    }
  });
}

Tensor norm2(const Tensor& a) {
  const double n = a.value().norm();
  Matrix out(1, 1);
  out(0, 0) = n;
  const NodeId ia = a.id();
  return a.tape()->record(std::move(out), {a}, [ia, n](Tape& t, NodeId self) {
    if (n > 0.0) t.grad(ia) += (t.grad(self)(0, 0) / n) * t.value(ia);
  });
}

Tensor softmax_cross_entropy(const Tensor& logits, Index label) {
  if (logits.rows() != 1 || logits.cols() < 1) {
    throw ShapeError("softmax_cross_entropy: expected a 1xK row, got " + shape_string(logits.value()));
  }
  if (label < 0 || label >= logits.cols()) {
    throw DomainError("softmax_cross_entropy: label " + std::to_string(label) + " outside [0, " +
                      std::to_string(logits.cols()) + ")");
  }
  const auto z = logits.value().row(0).array();
  const double zmax = z.maxCoeff();
  Matrix probs = (z - zmax).exp().matrix();
  const double total = probs.sum();
  probs /= total;
  Matrix out(1, 1);
  out(0, 0) = (std::log(total) + zmax) - z(label);
  const NodeId il = logits.id();
  return logits.tape()->record(std::move(out), {logits},
                               [il, label, probs = std::move(probs)](Tape& t, NodeId self) {
                                 const double g = t.grad(self)(0, 0);
                                 Matrix d = probs;
                                 d(0, label) -= 1.0;
                                 t.grad(il) += g * d;
                               });
}

}  // namespace care::diff
