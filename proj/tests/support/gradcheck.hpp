#pragma once

// Central finite-difference gradient checks for tape functions and for
// Parameter-based models.

#include "care/diffcore.hpp"

#include <algorithm>
#include <functional>
#include <random>
#include <span>
#include <vector>

namespace care::testing {

using diff::Index;
using diff::Matrix;
using diff::Parameter;
using diff::ParameterBinding;
using diff::Tape;
using diff::Tensor;

inline constexpr double kFdStep = 1e-5;
/// Denominator floor of the relative error; near-zero gradients are compared
/// with an absolute tolerance of kGradFloor * 1e-4.
inline constexpr double kGradFloor = 1e-6;

/// ||a - n|| / max(||a|| + ||n||, kGradFloor).
inline double relative_error(const Matrix& analytic, const Matrix& numeric) {
  return (analytic - numeric).norm() / std::max(analytic.norm() + numeric.norm(), kGradFloor);
}

using TapeFn = std::function<Tensor(Tape&, std::span<const Tensor>)>;

/// Largest relative error over all inputs of f (which must return a scalar).
inline double check_inputs(const TapeFn& f, const std::vector<Matrix>& inputs, double h = kFdStep) {
  Tape tape;
  std::vector<Tensor> vars;
  for (const Matrix& m : inputs) vars.push_back(tape.variable(m));
  const Tensor out = f(tape, vars);
  tape.backward(out);
  double worst = 0.0;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    const Matrix analytic = vars[k].grad();
    Matrix numeric(inputs[k].rows(), inputs[k].cols());
    for (Eigen::Index i = 0; i < inputs[k].size(); ++i) {
      auto eval = [&](double delta) {
        std::vector<Matrix> moved = inputs;
        moved[k].data()[i] += delta;
        Tape t(false);
        std::vector<Tensor> cs;
        for (const Matrix& m : moved) cs.push_back(t.constant(m));
        return f(t, cs).scalar();
      };
      numeric.data()[i] = (eval(h) - eval(-h)) / (2.0 * h);
    }
    worst = std::max(worst, relative_error(analytic, numeric));
  }
  return worst;
}

using ModelFn = std::function<Tensor(Tape&, ParameterBinding&)>;

/// Largest relative error over the given parameters. `reset` runs before
/// every evaluation so stateful forwards start from the same state.
inline double check_parameters(const ModelFn& f, std::span<Parameter* const> params,
                               const std::function<void()>& reset = {}, double h = kFdStep) {
  for (Parameter* p : params) p->zero_grad();
  if (reset) reset();
  {
    Tape tape;
    ParameterBinding bind(tape);
    const Tensor out = f(tape, bind);
    tape.backward(out);
  }
  double worst = 0.0;
  for (Parameter* p : params) {
    if (!p->trainable()) continue;
    const Matrix analytic = p->grad();
    Matrix numeric(p->rows(), p->cols());
    for (Eigen::Index i = 0; i < p->value().size(); ++i) {
      auto eval = [&](double delta) {
        const double saved = p->value().data()[i];
        p->value().data()[i] = saved + delta;
        if (reset) reset();
        Tape t(false);
        ParameterBinding b(t);
        const double v = f(t, b).scalar();
        p->value().data()[i] = saved;
        return v;
      };
      numeric.data()[i] = (eval(h) - eval(-h)) / (2.0 * h);
    }
    worst = std::max(worst, relative_error(analytic, numeric));
  }
  return worst;
}

inline Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng, double scale = 1.0) {
  std::uniform_real_distribution<double> d(-scale, scale);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = d(rng);
  return m;
}

/// Entries bounded away from zero so kinks (ReLU, |x|) are not straddled by
/// the finite-difference step.
inline Matrix random_away_from_zero(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> mag(0.1, 1.0);
  std::bernoulli_distribution sign(0.5);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = sign(rng) ? mag(rng) : -mag(rng);
  return m;
}

/// Random connected undirected 0/1 adjacency without self-loops.
inline Matrix random_graph(Eigen::Index n, std::mt19937_64& rng, double p = 0.4) {
  Matrix a = Matrix::Zero(n, n);
  std::bernoulli_distribution edge(p);
  for (Eigen::Index i = 1; i < n; ++i) {
    std::uniform_int_distribution<Eigen::Index> parent(0, i - 1);
    const Eigen::Index j = parent(rng);
    a(i, j) = a(j, i) = 1.0;
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      if (edge(rng)) a(i, j) = a(j, i) = 1.0;
    }
  }
  return a;
}

}  // namespace care::testing
