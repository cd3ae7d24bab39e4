#include "care/adam.hpp"

#include "care/error.hpp"

#include <cmath>

namespace care::diff {

AdamState make_adam_state(std::span<Parameter* const> params, AdamOptions options) {
  AdamState state;
  state.options = options;
  state.first_moment.reserve(params.size());
  state.second_moment.reserve(params.size());
  for (const Parameter* p : params) {
    state.first_moment.push_back(Matrix::Zero(p->rows(), p->cols()));
    state.second_moment.push_back(Matrix::Zero(p->rows(), p->cols()));
  }
  return state;
}

void adam_step(std::span<Parameter* const> params, AdamState& state) {
  if (state.first_moment.size() != params.size() || state.second_moment.size() != params.size()) {
    throw ShapeError("adam_step: state tracks " + std::to_string(state.first_moment.size()) +
                     " parameters, got " + std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Parameter& p = *params[i];
    const Matrix& m = state.first_moment[i];
    if (m.rows() != p.rows() || m.cols() != p.cols() || p.grad().rows() != p.rows() ||
        p.grad().cols() != p.cols()) {
      throw ShapeError("adam_step: parameter '" + p.name() + "' is " + shape_string(p.value()) +
                       " but its state/grad is " + shape_string(m) + "/" + shape_string(p.grad()));
    }
  }

  const AdamOptions& o = state.options;
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(o.beta1, t);
  const double correction2 = 1.0 - std::pow(o.beta2, t);

  for (std::size_t i = 0; i < params.size(); ++i) {
    Parameter& p = *params[i];
    if (!p.trainable()) continue;
    auto m = state.first_moment[i].array();
    auto v = state.second_moment[i].array();
    const auto g = p.grad().array();
    m = o.beta1 * m + (1.0 - o.beta1) * g;
    v = o.beta2 * v + (1.0 - o.beta2) * g.square();
    p.value().array() -= o.learning_rate * (m / correction1) / ((v / correction2).sqrt() + o.epsilon);
  }
}

}  // namespace care::diff
