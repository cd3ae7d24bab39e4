#pragma once

#include "care/diffcore.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace care::diff {

struct AdamOptions {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// First/second moment accumulators, one pair per parameter, in the order the
/// parameters were handed to make_adam_state().
struct AdamState {
  AdamOptions options;
  std::vector<Matrix> first_moment;
  std::vector<Matrix> second_moment;
  std::uint64_t step = 0;
};

AdamState make_adam_state(std::span<Parameter* const> params, AdamOptions options = {});

/// One bias-corrected Adam update using each parameter's accumulated grad().
/// Frozen parameters keep their values. Throws ShapeError when the state does
/// not match the parameter list.
void adam_step(std::span<Parameter* const> params, AdamState& state);

}  // namespace care::diff
