#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "disco/autodiff.hpp"
#include "disco/tensor.hpp"

namespace disco {

using ParamSet = std::map<std::string, Tensor>;

struct AdamOptions {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Moment accumulators keyed by parameter name. Moments are created lazily,
/// zero-initialised, on the first step that sees a parameter.
struct AdamState {
  AdamOptions options;
  std::uint64_t step = 0;
  ParamSet first_moment;
  ParamSet second_moment;
};

/// One bias-corrected Adam update of every parameter that has a gradient.
/// Parameters missing from `grads` are left untouched; a gradient for an
/// unknown parameter or with a different shape throws ShapeError.
void adam_step(ParamSet& params, const Gradients& grads, AdamState& state);

}  // namespace disco
