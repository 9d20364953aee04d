#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "disco/adam.hpp"
#include "disco/autodiff.hpp"

namespace disco {

/// Builds a scalar loss on `tape` from the registered parameter handles.
using LossBuilder = std::function<Var(Tape& tape, const std::map<std::string, Var>& params)>;

struct GradCheckOptions {
  double step = 1e-5;
  double tolerance = 1e-4;
  // Below this magnitude the absolute error is compared instead of the relative one.
  double absolute_floor = 1e-8;
};

struct GradCheckEntry {
  std::string param;
  std::size_t index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double error = 0.0;
  bool passed = true;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  bool passed = true;
  double worst_error = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;

  std::vector<GradCheckEntry> failures() const;
};

/// Scalar value of the loss at `params`, evaluated on a fresh tape.
double evaluate_loss(const LossBuilder& loss, const ParamSet& params);

/// Tape gradients of the loss at `params`.
Gradients tape_gradients(const LossBuilder& loss, const ParamSet& params);

/// Compares `analytic` against central differences of `loss` entry by entry.
/// Throws std::runtime_error if two evaluations at the same point disagree.
GradCheckReport compare_gradients(const LossBuilder& loss, const ParamSet& params, const Gradients& analytic,
                                  const GradCheckOptions& options = {});

/// compare_gradients against the tape's own gradients.
GradCheckReport grad_check(const LossBuilder& loss, const ParamSet& params, const GradCheckOptions& options = {});

}  // namespace disco
