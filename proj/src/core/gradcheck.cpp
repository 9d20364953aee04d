#include "disco/gradcheck.hpp"

#include <cmath>
#include <stdexcept>

namespace disco {
namespace {

Var build(Tape& tape, const LossBuilder& loss, const ParamSet& params) {
  std::map<std::string, Var> handles;
  for (const auto& [id, value] : params) handles.emplace(id, tape.parameter(id, value));
  Var out = loss(tape, handles);
  if (out.value().size() != 1) throw ShapeError("grad_check: loss must be scalar, got " + shape_to_string(out.shape()));
  return out;
}

}  // namespace

std::vector<GradCheckEntry> GradCheckReport::failures() const {
  std::vector<GradCheckEntry> out;
  for (const auto& e : entries) {
    if (!e.passed) out.push_back(e);
  }
  return out;
}

double evaluate_loss(const LossBuilder& loss, const ParamSet& params) {
  Tape tape;
  return build(tape, loss, params).value().item();
}

Gradients tape_gradients(const LossBuilder& loss, const ParamSet& params) {
  Tape tape;
  Var out = build(tape, loss, params);
  return tape.backward(out);
}

GradCheckReport compare_gradients(const LossBuilder& loss, const ParamSet& params, const Gradients& analytic,
                                  const GradCheckOptions& options) {
  if (!(options.step > 0.0)) throw std::invalid_argument("grad_check: step size must be positive");

  const double base = evaluate_loss(loss, params);
  if (evaluate_loss(loss, params) != base) {
    throw std::runtime_error("grad_check: loss function is not deterministic (repeated evaluation differs)");
  }

  GradCheckReport report;
  ParamSet probe = params;
  for (const auto& [id, value] : params) {
    const auto grad_it = analytic.find(id);
    if (grad_it == analytic.end()) throw std::invalid_argument("grad_check: no analytic gradient for '" + id + "'");
    require_same_shape(value, grad_it->second, "grad_check");
    auto slot = probe.at(id).data();
    for (std::size_t i = 0; i < value.size(); ++i) {
      const double original = slot[i];
      slot[i] = original + options.step;
      const double plus = evaluate_loss(loss, probe);
      slot[i] = original - options.step;
      const double minus = evaluate_loss(loss, probe);
      slot[i] = original;

      GradCheckEntry entry;
      entry.param = id;
      entry.index = i;
      entry.analytic = grad_it->second[i];
      entry.numeric = (plus - minus) / (2.0 * options.step);
      const double diff = std::abs(entry.analytic - entry.numeric);
      const double magnitude = std::max(std::abs(entry.analytic), std::abs(entry.numeric));
      entry.error = magnitude < options.absolute_floor ? diff : diff / magnitude;
      entry.passed = entry.error <= options.tolerance;

      if (!entry.passed) report.passed = false;
      if (entry.error > report.worst_error || report.entries.empty()) {
        report.worst_error = entry.error;
        report.worst_param = id;
        report.worst_index = i;
      }
      report.entries.push_back(std::move(entry));
    }
  }
  return report;
}

GradCheckReport grad_check(const LossBuilder& loss, const ParamSet& params, const GradCheckOptions& options) {
  return compare_gradients(loss, params, tape_gradients(loss, params), options);
}

}  // namespace disco
