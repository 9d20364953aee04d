#include "disco/adam.hpp"

#include <cmath>

namespace disco {

void adam_step(ParamSet& params, const Gradients& grads, AdamState& state) {
  for (const auto& [id, grad] : grads) {
    auto it = params.find(id);
    if (it == params.end()) throw ShapeError("adam_step: gradient for unknown parameter '" + id + "'");
    require_same_shape(it->second, grad, "adam_step");
    for (auto* moments : {&state.first_moment, &state.second_moment}) {
      auto m = moments->find(id);
      if (m == moments->end()) {
        moments->emplace(id, Tensor(grad.shape()));
      } else {
        require_same_shape(m->second, grad, "adam_step");
      }
    }
  }

  const auto& opt = state.options;
  const std::uint64_t t = state.step + 1;
  const double correction1 = 1.0 - std::pow(opt.beta1, static_cast<double>(t));
  const double correction2 = 1.0 - std::pow(opt.beta2, static_cast<double>(t));

  for (const auto& [id, grad] : grads) {
    auto p = params.at(id).data();
    auto m = state.first_moment.at(id).data();
    auto v = state.second_moment.at(id).data();
    const auto g = grad.data();
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = opt.beta1 * m[i] + (1.0 - opt.beta1) * g[i];
      v[i] = opt.beta2 * v[i] + (1.0 - opt.beta2) * g[i] * g[i];
      const double m_hat = m[i] / correction1;
      const double v_hat = v[i] / correction2;
      p[i] -= opt.learning_rate * m_hat / (std::sqrt(v_hat) + opt.epsilon);
    }
  }
  state.step = t;
}

}  // namespace disco
