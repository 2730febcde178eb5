#include "protoncast/adam.hpp"

#include <cmath>

namespace protoncast {

AdamState AdamState::for_params(const ParameterStore& params, AdamHyper hyper) {
  return AdamState{0, params.zeros_like(), params.zeros_like(), hyper};
}

void adam_step(ParameterStore& params, const ParameterStore& grads, AdamState& state) {
  params.require_same_layout(grads);
  params.require_same_layout(state.first_moment);
  params.require_same_layout(state.second_moment);

  state.step += 1;
  const auto& h = state.hyper;
  const double t = static_cast<double>(state.step);
  const double m_correction = 1.0 - std::pow(h.beta1, t);
  const double v_correction = 1.0 - std::pow(h.beta2, t);

  auto m_it = state.first_moment.begin();
  auto v_it = state.second_moment.begin();
  auto g_it = grads.begin();
  for (auto p_it = params.begin(); p_it != params.end(); ++p_it, ++m_it, ++v_it, ++g_it) {
    auto theta = p_it->second.data();
    auto m = m_it->second.data();
    auto v = v_it->second.data();
    const auto g = g_it->second.data();
    for (std::size_t i = 0; i < theta.size(); ++i) {
      if (g[i] == 0.0) continue;
      m[i] = h.beta1 * m[i] + (1.0 - h.beta1) * g[i];
      v[i] = h.beta2 * v[i] + (1.0 - h.beta2) * g[i] * g[i];
      const double m_hat = m[i] / m_correction;
      const double v_hat = v[i] / v_correction;
      theta[i] -= h.lr * m_hat / (std::sqrt(v_hat) + h.epsilon);
    }
  }
}

double global_norm(const ParameterStore& grads) {
  double s = 0.0;
  for (const auto& [name, g] : grads)
    for (double v : g.data()) s += v * v;
  return std::sqrt(s);
}

double clip_by_global_norm(ParameterStore& grads, double max_norm) {
  const double norm = global_norm(grads);
  if (norm > max_norm && norm > 0.0) {
    const double scale = max_norm / norm;
    for (auto& [name, g] : grads)
      for (double& v : g.data()) v *= scale;
  }
  return norm;
}

}  // namespace protoncast
