#pragma once

#include <cstdint>
#include <functional>
#include <string>

#include "protoncast/tensor.hpp"

namespace protoncast {

// Returns the loss at `params`; when `grads` is non-null it also receives the
// analytic gradient (already zeroed by the caller).
using LossFunction = std::function<double(const ParameterStore& params, ParameterStore* grads)>;

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst_parameter;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t probes = 0;
  double tolerance = 0.0;
  bool passed = true;
};

// two_point: (f(θ+h) − f(θ−h)) / 2h with h = 1e-6·max(1, |θ|).
// five_point: fourth-order central stencil with h = 1e-3·max(1, |θ|); its
// roundoff is far lower, which matters for gradients near 1e-8.
enum class Stencil { two_point, five_point };

// Compares analytic gradients with central differences on `probe_count`
// randomly chosen scalars (all of them when probe_count exceeds the parameter
// count). error = |a − d| / max(|a|, |d|, 1e-12).
GradCheckReport grad_check(const LossFunction& loss, const ParameterStore& params, double tolerance,
                           std::size_t probe_count, std::uint64_t seed = 0, Stencil stencil = Stencil::five_point);

}  // namespace protoncast
