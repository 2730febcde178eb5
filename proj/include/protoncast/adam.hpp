#pragma once

#include <cstdint>

#include "protoncast/tensor.hpp"

namespace protoncast {

struct AdamHyper {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  std::uint64_t step = 0;
  ParameterStore first_moment;
  ParameterStore second_moment;
  AdamHyper hyper;

  static AdamState for_params(const ParameterStore& params, AdamHyper hyper = {});
};

// Bias-corrected Adam. Entries whose gradient is exactly zero are left untouched
// (value and both moments); the step counter always advances.
void adam_step(ParameterStore& params, const ParameterStore& grads, AdamState& state);

double global_norm(const ParameterStore& grads);
// Rescales grads so their global L2 norm is at most max_norm. Returns the pre-clip norm.
double clip_by_global_norm(ParameterStore& grads, double max_norm);

}  // namespace protoncast
