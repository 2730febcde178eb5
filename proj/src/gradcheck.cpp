#include "protoncast/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "protoncast/error.hpp"
#include "protoncast/rng.hpp"

namespace protoncast {

GradCheckReport grad_check(const LossFunction& loss, const ParameterStore& params, double tolerance,
                           std::size_t probe_count, std::uint64_t seed, Stencil stencil) {
  if (probe_count == 0) throw Error(ErrorCode::InvalidArgument, "grad_check needs at least one probe");

  ParameterStore grads = params.zeros_like();
  loss(params, &grads);

  // Flat index → (name, offset).
  std::vector<std::pair<std::string, std::size_t>> slots;
  slots.reserve(params.total_size());
  for (const auto& [name, t] : params)
    for (std::size_t i = 0; i < t.size(); ++i) slots.emplace_back(name, i);

  std::vector<std::size_t> order(slots.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(seed);
  rng.shuffle(std::span<std::size_t>(order));
  order.resize(std::min(probe_count, order.size()));
  std::sort(order.begin(), order.end());

  GradCheckReport report;
  report.tolerance = tolerance;
  ParameterStore probe = params;
  for (std::size_t flat : order) {
    const auto& [name, offset] = slots[flat];
    double& theta = probe.at(name)[offset];
    const double original = theta;
    const double h = (stencil == Stencil::two_point ? 1e-6 : 1e-3) * std::max(1.0, std::abs(original));
    auto at = [&](double value) {
      theta = value;
      return loss(probe, nullptr);
    };
    // Differences use the representable step actually taken.
    const double hh = (original + h) - original;
    const double numeric =
        stencil == Stencil::two_point
            ? (at(original + hh) - at(original - hh)) / (2 * hh)
            : (at(original - 2 * hh) - 8 * at(original - hh) + 8 * at(original + hh) - at(original + 2 * hh)) /
                  (12 * hh);
    theta = original;

    const double analytic = grads.at(name)[offset];
    const double err = std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-12});
    ++report.probes;
    if (err > report.max_rel_error || report.probes == 1) {
      report.max_rel_error = err;
      report.worst_parameter = name;
      report.worst_index = offset;
      report.worst_analytic = analytic;
      report.worst_numeric = numeric;
    }
  }
  report.passed = report.max_rel_error < tolerance;
  return report;
}

}  // namespace protoncast
