#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "protoncast/gradcheck.hpp"
#include "protoncast/seq2seq.hpp"

namespace protoncast {

struct ModelCheckCase {
  std::string label;  // "OS", "AR free-running", "AR teacher-forced"
  GradCheckReport report;
};

struct ModelCheckSummary {
  std::vector<ModelCheckCase> cases;
  double max_rel_error = 0.0;
  std::size_t probes = 0;
  bool passed = true;
};

// Gradient check of the complete network on a small P+XR model (H=8, E=4,
// sequence length 12) with a random sample, covering every decoding path.
ModelCheckSummary model_grad_check(std::uint64_t seed, std::size_t probes_per_case = 200,
                                   double tolerance = 1e-4, std::size_t hidden = 8, std::size_t embed = 4,
                                   std::size_t length = 12);

}  // namespace protoncast
