#include "protoncast/model_check.hpp"

#include <algorithm>

#include "protoncast/rng.hpp"

namespace protoncast {

namespace {

Sample random_sample(const ModelConfig& cfg, Rng& rng) {
  Sample s;
  s.event_id = "gradcheck";
  s.input = Tensor({cfg.input_len, cfg.feature_count()});
  for (double& v : s.input.data()) v = 1.0 + 0.5 * rng.normal();
  s.target.resize(cfg.output_len);
  for (double& v : s.target) v = 1.0 + 0.5 * rng.normal();
  return s;
}

}  // namespace

ModelCheckSummary model_grad_check(std::uint64_t seed, std::size_t probes_per_case, double tolerance,
                                   std::size_t hidden, std::size_t embed, std::size_t length) {
  struct Path {
    const char* label;
    Mode mode;
    bool teacher;
  };
  const Path paths[] = {{"OS", Mode::OS, false}, {"AR free-running", Mode::AR, false}, {"AR teacher-forced", Mode::AR, true}};

  ModelCheckSummary summary;
  std::uint64_t stream = 0;
  for (const auto& path : paths) {
    const ModelConfig cfg = make_config({Features::P_XR, Variant::orig, path.mode}, hidden, embed, length, length);
    Rng rng(Rng::derive(seed, stream++));
    const Sample sample = random_sample(cfg, rng);
    const ParameterStore params = init_params(cfg, rng.next());
    LossFunction loss = [&](const ParameterStore& p, ParameterStore* grads) {
      if (grads) return loss_and_gradient(sample, p, cfg, path.teacher, *grads);
      const auto pred = forward(sample, p, cfg, path.teacher);
      double sum = 0.0;
      for (std::size_t i = 0; i < pred.size(); ++i) sum += (pred[i] - sample.target[i]) * (pred[i] - sample.target[i]);
      return sum / static_cast<double>(pred.size());
    };
    ModelCheckCase c{path.label, grad_check(loss, params, tolerance, probes_per_case, rng.next())};
    summary.max_rel_error = std::max(summary.max_rel_error, c.report.max_rel_error);
    summary.probes += c.report.probes;
    summary.passed = summary.passed && c.report.passed;
    summary.cases.push_back(std::move(c));
  }
  return summary;
}

}  // namespace protoncast
