#include "protoncast/trainer.hpp"

#include <chrono>
#include <cmath>
#include <json.hpp>

#include "protoncast/adam.hpp"
#include "protoncast/error.hpp"
#include "protoncast/ops.hpp"
#include "protoncast/rng.hpp"

namespace protoncast {

void TrainSpec::validate() const {
  if (epochs < 1) throw Error(ErrorCode::InvalidArgument, "epochs must be at least 1");
  if (batch_size < 1) throw Error(ErrorCode::InvalidArgument, "batch_size must be at least 1");
  if (!(lr > 0.0)) throw Error(ErrorCode::InvalidArgument, "learning rate must be positive");
  if (clip_norm && !(*clip_norm > 0.0)) throw Error(ErrorCode::InvalidArgument, "clip_norm must be positive");
}

std::vector<std::size_t> epoch_order(std::size_t sample_count, std::uint64_t seed, std::size_t epoch) {
  std::vector<std::size_t> order(sample_count);
  for (std::size_t i = 0; i < sample_count; ++i) order[i] = i;
  Rng rng(Rng::derive(seed, 0x5348554646ULL + epoch));
  rng.shuffle(std::span<std::size_t>(order));
  return order;
}

TrainResult train(std::span<const Sample> samples, const ModelConfig& config, const TrainSpec& spec,
                  const EpochCallback& on_epoch) {
  spec.validate();
  config.validate();
  if (samples.empty()) throw Error(ErrorCode::InvalidArgument, "no training samples");
  for (const auto& s : samples) check_sample(s, config, true);

  TrainResult result{init_params(config, spec.seed), {}};
  ParameterStore& params = result.params;
  ParameterStore grads = params.zeros_like();
  AdamState adam = AdamState::for_params(params, AdamHyper{spec.lr});
  const bool teacher = spec.teacher_forcing && config.mode == Mode::AR;

  // The pass binds to params by address; Adam updates them in place.
  Seq2SeqPass pass(params, config);
  std::vector<double> d_pred(config.output_len);

  for (std::size_t epoch = 1; epoch <= spec.epochs; ++epoch) {
    const auto started = std::chrono::steady_clock::now();
    const auto order = epoch_order(samples.size(), spec.seed, epoch);
    double loss_sum = 0.0;
    std::size_t batch_index = 0;
    for (std::size_t first = 0; first < order.size(); first += spec.batch_size, ++batch_index) {
      const std::size_t last = std::min(order.size(), first + spec.batch_size);
      const double scale = 1.0 / static_cast<double>(last - first);
      grads.set_zero();
      double batch_loss = 0.0;
      for (std::size_t k = first; k < last; ++k) {
        const Sample& s = samples[order[k]];
        const auto& pred = pass.run(s.input, teacher ? std::optional<std::span<const double>>(s.target) : std::nullopt);
        const double loss = ops::mse_loss(pred, s.target);
        std::fill(d_pred.begin(), d_pred.end(), 0.0);
        ops::mse_loss_backward(pred, s.target, scale, d_pred);
        pass.backward(d_pred, grads);
        batch_loss += loss;
      }
      if (!std::isfinite(batch_loss) || !std::isfinite(global_norm(grads)))
        throw Error(ErrorCode::NonFiniteLoss,
                    "epoch " + std::to_string(epoch) + ", batch " + std::to_string(batch_index));
      if (spec.clip_norm) clip_by_global_norm(grads, *spec.clip_norm);
      adam_step(params, grads, adam);
      loss_sum += batch_loss;
    }
    const double mean = loss_sum / static_cast<double>(samples.size());
    result.history.epoch_loss.push_back(mean);
    if (on_epoch) {
      const std::chrono::duration<double> wall = std::chrono::steady_clock::now() - started;
      on_epoch({epoch, mean, wall.count()});
    }
  }
  return result;
}

std::string epoch_log_line(const EpochRecord& r) {
  return nlohmann::json{{"epoch", r.epoch}, {"mean_loss", r.mean_loss}, {"wall_seconds", r.wall_seconds}}.dump();
}

}  // namespace protoncast
