#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "protoncast/preprocess.hpp"
#include "protoncast/seq2seq.hpp"
#include "protoncast/tensor.hpp"

namespace protoncast {

struct TrainSpec {
  std::size_t epochs = 50;
  std::size_t batch_size = 32;
  double lr = 1e-3;
  std::uint64_t seed = 0;
  std::optional<double> clip_norm;
  bool teacher_forcing = true;  // only meaningful for AR models

  void validate() const;
  friend bool operator==(const TrainSpec&, const TrainSpec&) = default;
};

struct TrainHistory {
  std::vector<double> epoch_loss;  // mean per-sample MSE in log10 units
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double mean_loss = 0.0;
  double wall_seconds = 0.0;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

struct TrainResult {
  ParameterStore params;
  TrainHistory history;
};

// Sample visiting order of one epoch; depends only on (seed, epoch).
std::vector<std::size_t> epoch_order(std::size_t sample_count, std::uint64_t seed, std::size_t epoch);

TrainResult train(std::span<const Sample> samples, const ModelConfig& config, const TrainSpec& spec,
                  const EpochCallback& on_epoch = {});

// One line of the training log (JSON, no trailing newline).
std::string epoch_log_line(const EpochRecord& record);

// ---------------------------------------------------------------------------

inline constexpr int kCheckpointVersion = 1;

struct CheckpointMeta {
  std::size_t epoch = 0;
  double loss = 0.0;
  PreprocessSpec preprocess;
};

struct Checkpoint {
  ParameterStore params;
  ModelConfig config;
  TrainSpec train;
  CheckpointMeta meta;
};

// One JSON manifest line, then the parameters as little-endian doubles in
// lexicographic name order.
std::string serialize_checkpoint(const Checkpoint& checkpoint);
Checkpoint parse_checkpoint(std::string_view bytes);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace protoncast
