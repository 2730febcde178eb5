#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "protoncast/catalog.hpp"
#include "protoncast/evaluate.hpp"
#include "protoncast/seq2seq.hpp"
#include "protoncast/synth.hpp"
#include "protoncast/trainer.hpp"

namespace protoncast {

struct SynthSource {
  std::uint64_t seed = 0;
  ClassMix mix;
  bool with_xray = true;
};

// Experiment description, read from a JSON document:
//
//   {
//     "data": {"catalog": "events/catalog.csv"}        or {"synth": {"seed": 1, "mix": {"S1": 4, "S2": 4}}},
//     "k": 4, "fold_seed": 0,
//     "strategies": ["P_orig_AR", "P_orig_OS"],
//     "structures": ["64-4", "32-8"],
//     "train": {"epochs": 50, "batch_size": 32, "lr": 0.001, "seed": 0},
//     "preprocess": {"half_window": 6, "log_floor": 0.001, "input_len": 288, "output_len": 288,
//                    "window_stride": 1},
//     "out": "results", "highlight_threshold": 0.31, "workers": 1
//   }
//
// Relative paths resolve against the config file's directory.
struct RunConfig {
  std::optional<std::filesystem::path> catalog;
  std::optional<SynthSource> synth;
  std::size_t k = 4;
  std::uint64_t fold_seed = 0;
  std::vector<Strategy> strategies;
  std::vector<std::pair<std::size_t, std::size_t>> structures;  // (H, E)
  TrainSpec train;
  std::size_t half_window = 6;
  double log_floor = 1e-3;
  std::size_t input_len = 288;
  std::size_t output_len = 288;
  std::size_t window_stride = 1;
  std::filesystem::path out = "results";
  double highlight_threshold = 0.31;
  std::size_t workers = 1;

  EvalOptions eval_options() const;
  ModelConfig model_config(const Strategy& strategy, std::size_t hidden, std::size_t embed) const;
  // Context required on both sides of each event.
  std::size_t margin() const { return std::max({input_len, output_len, std::size_t{1}}); }
  nlohmann::json data_json() const;
};

RunConfig parse_run_config(const nlohmann::json& doc, const std::filesystem::path& base_dir = ".");
RunConfig load_run_config(const std::filesystem::path& path);

ClassMix parse_class_mix(const nlohmann::json& j);
// "S1=20,S2=12" form used on the command line.
ClassMix parse_class_mix(std::string_view text);

std::vector<EventRecord> load_run_events(const RunConfig& config);

}  // namespace protoncast
