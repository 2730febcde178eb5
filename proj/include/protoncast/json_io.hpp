#pragma once

#include <json.hpp>

#include "protoncast/preprocess.hpp"
#include "protoncast/seq2seq.hpp"
#include "protoncast/trainer.hpp"

namespace protoncast {

// Readers fill absent keys with defaults and reject unknown enum spellings.
nlohmann::json to_json(const PreprocessSpec& spec);
PreprocessSpec preprocess_spec_from_json(const nlohmann::json& j, PreprocessSpec base = {});

nlohmann::json to_json(const ModelConfig& config);
ModelConfig model_config_from_json(const nlohmann::json& j);

nlohmann::json to_json(const TrainSpec& spec);
TrainSpec train_spec_from_json(const nlohmann::json& j, TrainSpec base = {});

}  // namespace protoncast
