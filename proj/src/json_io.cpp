#include "protoncast/json_io.hpp"

#include "protoncast/error.hpp"

namespace protoncast {

namespace {

Features features_from(const std::string& s) {
  if (s == "P") return Features::P;
  if (s == "P+XR") return Features::P_XR;
  throw Error(ErrorCode::InvalidConfig, "unknown feature set '" + s + "'");
}

Variant variant_from(const std::string& s) {
  if (s == "orig") return Variant::orig;
  if (s == "trend") return Variant::trend;
  throw Error(ErrorCode::InvalidConfig, "unknown variant '" + s + "'");
}

Mode mode_from(const std::string& s) {
  if (s == "AR") return Mode::AR;
  if (s == "OS") return Mode::OS;
  throw Error(ErrorCode::InvalidConfig, "unknown mode '" + s + "'");
}

template <typename T>
void read_opt(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key) && !j.at(key).is_null()) out = j.at(key).get<T>();
}

}  // namespace

nlohmann::json to_json(const PreprocessSpec& s) {
  return {{"features", std::string(to_string(s.features))},
          {"variant", std::string(to_string(s.variant))},
          {"half_window", s.half_window},
          {"log_floor", s.log_floor},
          {"input_len", s.input_len},
          {"output_len", s.output_len}};
}

PreprocessSpec preprocess_spec_from_json(const nlohmann::json& j, PreprocessSpec s) {
  try {
    if (j.contains("features")) s.features = features_from(j.at("features").get<std::string>());
    if (j.contains("variant")) s.variant = variant_from(j.at("variant").get<std::string>());
    read_opt(j, "half_window", s.half_window);
    read_opt(j, "log_floor", s.log_floor);
    read_opt(j, "input_len", s.input_len);
    read_opt(j, "output_len", s.output_len);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, std::string("preprocess spec: ") + e.what());
  }
  s.validate();
  return s;
}

nlohmann::json to_json(const ModelConfig& c) {
  return {{"hidden", c.hidden},
          {"embed", c.embed},
          {"features", std::string(to_string(c.features))},
          {"variant", std::string(to_string(c.variant))},
          {"mode", std::string(to_string(c.mode))},
          {"input_len", c.input_len},
          {"output_len", c.output_len}};
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  try {
    c.hidden = j.at("hidden").get<std::size_t>();
    c.embed = j.at("embed").get<std::size_t>();
    c.features = features_from(j.at("features").get<std::string>());
    c.variant = variant_from(j.at("variant").get<std::string>());
    c.mode = mode_from(j.at("mode").get<std::string>());
    c.input_len = j.at("input_len").get<std::size_t>();
    c.output_len = j.at("output_len").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, std::string("model config: ") + e.what());
  }
  c.validate();
  return c;
}

nlohmann::json to_json(const TrainSpec& s) {
  nlohmann::json j = {{"epochs", s.epochs},
                      {"batch_size", s.batch_size},
                      {"lr", s.lr},
                      {"seed", s.seed},
                      {"teacher_forcing", s.teacher_forcing}};
  j["clip_norm"] = s.clip_norm ? nlohmann::json(*s.clip_norm) : nlohmann::json(nullptr);
  return j;
}

TrainSpec train_spec_from_json(const nlohmann::json& j, TrainSpec s) {
  try {
    read_opt(j, "epochs", s.epochs);
    read_opt(j, "batch_size", s.batch_size);
    read_opt(j, "lr", s.lr);
    read_opt(j, "seed", s.seed);
    read_opt(j, "teacher_forcing", s.teacher_forcing);
    if (j.contains("clip_norm"))
      s.clip_norm = j.at("clip_norm").is_null() ? std::nullopt : std::optional<double>(j.at("clip_norm").get<double>());
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, std::string("train spec: ") + e.what());
  }
  s.validate();
  return s;
}

}  // namespace protoncast
