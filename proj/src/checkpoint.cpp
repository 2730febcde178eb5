#include <cstdio>
#include <json.hpp>

#include "protoncast/error.hpp"
#include "protoncast/io.hpp"
#include "protoncast/json_io.hpp"
#include "protoncast/trainer.hpp"

namespace protoncast {

namespace {

constexpr const char* kFormat = "protoncast-checkpoint";

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace

std::string serialize_checkpoint(const Checkpoint& ck) {
  ck.params.require_same_layout(param_layout(ck.config));
  std::string blob;
  blob.reserve(ck.params.total_size() * 8);
  for (const auto& [name, t] : ck.params) append_le_doubles(blob, t.data());

  nlohmann::json manifest;
  manifest["format"] = kFormat;
  manifest["version"] = kCheckpointVersion;
  manifest["config"] = to_json(ck.config);
  manifest["train"] = to_json(ck.train);
  manifest["meta"] = {{"epoch", ck.meta.epoch}, {"loss", ck.meta.loss}, {"preprocess", to_json(ck.meta.preprocess)}};
  manifest["parameter_count"] = ck.params.total_size();
  manifest["blob_bytes"] = blob.size();
  manifest["checksum_fnv1a64"] = hex64(fnv1a64(blob));
  return manifest.dump() + "\n" + blob;
}

Checkpoint parse_checkpoint(std::string_view bytes) {
  const auto nl = bytes.find('\n');
  if (nl == std::string_view::npos) throw Error(ErrorCode::CorruptCheckpoint, "missing manifest line");
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(bytes.substr(0, nl));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::CorruptCheckpoint, std::string("manifest is not JSON: ") + e.what());
  }
  if (manifest.value("format", std::string{}) != kFormat)
    throw Error(ErrorCode::CorruptCheckpoint, "not a checkpoint file");
  const int version = manifest.value("version", -1);
  if (version != kCheckpointVersion)
    throw Error(ErrorCode::VersionMismatch, "checkpoint version " + std::to_string(version) + ", expected " +
                                                std::to_string(kCheckpointVersion));
  Checkpoint ck;
  try {
    ck.config = model_config_from_json(manifest.at("config"));
    ck.train = train_spec_from_json(manifest.at("train"));
    const auto& meta = manifest.at("meta");
    ck.meta.epoch = meta.at("epoch").get<std::size_t>();
    ck.meta.loss = meta.at("loss").is_null() ? 0.0 : meta.at("loss").get<double>();
    ck.meta.preprocess = preprocess_spec_from_json(meta.at("preprocess"));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::CorruptCheckpoint, std::string("manifest fields: ") + e.what());
  }

  const std::string_view blob = bytes.substr(nl + 1);
  ck.params = param_layout(ck.config);
  const std::size_t expected = ck.params.total_size() * 8;
  if (blob.size() != expected || manifest.value("blob_bytes", std::size_t{0}) != expected)
    throw Error(ErrorCode::CorruptCheckpoint, "parameter blob is " + std::to_string(blob.size()) +
                                                  " bytes, config " + ck.config.structure() + " needs " +
                                                  std::to_string(expected));
  if (manifest.value("checksum_fnv1a64", std::string{}) != hex64(fnv1a64(blob)))
    throw Error(ErrorCode::CorruptCheckpoint, "checksum mismatch");

  std::size_t offset = 0;
  for (auto& [name, t] : ck.params) {
    const auto values = read_le_doubles(blob, offset, t.size());
    std::copy(values.begin(), values.end(), t.data().begin());
    offset += t.size() * 8;
  }
  return ck;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
  write_file_atomic(path, serialize_checkpoint(checkpoint));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return parse_checkpoint(read_text_file(path));
}

}  // namespace protoncast
