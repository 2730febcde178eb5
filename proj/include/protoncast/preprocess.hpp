#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "protoncast/catalog.hpp"
#include "protoncast/tensor.hpp"

namespace protoncast {

enum class Features { P, P_XR };
enum class Variant { orig, trend };

std::string_view to_string(Features f);
std::string_view to_string(Variant v);

struct PreprocessSpec {
  Features features = Features::P;
  Variant variant = Variant::orig;
  std::size_t half_window = 6;  // ±30 min at 5-min cadence
  double log_floor = 1e-3;
  std::size_t input_len = 288;
  std::size_t output_len = 288;

  std::size_t feature_count() const { return features == Features::P ? 1 : 2; }
  void validate() const;
};

// One training pair in log10 units. `input` is [input_len × F] with column 0 the
// proton channel; rows run from center − (input_len−1)·Δ to center.
struct Sample {
  std::string event_id;
  Instant center{};
  Tensor input;
  std::vector<double> target;

  // Last observed proton value (seeds decoding).
  double last_proton() const { return input.at(input.rows() - 1, 0); }
};

FluxSeries normalize_xray(const FluxSeries& series);
std::vector<double> log_transform(std::span<const double> values, double floor);
std::vector<double> trend_smooth(std::span<const double> values, std::size_t half_window);

// Full-length preprocessed channels of one event, aligned with its proton series.
struct PreparedChannels {
  std::vector<double> proton;
  std::vector<double> xray;  // empty for Features::P
};

PreparedChannels prepare_channels(const EventRecord& event, const PreprocessSpec& spec);

// One sample per cadence step from onset to end inclusive.
std::vector<Sample> make_windows(const EventRecord& event, const PreprocessSpec& spec);

// Builds the input window ending at `center_index` and up to `output_len` following
// target points (fewer when the series ends first).
Sample window_at(const EventRecord& event, const PreparedChannels& prepared, const PreprocessSpec& spec,
                 std::size_t center_index);

enum class Stratum { S1, S2, S3S4 };
Stratum stratum_of(SClass c);

struct FoldPlan {
  std::size_t k = 4;
  std::uint64_t seed = 0;
  std::map<std::string, std::size_t> assignment;

  std::vector<std::string> test_ids(std::size_t fold) const;
  std::vector<std::string> train_ids(std::size_t fold) const;
};

FoldPlan stratified_folds(std::span<const std::pair<std::string, SClass>> events, std::size_t k,
                          std::uint64_t seed);
FoldPlan stratified_folds(std::span<const EventRecord> events, std::size_t k, std::uint64_t seed);

// Sample store: `<id>.json` manifest plus `<id>.bin` holding little-endian doubles,
// per sample the row-major input followed by the target.
void write_sample_store(const std::filesystem::path& dir, const std::string& event_id,
                        std::span<const Sample> samples, const PreprocessSpec& spec);
std::vector<Sample> read_sample_store(const std::filesystem::path& dir, const std::string& event_id,
                                      PreprocessSpec* spec = nullptr);

}  // namespace protoncast
