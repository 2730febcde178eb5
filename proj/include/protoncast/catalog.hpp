#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "protoncast/time.hpp"

namespace protoncast {

enum class Channel { proton, xray };

enum class SClass { S1, S2, S3, S4 };

std::string_view to_string(Channel channel);
std::string_view to_string(SClass s_class);
std::optional<SClass> parse_s_class(std::string_view text);

// Flux rows as read from a file, before cadence regularization.
struct RawSeries {
  Channel channel = Channel::proton;
  std::vector<Instant> times;
  std::vector<double> values;
};

// Uniformly sampled flux channel at kCadence. Values are finite and positive.
class FluxSeries {
 public:
  FluxSeries(Channel channel, Instant start, std::vector<double> values);

  Channel channel() const { return channel_; }
  Instant start() const { return start_; }
  Instant last() const { return time_at(values_.size() - 1); }
  std::size_t size() const { return values_.size(); }
  const std::vector<double>& values() const { return values_; }
  double operator[](std::size_t i) const { return values_[i]; }

  Instant time_at(std::size_t index) const { return start_ + kCadence * static_cast<long>(index); }
  // Index of an on-grid instant inside the series.
  std::optional<std::size_t> index_of(Instant t) const;

 private:
  Channel channel_;
  Instant start_;
  std::vector<double> values_;
};

// Inclusive sample-index interval [onset, end] during which flux stays above threshold.
struct EventSpan {
  std::size_t onset = 0;
  std::size_t end = 0;
};

struct EventRecord {
  std::string id;
  SClass s_class = SClass::S1;
  Instant flare_peak{};
  Instant onset{};
  Instant end{};
  FluxSeries proton;
  std::optional<FluxSeries> xray;

  std::size_t onset_index() const { return *proton.index_of(onset); }
  std::size_t end_index() const { return *proton.index_of(end); }
};

struct CatalogEntry {
  std::string id;
  SClass s_class = SClass::S1;
  Instant flare_peak{};
  std::optional<Instant> onset;
  std::optional<Instant> end;
  std::string proton_file;
  std::string xray_file;  // empty when the event has no X-ray channel
};

struct EventCatalog {
  std::vector<CatalogEntry> entries;
};

inline constexpr double kEventThreshold = 10.0;   // pfu
inline constexpr std::size_t kDefaultMaxGap = 6;  // samples (30 min)
inline constexpr std::size_t kDefaultMargin = 288;
inline constexpr long kOnsetTolerance = 2;         // cadence steps

RawSeries parse_flux_csv(std::string_view text, Channel channel);
std::string write_flux_csv(const FluxSeries& series);

FluxSeries resample_to_cadence(const RawSeries& raw, std::size_t max_gap = kDefaultMaxGap);

EventSpan detect_onset_end(const FluxSeries& proton, double threshold = kEventThreshold);

// Validates structure and margins. `margin` is the context (in samples) required on
// both sides of the event.
EventRecord load_event(const CatalogEntry& entry, FluxSeries proton, std::optional<FluxSeries> xray,
                       std::size_t margin = kDefaultMargin);

EventCatalog parse_catalog_csv(std::string_view text);
std::string write_catalog_csv(const EventCatalog& catalog);

std::string read_text_file(const std::filesystem::path& path);

// Reads, resamples and validates every entry; flux paths resolve relative to `base_dir`.
EventRecord load_event_files(const CatalogEntry& entry, const std::filesystem::path& base_dir,
                             std::size_t margin = kDefaultMargin, std::size_t max_gap = kDefaultMaxGap);
std::vector<EventRecord> load_catalog(const std::filesystem::path& catalog_path,
                                      std::size_t margin = kDefaultMargin,
                                      std::size_t max_gap = kDefaultMaxGap);

}  // namespace protoncast
